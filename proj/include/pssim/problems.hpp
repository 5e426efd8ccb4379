#pragma once

#include "pssim/types.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pssim {

enum class ProblemKind { noisy_quadratic, logistic_regression, two_layer_net };

std::string to_string(ProblemKind k);
ProblemKind problem_kind_from_string(const std::string& name);

/// Everything needed to regenerate a problem instance from scratch. Datasets
/// are generated, never loaded from disk; dump_dataset exists for inspection.
struct ProblemSpec {
  ProblemKind kind = ProblemKind::noisy_quadratic;
  Index dim = 0;  // parameter dimension; derived from the layer sizes for the net
  Index n = 0;    // dataset size
  std::uint64_t seed = 12345;
  double lambda = 0.0;  // L2 penalty added to every loss

  // noisy_quadratic: F(w) = 0.5 w'Aw, instance gradients Aw + eps_i with the
  // eps_i centered exactly and scaled so mean ||eps_i||^2 = noise_sigma^2.
  double noise_sigma = 0.0;
  double smoothness = 1.0;  // largest eigenvalue of A
  double cond = 10.0;       // ratio of largest to smallest eigenvalue

  // logistic_regression: unit-norm inputs, labels from a random separator
  // with this flip probability.
  double label_flip = 0.05;

  // two_layer_net: y = w2' tanh(W1 x + b1) + b2 regression onto a random
  // teacher of the same shape, targets perturbed by N(0, target_noise^2).
  Index net_input = 0;
  Index net_hidden = 0;
  double target_noise = 0.1;
};

void validate(const ProblemSpec& s);

/// A finite-sum objective F(w) = (1/n) sum_i f_i(w) with exact full-batch
/// oracles and pure mini-batch oracles (same inputs, same bits).
class Problem {
 public:
  virtual ~Problem() = default;

  const ProblemSpec& spec() const { return spec_; }
  Index dim() const { return spec_.dim; }
  Index size() const { return spec_.n; }

  virtual double full_loss(const Vec& w) const = 0;
  virtual Vec full_gradient(const Vec& w) const = 0;

  /// Mean instance gradient over `sample` (indices into the dataset, with
  /// repetition allowed). Throws ProblemError on an out-of-range index, an
  /// empty sample, or a dimension mismatch.
  virtual Vec stochastic_grad(const Vec& w, std::span<const std::int32_t> sample) const = 0;

  /// Deterministic starting point for optimization runs.
  virtual Vec initial_param() const = 0;

  /// Smoothness constant L of F: analytic where available, otherwise a
  /// power-iteration estimate of the largest Hessian eigenvalue at the
  /// initial point.
  virtual double smoothness() const = 0;

  /// One dataset row for CSV export, matching dataset_columns().
  virtual std::vector<double> dataset_row(Index i) const = 0;
  virtual std::vector<std::string> dataset_columns() const = 0;

 protected:
  explicit Problem(ProblemSpec spec) : spec_(std::move(spec)) {}
  void check_param(const Vec& w) const;
  void check_sample(std::span<const std::int32_t> sample) const;

  ProblemSpec spec_;
};

std::unique_ptr<Problem> make_problem(const ProblemSpec& spec);

/// Empirical stand-ins for the analysis constants, from observed
/// (parameter, stochastic gradient) pairs: sigma2_hat is the largest observed
/// ||g - F'(w)||^2, g2_hat the largest observed ||g||^2, and smoothness is
/// the problem's L.
struct AssumptionEstimates {
  double sigma2_hat = 0.0;
  double g2_hat = 0.0;
  double smoothness = 0.0;
};

AssumptionEstimates assumption_constants(const Problem& p,
                                         std::span<const std::pair<Vec, Vec>> observations);

}  // namespace pssim
