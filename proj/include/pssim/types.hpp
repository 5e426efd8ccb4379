#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pssim {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (CLI exit code 2).
struct ConfigError : Error {
  using Error::Error;
};

/// Scheduler/event-loop contract violations (deadlock, illegal script, ...).
struct EngineError : Error {
  using Error::Error;
};

/// Update-rule contract violations (e.g. a gradient from a future bucket).
struct OptimError : Error {
  using Error::Error;
};

/// Gradient-oracle misuse (out-of-range sample index, dimension mismatch).
struct ProblemError : Error {
  using Error::Error;
};

/// An identity check failed (CLI exit code 3).
struct VerifyError : Error {
  using Error::Error;
};

enum class Scheduler { synchronous, asynchronous };

std::string to_string(Scheduler s);
Scheduler scheduler_from_string(const std::string& name);

/// A worker's stochastic gradient together with the iteration index of the
/// parameter it was computed on.
struct GradientMsg {
  Vec grad;
  std::int64_t ite = 0;
  int worker = 0;
};

/// One server iteration: who delivered, how stale the gradient was, and when.
struct TraceRecord {
  std::int64_t t = 0;
  int worker = 0;
  std::int64_t ite = 0;
  std::int64_t tau = 0;
  double sim_time = 0.0;
};

struct HyperParams {
  double eta = 0.0;
  double beta = 0.0;
  int workers = 1;
  /// (iteration, multiplier) pairs, iterations strictly increasing. The
  /// effective learning rate at t is eta times all multipliers with
  /// schedule iteration <= t.
  std::vector<std::pair<std::int64_t, double>> lr_schedule;
};

inline void validate(const HyperParams& h) {
  if (!(h.eta > 0.0)) throw ConfigError("eta must be > 0");
  if (!(h.beta >= 0.0 && h.beta < 1.0)) throw ConfigError("beta must be in [0,1)");
  if (h.workers < 1) throw ConfigError("worker count must be >= 1");
  std::int64_t prev = -1;
  for (const auto& [it, mult] : h.lr_schedule) {
    if (it <= prev) throw ConfigError("lr_schedule iterations must be strictly increasing");
    if (!(mult > 0.0)) throw ConfigError("lr_schedule multipliers must be > 0");
    prev = it;
  }
}

}  // namespace pssim
