#pragma once

#include "pssim/types.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace pssim {

// ---------------------------------------------------------------------------
// Pure update steps. Each mutates (w, u) in place; the stateful ServerRule
// adapters below wire them into the event loop.
// ---------------------------------------------------------------------------

/// Bucket index of parameter iteration j with bucket size K: 0 for j = 0,
/// otherwise ceil(j / K). Bucket i >= 1 covers iterations (i-1)K+1 .. iK.
std::int64_t bucket_index(std::int64_t j, int K);

/// beta^e for integer e >= 0 with the exact conventions beta^0 = 1 and
/// 0^e = 0 for e > 0 (so beta = 0 collapses to plain SGD bit-for-bit).
double beta_power(double beta, std::int64_t e);

/// Geometric compensation weight sum_{j=0}^{delta} beta^j, in closed form
/// (1 - beta^{delta+1}) / (1 - beta). Exactly 1 for delta = 0 or beta = 0.
double compensation_coefficient(double beta, std::int64_t delta);

/// Ordered-momentum state: server momentum plus the head-bucket index b,
/// the newest bucket whose gradients are applied at full weight.
struct MomentumState {
  Vec u;
  std::int64_t b = 0;
};

/// One ordered-momentum server iteration. If `head_advance` (the waiting set
/// was empty at the top of iteration t and ceil(t/K) > b) the head moves
/// first: w -= beta*u, u *= beta, b += 1. The arriving gradient then joins
/// bucket(msg.ite): u gains eta*beta^delta*g and w drops
/// eta*(sum_{j<=delta} beta^j)*g, where delta = b - bucket(msg.ite).
/// Throws OptimError if the gradient's bucket is ahead of the head.
void ormo_step(Vec& w, MomentumState& m, const GradientMsg& msg, double eta, double beta, int K,
               bool head_advance);

/// Plain asynchronous SGD: w -= eta * g.
void asgd_step(Vec& w, const GradientMsg& msg, double eta);

/// Momentum applied to stale gradients as-is: u = beta*u + eta*g, w -= u.
void naive_asgdm_step(Vec& w, Vec& u, const GradientMsg& msg, double eta, double beta);

/// Worker-side half of the shifted / local-momentum rule:
/// u_local = beta*u_local + eta*g. The worker transmits u_local and the
/// server applies it verbatim (w -= u_local).
void local_momentum_update(Vec& u_local, const Vec& grad, double eta, double beta);

/// Synchronous SGD with global momentum, one gradient at a time. When
/// `barrier` (the bucket boundary, where the waiting set was empty) the
/// momentum head moves first: w -= beta*u, u *= beta. Every arrival then
/// does w -= eta*g, u += eta*g.
void ssgdm_global_step(Vec& w, Vec& u, const GradientMsg& msg, double eta, double beta, bool barrier);

/// Reference mini-batch SGD with momentum on the mean gradient:
/// w -= beta*u + eta_tilde*mean_grad; u = beta*u + eta_tilde*mean_grad.
void minibatch_sgdm_step(Vec& w, Vec& u, const Vec& mean_grad, double eta_tilde, double beta);

/// Effective learning rate at iteration t: eta times every schedule
/// multiplier whose iteration is <= t.
double apply_lr_schedule(const HyperParams& h, std::int64_t t);

// ---------------------------------------------------------------------------
// Stateful server rules driven by the engine.
// ---------------------------------------------------------------------------

enum class RuleKind { asgd, naive_asgdm, shifted, ssgd, ssgdm_global, ssgdm_local, ormo };

std::string to_string(RuleKind k);
RuleKind rule_kind_from_string(const std::string& name);

/// Schedulers a rule is defined for. `ormo` accepts both (its synchronous
/// degeneration is a supported identity); the rest are scheduler-specific.
bool rule_allows(RuleKind k, Scheduler s);

/// Default scheduler for a rule when the config does not pin one.
Scheduler default_scheduler(RuleKind k);

class ServerRule {
 public:
  virtual ~ServerRule() = default;

  /// Called at the top of iteration t, before the next gradient is received.
  /// `waiting_set_empty` reports whether every worker was computing.
  virtual void begin_iteration(std::int64_t t, bool waiting_set_empty);

  /// Transforms the raw gradient into the payload the worker transmits.
  /// Identity for server-side rules; the shifted/local-momentum rule folds
  /// the gradient into the worker's local momentum here.
  virtual Vec worker_payload(int worker, Vec grad, double eta_eff);

  /// Applies the payload delivered at iteration t.
  virtual void receive(const GradientMsg& msg, std::int64_t t, double eta_eff) = 0;

  virtual const Vec& param() const = 0;

  /// Server momentum, when the rule maintains one.
  virtual const Vec* momentum() const;

  /// Ordered-momentum head-bucket index, when the rule maintains one.
  virtual std::optional<std::int64_t> head_bucket() const;
};

/// Builds the rule `kind` starting from parameter w0. `beta` is ignored by
/// the momentum-free rules; `K` is the cluster size (bucket size).
std::unique_ptr<ServerRule> make_rule(RuleKind kind, const Vec& w0, double beta, int K);

}  // namespace pssim
