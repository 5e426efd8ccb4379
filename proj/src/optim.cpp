#include "pssim/optim.hpp"

#include <cmath>

namespace pssim {

std::int64_t bucket_index(std::int64_t j, int K) {
  if (j < 0) throw OptimError("parameter iteration index must be >= 0");
  if (K < 1) throw OptimError("bucket size K must be >= 1");
  if (j == 0) return 0;
  return (j + K - 1) / K;  // ceil(j / K) for j >= 1
}

double beta_power(double beta, std::int64_t e) {
  if (e < 0) throw OptimError("beta exponent must be >= 0");
  if (e == 0) return 1.0;
  if (beta == 0.0) return 0.0;
  // Exponentiation by squaring: deterministic and exact at e = 1.
  double base = beta;
  double acc = 1.0;
  auto n = static_cast<std::uint64_t>(e);
  while (n > 0) {
    if (n & 1) acc *= base;
    n >>= 1;
    if (n) base *= base;
  }
  return acc;
}

double compensation_coefficient(double beta, std::int64_t delta) {
  if (delta < 0) throw OptimError("bucket gap must be >= 0");
  if (delta == 0 || beta == 0.0) return 1.0;
  return (1.0 - beta_power(beta, delta + 1)) / (1.0 - beta);
}

void ormo_step(Vec& w, MomentumState& m, const GradientMsg& msg, double eta, double beta, int K,
               bool head_advance) {
  if (head_advance) {
    w -= beta * m.u;
    m.u *= beta;
    ++m.b;
  }
  const std::int64_t delta = m.b - bucket_index(msg.ite, K);
  if (delta < 0) {
    throw OptimError("gradient from bucket " + std::to_string(bucket_index(msg.ite, K)) +
                     " is ahead of head bucket " + std::to_string(m.b));
  }
  m.u += (eta * beta_power(beta, delta)) * msg.grad;
  w -= (eta * compensation_coefficient(beta, delta)) * msg.grad;
}

void asgd_step(Vec& w, const GradientMsg& msg, double eta) { w -= eta * msg.grad; }

void naive_asgdm_step(Vec& w, Vec& u, const GradientMsg& msg, double eta, double beta) {
  u = beta * u + eta * msg.grad;
  w -= u;
}

void local_momentum_update(Vec& u_local, const Vec& grad, double eta, double beta) {
  u_local = beta * u_local + eta * grad;
}

void ssgdm_global_step(Vec& w, Vec& u, const GradientMsg& msg, double eta, double beta, bool barrier) {
  if (barrier) {
    w -= beta * u;
    u *= beta;
  }
  w -= eta * msg.grad;
  u += eta * msg.grad;
}

void minibatch_sgdm_step(Vec& w, Vec& u, const Vec& mean_grad, double eta_tilde, double beta) {
  w -= beta * u + eta_tilde * mean_grad;
  u = beta * u + eta_tilde * mean_grad;
}

double apply_lr_schedule(const HyperParams& h, std::int64_t t) {
  double eta = h.eta;
  for (const auto& [it, mult] : h.lr_schedule) {
    if (it > t) break;
    eta *= mult;
  }
  return eta;
}

std::string to_string(RuleKind k) {
  switch (k) {
    case RuleKind::asgd: return "asgd";
    case RuleKind::naive_asgdm: return "naive_asgdm";
    case RuleKind::shifted: return "shifted";
    case RuleKind::ssgd: return "ssgd";
    case RuleKind::ssgdm_global: return "ssgdm_global";
    case RuleKind::ssgdm_local: return "ssgdm_local";
    case RuleKind::ormo: return "ormo";
  }
  throw Error("unreachable rule kind");
}

RuleKind rule_kind_from_string(const std::string& name) {
  if (name == "asgd") return RuleKind::asgd;
  if (name == "naive_asgdm") return RuleKind::naive_asgdm;
  if (name == "shifted") return RuleKind::shifted;
  if (name == "ssgd") return RuleKind::ssgd;
  if (name == "ssgdm_global") return RuleKind::ssgdm_global;
  if (name == "ssgdm_local") return RuleKind::ssgdm_local;
  if (name == "ormo") return RuleKind::ormo;
  throw ConfigError("unknown optimizer '" + name +
                    "' (expected asgd|naive_asgdm|shifted|ssgd|ssgdm_global|ssgdm_local|ormo)");
}

bool rule_allows(RuleKind k, Scheduler s) {
  switch (k) {
    case RuleKind::asgd:
    case RuleKind::naive_asgdm:
    case RuleKind::shifted:
      return s == Scheduler::asynchronous;
    case RuleKind::ssgd:
    case RuleKind::ssgdm_global:
    case RuleKind::ssgdm_local:
      return s == Scheduler::synchronous;
    case RuleKind::ormo:
      return true;
  }
  throw Error("unreachable rule kind");
}

Scheduler default_scheduler(RuleKind k) {
  return rule_allows(k, Scheduler::asynchronous) ? Scheduler::asynchronous : Scheduler::synchronous;
}

void ServerRule::begin_iteration(std::int64_t, bool) {}

Vec ServerRule::worker_payload(int, Vec grad, double) { return grad; }

const Vec* ServerRule::momentum() const { return nullptr; }

std::optional<std::int64_t> ServerRule::head_bucket() const { return std::nullopt; }

namespace {

class AsgdRule final : public ServerRule {
 public:
  explicit AsgdRule(const Vec& w0) : w_(w0) {}
  void receive(const GradientMsg& msg, std::int64_t, double eta_eff) override {
    asgd_step(w_, msg, eta_eff);
  }
  const Vec& param() const override { return w_; }

 private:
  Vec w_;
};

class NaiveAsgdmRule final : public ServerRule {
 public:
  NaiveAsgdmRule(const Vec& w0, double beta) : w_(w0), u_(Vec::Zero(w0.size())), beta_(beta) {}
  void receive(const GradientMsg& msg, std::int64_t, double eta_eff) override {
    naive_asgdm_step(w_, u_, msg, eta_eff, beta_);
  }
  const Vec& param() const override { return w_; }
  const Vec* momentum() const override { return &u_; }

 private:
  Vec w_;
  Vec u_;
  double beta_;
};

// Shifted momentum (asynchronous) and local-momentum SSGD (synchronous):
// each worker keeps u^k and transmits it in place of the gradient.
class LocalMomentumRule final : public ServerRule {
 public:
  LocalMomentumRule(const Vec& w0, double beta, int K)
      : w_(w0), locals_(static_cast<std::size_t>(K), Vec::Zero(w0.size())), beta_(beta) {}
  Vec worker_payload(int worker, Vec grad, double eta_eff) override {
    Vec& u = locals_.at(static_cast<std::size_t>(worker));
    local_momentum_update(u, grad, eta_eff, beta_);
    return u;
  }
  void receive(const GradientMsg& msg, std::int64_t, double) override { w_ -= msg.grad; }
  const Vec& param() const override { return w_; }

 private:
  Vec w_;
  std::vector<Vec> locals_;
  double beta_;
};

class SsgdmGlobalRule final : public ServerRule {
 public:
  SsgdmGlobalRule(const Vec& w0, double beta)
      : w_(w0), u_(Vec::Zero(w0.size())), beta_(beta) {}
  void begin_iteration(std::int64_t, bool waiting_set_empty) override {
    barrier_ = waiting_set_empty;
  }
  void receive(const GradientMsg& msg, std::int64_t, double eta_eff) override {
    ssgdm_global_step(w_, u_, msg, eta_eff, beta_, barrier_);
    barrier_ = false;
  }
  const Vec& param() const override { return w_; }
  const Vec* momentum() const override { return &u_; }

 private:
  Vec w_;
  Vec u_;
  double beta_;
  bool barrier_ = false;
};

class OrmoRule final : public ServerRule {
 public:
  OrmoRule(const Vec& w0, double beta, int K)
      : w_(w0), m_{Vec::Zero(w0.size()), 0}, beta_(beta), K_(K) {}
  void begin_iteration(std::int64_t t, bool waiting_set_empty) override {
    head_advance_ = waiting_set_empty && (t + K_ - 1) / K_ > m_.b;  // ceil(t/K) > b, t >= 0
  }
  void receive(const GradientMsg& msg, std::int64_t t, double eta_eff) override {
    try {
      ormo_step(w_, m_, msg, eta_eff, beta_, K_, head_advance_);
    } catch (const OptimError& e) {
      throw OptimError("iteration " + std::to_string(t) + ": " + e.what());
    }
    head_advance_ = false;
  }
  const Vec& param() const override { return w_; }
  const Vec* momentum() const override { return &m_.u; }
  std::optional<std::int64_t> head_bucket() const override { return m_.b; }

 private:
  Vec w_;
  MomentumState m_;
  double beta_;
  int K_;
  bool head_advance_ = false;
};

}  // namespace

std::unique_ptr<ServerRule> make_rule(RuleKind kind, const Vec& w0, double beta, int K) {
  if (w0.size() == 0) throw OptimError("initial parameter must be non-empty");
  if (K < 1) throw OptimError("worker count K must be >= 1");
  if (!(beta >= 0.0 && beta < 1.0)) throw OptimError("beta must be in [0,1)");
  switch (kind) {
    case RuleKind::asgd:
    case RuleKind::ssgd:
      return std::make_unique<AsgdRule>(w0);
    case RuleKind::naive_asgdm:
      return std::make_unique<NaiveAsgdmRule>(w0, beta);
    case RuleKind::shifted:
    case RuleKind::ssgdm_local:
      return std::make_unique<LocalMomentumRule>(w0, beta, K);
    case RuleKind::ssgdm_global:
      return std::make_unique<SsgdmGlobalRule>(w0, beta);
    case RuleKind::ormo:
      return std::make_unique<OrmoRule>(w0, beta, K);
  }
  throw Error("unreachable rule kind");
}

}  // namespace pssim
