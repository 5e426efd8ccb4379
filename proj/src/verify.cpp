#include "pssim/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace pssim {

AuxState init_aux(const Vec& w0, const std::vector<Vec>& initial_grads, double eta, double beta) {
  if (initial_grads.empty()) throw VerifyError("need the K initial gradients to start the aux state");
  AuxState s;
  s.u_hat = Vec::Zero(w0.size());
  s.w_hat = w0;
  // Accumulate one gradient at a time, in the same floating-point order as a
  // live run consuming the initial gradients.
  for (const auto& g : initial_grads) {
    if (g.size() != w0.size()) throw VerifyError("initial gradient dimension mismatch");
    s.u_hat += eta * g;
    s.w_hat -= eta * g;
  }
  s.y_hat = (s.w_hat - beta * w0) / (1.0 - beta);
  s.t = 1;
  return s;
}

void advance_aux(AuxState& state, const Vec& grad, std::int64_t index, double eta, double beta, int K) {
  if (state.t < 1) throw VerifyError("aux state must be initialized from the initial gradients");
  if (index != state.t)
    throw VerifyError("aux sequences consume gradients in parameter-iteration order: expected index " +
                      std::to_string(state.t) + ", got " + std::to_string(index));
  // Op-for-op the same floating-point sequence as the live rules, so that
  // the K=1 (and synchronous bucket-ordered) comparisons are bit-exact.
  const bool boundary = (state.t - 1) % K == 0;
  if (boundary) {
    state.w_hat -= beta * state.u_hat;
    state.u_hat *= beta;
  }
  state.u_hat += eta * grad;
  state.w_hat -= eta * grad;
  state.y_hat -= (eta / (1.0 - beta)) * grad;
  ++state.t;
}

namespace {

struct Residual {
  double abs = 0.0;
  double rel = 0.0;
};

Residual vec_residual(const Vec& lhs, const Vec& rhs) {
  const double abs = (lhs - rhs).norm();
  return {abs, abs / (1.0 + lhs.norm())};
}

void fold(ResidualReport& rep, const Residual& r, std::int64_t t) {
  ++rep.evaluated;
  if (r.rel > rep.max_rel) {
    rep.max_rel = r.rel;
    rep.argmax_t = t;
  }
  rep.max_abs = std::max(rep.max_abs, r.abs);
}

void validate_record(const RunRecord& rec) {
  if (rec.scheduler != Scheduler::asynchronous)
    throw VerifyError("the identities are stated over asynchronous traces; record one with "
                      "scheduler=asynchronous");
  if (rec.K < 1 || rec.trace.empty()) throw VerifyError("empty run record");
  const auto T = static_cast<std::int64_t>(rec.trace.size());
  if (static_cast<std::int64_t>(rec.grads.size()) != T ||
      static_cast<std::int64_t>(rec.w_hist.size()) != T + 1)
    throw VerifyError("run record is missing gradients or parameter snapshots");
  if (static_cast<std::int64_t>(rec.u_hist.size()) != T + 1)
    throw VerifyError("verification needs momentum snapshots; record an ordered-momentum run");
  if (!(rec.beta >= 0.0 && rec.beta < 1.0) || !(rec.eta > 0.0))
    throw VerifyError("run record has invalid hyperparameters");
  if (!rec.constant_eta)
    throw VerifyError("the identities assume a constant learning rate; record a run without lr_schedule");
}

}  // namespace

VerificationReport verify_run(const RunRecord& rec) {
  validate_record(rec);
  const auto T = static_cast<std::int64_t>(rec.trace.size());
  const int K = rec.K;
  const double eta = rec.eta;
  const double beta = rec.beta;

  VerificationReport rep;
  rep.identity1.name = "identity 1 (momentum vs aux momentum)";
  rep.identity2.name = "identity 2 (parameter vs aux parameter)";
  rep.identity3.name = "identity 3 (y_hat at bucket boundaries)";
  rep.identity4.name = "identity 4 (||y_hat - w_hat||^2 bound)";

  // Per-worker in-flight parameter index during each iteration, via the
  // asynchronous bookkeeping recursion; doubles as a legality check of the
  // recorded trace.
  std::vector<std::vector<std::int64_t>> held(static_cast<std::size_t>(T));
  std::vector<std::int64_t> cur(static_cast<std::size_t>(K), 0);
  for (std::int64_t t = 0; t < T; ++t) {
    held[static_cast<std::size_t>(t)] = cur;
    const auto& r = rec.trace[static_cast<std::size_t>(t)];
    if (r.worker < 0 || r.worker >= K) throw VerifyError("trace names a worker outside the cluster");
    if (cur[static_cast<std::size_t>(r.worker)] != r.ite)
      throw VerifyError("trace violates the asynchronous bookkeeping recursion at iteration " +
                        std::to_string(t));
    cur[static_cast<std::size_t>(r.worker)] = t + 1;
  }

  // Where each parameter index was delivered. Index 0 arrives once per
  // worker; indices >= 1 at most once overall.
  std::vector<std::int64_t> index_to_t(static_cast<std::size_t>(T), -1);
  std::vector<const Vec*> initial_grad(static_cast<std::size_t>(K), nullptr);
  for (std::int64_t t = 0; t < T; ++t) {
    const auto& r = rec.trace[static_cast<std::size_t>(t)];
    if (r.ite == 0)
      initial_grad[static_cast<std::size_t>(r.worker)] = &rec.grads[static_cast<std::size_t>(t)];
    else
      index_to_t[static_cast<std::size_t>(r.ite)] = t;
  }

  const auto mark_truncated = [&rep](std::int64_t missing) {
    for (ResidualReport* r : {&rep.identity1, &rep.identity2, &rep.identity3, &rep.identity4}) {
      r->truncated = true;
      r->first_missing_index = missing;
      if (r->note.empty())
        r->note = "run ended with parameter index " + std::to_string(missing) +
                  " still in flight; later aux times not evaluated";
    }
  };

  // Largest observed squared gradient norm, for the identity-4 bound.
  double g2_hat = 0.0;
  for (const auto& g : rec.grads) g2_hat = std::max(g2_hat, g.squaredNorm());
  const double bound4 =
      4.0 * eta * eta * double(K) * double(K) * g2_hat / std::pow(1.0 - beta, 4);

  std::vector<Vec> w_hat_hist;  // w_hat_hist[t] = aux parameter at time t (index 0 = w0)
  w_hat_hist.reserve(static_cast<std::size_t>(T) + 1);
  w_hat_hist.push_back(rec.w0);

  AuxState aux;
  bool started = false;
  for (std::int64_t t = 1; t <= T; ++t) {
    if (!started) {
      std::vector<Vec> g0;
      for (const auto* g : initial_grad) {
        if (g) g0.push_back(*g);
      }
      if (static_cast<int>(g0.size()) < K) {
        mark_truncated(0);
        break;
      }
      aux = init_aux(rec.w0, g0, eta, beta);
      started = true;
    } else {
      const std::int64_t need = t - 1;
      const auto at = index_to_t[static_cast<std::size_t>(need)];
      if (at < 0) {
        mark_truncated(need);
        break;
      }
      advance_aux(aux, rec.grads[static_cast<std::size_t>(at)], need, eta, beta, K);
    }
    w_hat_hist.push_back(aux.w_hat);
    rep.aux_reached = t;

    const int k_prev = rec.trace[static_cast<std::size_t>(t - 1)].worker;
    const auto& held_prev = held[static_cast<std::size_t>(t - 1)];

    // Identities 1 and 2: accumulate the in-flight gradients of the other
    // workers with their bucket-gap weights.
    Vec rhs1 = Vec::Zero(rec.w0.size());
    Vec rhs2 = Vec::Zero(rec.w0.size());
    for (int k = 0; k < K; ++k) {
      if (k == k_prev) continue;
      const std::int64_t ite_k = held_prev[static_cast<std::size_t>(k)];
      const Vec* g = nullptr;
      if (ite_k == 0) {
        g = initial_grad[static_cast<std::size_t>(k)];
      } else {
        const auto at = index_to_t[static_cast<std::size_t>(ite_k)];
        if (at >= 0 && rec.trace[static_cast<std::size_t>(at)].worker == k)
          g = &rec.grads[static_cast<std::size_t>(at)];
      }
      // Reaching aux time t implies every index <= t-1 was delivered.
      if (!g) throw VerifyError("internal: in-flight gradient missing from the record");
      const std::int64_t gap = bucket_index(t - 1, K) - bucket_index(ite_k, K);
      rhs1 += (eta * beta_power(beta, gap)) * *g;
      rhs2 -= (eta * compensation_coefficient(beta, gap)) * *g;
    }
    fold(rep.identity1, vec_residual(aux.u_hat - rec.u_hist[static_cast<std::size_t>(t)], rhs1), t);
    fold(rep.identity2, vec_residual(aux.w_hat - rec.w_hist[static_cast<std::size_t>(t)], rhs2), t);

    // Identity 3 applies at bucket boundaries t > 1 with K | (t-1).
    if (t > 1 && (t - 1) % K == 0) {
      const Vec rhs3 =
          (aux.w_hat - beta * w_hat_hist[static_cast<std::size_t>(t - K)]) / (1.0 - beta);
      fold(rep.identity3, vec_residual(aux.y_hat, rhs3), t);
    } else {
      ++rep.identity3.skipped;
    }

    // Identity 4: the squared distance stays under the delay-independent bound.
    const double value = (aux.y_hat - aux.w_hat).squaredNorm();
    ++rep.identity4.evaluated;
    rep.identity4.max_abs = std::max(rep.identity4.max_abs, value);
    if (bound4 > 0.0) {
      const double ratio = value / bound4;
      if (ratio > rep.identity4.max_rel) {
        rep.identity4.max_rel = ratio;
        rep.identity4.argmax_t = t;
      }
    } else if (value > 0.0) {
      rep.identity4.max_rel = std::numeric_limits<double>::infinity();
      rep.identity4.argmax_t = t;
    }
  }

  rep.identity1.pass = rep.identity1.max_rel <= rep.identity1.tolerance;
  rep.identity2.pass = rep.identity2.max_rel <= rep.identity2.tolerance;
  rep.identity3.pass = rep.identity3.max_rel <= rep.identity3.tolerance;
  rep.identity4.pass = rep.identity4.max_rel <= 1.0 + rep.identity4.tolerance;
  if (rep.identity4.max_rel > 1.0 && rep.identity4.pass)
    rep.identity4.note = "bound met only up to rounding slack (ratio " +
                      std::to_string(rep.identity4.max_rel) + ")";
  return rep;
}

ResidualReport check_identity1(const RunRecord& rec) { return verify_run(rec).identity1; }
ResidualReport check_identity2(const RunRecord& rec) { return verify_run(rec).identity2; }
ResidualReport check_identity3(const RunRecord& rec) { return verify_run(rec).identity3; }
ResidualReport check_identity4(const RunRecord& rec) { return verify_run(rec).identity4; }

std::string format_report(const VerificationReport& rep) {
  std::ostringstream os;
  const auto line = [&os](const ResidualReport& r) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-44s %s  evaluated=%lld skipped=%lld max_abs=%.3e max_rel=%.3e",
                  r.name.c_str(), r.pass ? "pass" : "FAIL", static_cast<long long>(r.evaluated),
                  static_cast<long long>(r.skipped), r.max_abs, r.max_rel);
    os << buf;
    if (r.argmax_t >= 0) os << " (worst at t=" << r.argmax_t << ")";
    if (r.truncated) os << " [truncated at index " << r.first_missing_index << "]";
    if (!r.note.empty()) os << "\n    note: " << r.note;
    os << "\n";
  };
  line(rep.identity1);
  line(rep.identity2);
  line(rep.identity3);
  line(rep.identity4);
  return os.str();
}

}  // namespace pssim
