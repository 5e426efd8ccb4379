#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "pssim/engine.hpp"
#include "pssim/optim.hpp"
#include "pssim/problems.hpp"

#include <cmath>
#include <map>
#include <memory>

using namespace pssim;

namespace {

Vec unit(Index dim, Index i) {
  Vec v = Vec::Zero(dim);
  v(i) = 1.0;
  return v;
}

double rel_diff(const Vec& a, const Vec& b) { return (a - b).norm() / (1.0 + a.norm()); }

}  // namespace

TEST_CASE("bucket_index: hand values, K=1 identity, errors") {
  CHECK(bucket_index(0, 4) == 0);
  CHECK(bucket_index(1, 4) == 1);
  CHECK(bucket_index(4, 4) == 1);
  CHECK(bucket_index(5, 4) == 2);
  CHECK(bucket_index(9, 4) == 3);
  for (std::int64_t j : {0, 1, 2, 17, 1000}) CHECK(bucket_index(j, 1) == j);
  for (std::int64_t j : {0, 1, 5, 23, 64, 65}) CHECK(bucket_index(j, 8) == oracles::slow_bucket(j, 8));
  CHECK_THROWS_AS(bucket_index(-1, 4), OptimError);
  CHECK_THROWS_AS(bucket_index(3, 0), OptimError);
}

TEST_CASE("beta_power: exact edge cases and agreement with sequential products") {
  CHECK(beta_power(0.9, 0) == 1.0);
  CHECK(beta_power(0.9, 1) == 0.9);
  CHECK(beta_power(0.0, 0) == 1.0);
  CHECK(beta_power(0.0, 5) == 0.0);
  for (double beta : {0.1, 0.5, 0.9, 0.99}) {
    for (std::int64_t e = 0; e <= 64; ++e) {
      const double want = oracles::slow_power(beta, e);
      CHECK(std::abs(beta_power(beta, e) - want) <= 1e-14 * want);
    }
  }
  CHECK_THROWS_AS(beta_power(0.9, -1), OptimError);
}

TEST_CASE("compensation_coefficient: exact at the degenerate points, matches explicit sums") {
  CHECK(compensation_coefficient(0.9, 0) == 1.0);  // bit-exact, not approximately
  CHECK(compensation_coefficient(0.0, 7) == 1.0);
  for (double beta : {0.1, 0.5, 0.9, 0.99}) {
    for (std::int64_t delta = 0; delta <= 64; ++delta) {
      const double want = oracles::slow_geometric_sum(beta, delta);
      CHECK(std::abs(compensation_coefficient(beta, delta) - want) <= 1e-14 * want);
    }
  }
  // One-bucket gap at beta=0.9: parameter coefficient eta*(1+beta) = 0.19.
  CHECK(0.1 * compensation_coefficient(0.9, 1) == doctest::Approx(0.19).epsilon(1e-14));
  CHECK_THROWS_AS(compensation_coefficient(0.9, -1), OptimError);
}

TEST_CASE("asgd_step: plain descent") {
  Vec w(2);
  w << 1.0, -2.0;
  Vec g(2);
  g << 4.0, 10.0;
  asgd_step(w, {g, 0, 0}, 0.25);
  CHECK(w(0) == doctest::Approx(0.0));
  CHECK(w(1) == doctest::Approx(-4.5));
}

TEST_CASE("naive_asgdm_step: two steps move by g1*(1+beta) + g2") {
  const Index d = 3;
  Vec w = Vec::Zero(d), u = Vec::Zero(d);
  Vec g1(d), g2(d);
  g1 << 1.0, 2.0, -1.0;
  g2 << 0.5, 0.0, 3.0;
  naive_asgdm_step(w, u, {g1, 0, 0}, 1.0, 0.9);
  naive_asgdm_step(w, u, {g2, 1, 0}, 1.0, 0.9);
  const Vec want = -(1.9 * g1 + g2);
  CHECK((w - want).norm() <= 1e-15 * want.norm());
  CHECK((u - (0.9 * g1 + g2)).norm() <= 1e-15);
}

TEST_CASE("local momentum with one worker reproduces the classical momentum recursion") {
  const Index d = 4;
  const double eta = 0.3, beta = 0.8;
  Vec grads[5];
  for (int i = 0; i < 5; ++i) grads[i] = Vec::LinSpaced(d, i + 1, i + 2);

  // Worker-side recursion + server apply.
  Vec w = Vec::Ones(d), u_local = Vec::Zero(d);
  // Classical recursion: w' -= beta*u + eta*g; u = beta*u + eta*g.
  Vec w_ref = Vec::Ones(d), u_ref = Vec::Zero(d);
  for (int i = 0; i < 5; ++i) {
    local_momentum_update(u_local, grads[i], eta, beta);
    w -= u_local;
    w_ref -= beta * u_ref + eta * grads[i];
    u_ref = beta * u_ref + eta * grads[i];
    CHECK((w - w_ref).norm() <= 1e-14);
    CHECK((u_local - u_ref).norm() <= 1e-14);
  }
}

TEST_CASE("ssgdm_global_step with K=1 is the classical momentum recursion") {
  const Index d = 3;
  const double eta = 0.1, beta = 0.9;
  Vec w = Vec::Ones(d), u = Vec::Zero(d);
  Vec w_ref = w, u_ref = u;
  for (int i = 0; i < 6; ++i) {
    Vec g = Vec::LinSpaced(d, -i, i + 1);
    ssgdm_global_step(w, u, {g, i, 0}, eta, beta, /*barrier=*/true);
    w_ref -= beta * u_ref + eta * g;
    u_ref = beta * u_ref + eta * g;
    CHECK((w - w_ref).norm() <= 1e-14);
    CHECK((u - u_ref).norm() <= 1e-14);
  }
}

TEST_CASE("minibatch_sgdm_step: one hand-checked step") {
  Vec w(2), u(2), g(2);
  w << 1.0, 1.0;
  u << 0.5, -0.5;
  g << 2.0, 4.0;
  minibatch_sgdm_step(w, u, g, 0.1, 0.9);
  // w -= 0.9*u + 0.1*g ; u = 0.9*u + 0.1*g
  CHECK(w(0) == doctest::Approx(1.0 - (0.45 + 0.2)));
  CHECK(w(1) == doctest::Approx(1.0 - (-0.45 + 0.4)));
  CHECK(u(0) == doctest::Approx(0.65));
  CHECK(u(1) == doctest::Approx(-0.05));
}

TEST_CASE("ormo_step: a gradient from a bucket ahead of the head is rejected") {
  Vec w = Vec::Zero(2);
  MomentumState m{Vec::Zero(2), 0};
  Vec g = Vec::Ones(2);
  CHECK_THROWS_AS(ormo_step(w, m, {g, 3, 0}, 0.1, 0.9, 2, /*head_advance=*/false), OptimError);
}

TEST_CASE("ormo_step: hand-unrolled two-bucket sequence") {
  // K=2, eta=0.1, beta=0.5. Gradients: index 0 twice (workers 0,1), then
  // index 1 with a head advance first.
  const Index d = 2;
  Vec w = Vec::Zero(d);
  MomentumState m{Vec::Zero(d), 0};
  const Vec e0 = unit(d, 0), e1 = unit(d, 1);

  ormo_step(w, m, {e0, 0, 0}, 0.1, 0.5, 2, false);  // delta = 0
  CHECK((m.u - 0.1 * e0).norm() <= 1e-16);
  CHECK((w + 0.1 * e0).norm() <= 1e-16);

  ormo_step(w, m, {e1, 0, 1}, 0.1, 0.5, 2, false);  // still bucket 0
  CHECK((m.u - (0.1 * e0 + 0.1 * e1)).norm() <= 1e-16);

  // t=2: waiting set empty, ceil(2/2)=1 > b=0, so the head advances: the
  // momentum decays by beta and w takes the beta*u kick; the new gradient
  // (index 1, bucket 1 = head) lands at full weight.
  const Vec w_before = w;
  const Vec u_before = m.u;
  ormo_step(w, m, {e0, 1, 0}, 0.1, 0.5, 2, true);
  CHECK(m.b == 1);
  CHECK((m.u - (0.5 * u_before + 0.1 * e0)).norm() <= 1e-16);
  CHECK((w - (w_before - 0.5 * u_before - 0.1 * e0)).norm() <= 1e-16);
}

TEST_CASE("learning-rate schedule: empty, step decay, composition") {
  HyperParams h;
  h.eta = 0.5;
  h.beta = 0.0;
  CHECK(apply_lr_schedule(h, 0) == 0.5);
  CHECK(apply_lr_schedule(h, 1000) == 0.5);
  h.lr_schedule = {{100, 0.1}, {200, 0.5}};
  CHECK(apply_lr_schedule(h, 99) == 0.5);
  CHECK(apply_lr_schedule(h, 100) == doctest::Approx(0.05));
  CHECK(apply_lr_schedule(h, 199) == doctest::Approx(0.05));
  CHECK(apply_lr_schedule(h, 200) == doctest::Approx(0.025));
  h.lr_schedule = {{200, 0.5}, {100, 0.1}};
  CHECK_THROWS_AS(validate(h), ConfigError);
}

TEST_CASE("split-step equivalence: K micro-steps per bucket match one mini-batch step") {
  // Inner recursion: at each bucket boundary the momentum head moves, then K
  // gradients (all evaluated at the bucket-start parameter) are applied one
  // by one. Outer recursion: classical mini-batch momentum with eta_tilde =
  // K * eta. The two must track each other at every bucket boundary.
  const int K = 4;
  const int S = 12;
  const double eta = 0.05, beta = 0.9;

  ProblemSpec spec;
  spec.kind = ProblemKind::noisy_quadratic;
  spec.dim = 20;
  spec.n = 64;
  spec.noise_sigma = 0.5;
  spec.seed = 33;
  const auto problem = make_problem(spec);

  const auto sample_at = [&](int s, int k) {
    return std::vector<std::int32_t>{static_cast<std::int32_t>((s * K + k) % spec.n)};
  };

  Vec w = problem->initial_param(), u = Vec::Zero(spec.dim);
  Vec w_ref = w, u_ref = u;
  for (int s = 0; s < S; ++s) {
    const Vec base = w;  // dispatched at the previous boundary, before the head moves
    Vec mean = Vec::Zero(spec.dim);
    for (int k = 0; k < K; ++k) {
      const auto sample = sample_at(s, k);
      const Vec g = problem->stochastic_grad(base, sample);
      ssgdm_global_step(w, u, {g, std::int64_t(s) * K, k}, eta, beta, /*barrier=*/k == 0);
      mean += problem->stochastic_grad(w_ref, sample);
    }
    mean /= double(K);
    minibatch_sgdm_step(w_ref, u_ref, mean, double(K) * eta, beta);
    CHECK(rel_diff(w_ref, w) <= 1e-10);
    CHECK(rel_diff(u_ref, u) <= 1e-10);
  }
}

namespace {

RunResult engine_run(RuleKind kind, Scheduler sched, int K, std::int64_t T, double eta, double beta,
                     std::uint64_t seed, const DelayModel& delay, bool record,
                     const std::vector<std::pair<std::int64_t, double>>& schedule = {}) {
  ProblemSpec spec;
  spec.kind = ProblemKind::noisy_quadratic;
  spec.dim = 12;
  spec.n = 32;
  spec.noise_sigma = 1.0;
  spec.seed = 7;
  static std::map<std::uint64_t, std::unique_ptr<Problem>> cache;
  auto& problem = cache[spec.seed];
  if (!problem) problem = make_problem(spec);

  const Vec w0 = problem->initial_param();
  auto rule = make_rule(kind, w0, beta, K);
  EngineState st = init_cluster(K, delay, seed, w0, spec.n, 4);
  RunParams rp;
  rp.T = T;
  rp.scheduler = sched;
  rp.hp = HyperParams{eta, beta, K, schedule};
  rp.metric_stride = 1000000;  // metrics not needed here
  rp.record = record;
  return run(st, rp, *rule, problem_gradient_source(*problem));
}

}  // namespace

TEST_CASE("ordered momentum with beta=0 runs bit-identically to plain asynchronous SGD") {
  DelayModel delay;
  delay.kind = DelayKind::lognormal;
  for (int K : {1, 3, 8}) {
    const auto a = engine_run(RuleKind::ormo, Scheduler::asynchronous, K, 300, 0.05, 0.0, 11, delay, false);
    const auto b = engine_run(RuleKind::asgd, Scheduler::asynchronous, K, 300, 0.05, 0.0, 11, delay, false);
    CHECK((a.final_param - b.final_param).norm() == 0.0);  // exact, not approximate
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
      CHECK(a.trace[i].worker == b.trace[i].worker);
      CHECK(a.trace[i].ite == b.trace[i].ite);
    }
  }
}

TEST_CASE("ordered momentum under the synchronous scheduler is bit-identical to global-momentum SSGD") {
  DelayModel delay;
  delay.kind = DelayKind::lognormal;
  delay.slow_fraction = 0.25;
  delay.slow_factor = 4.0;
  for (int K : {1, 4}) {
    const auto a = engine_run(RuleKind::ormo, Scheduler::synchronous, K, 240, 0.02, 0.9, 5, delay, true);
    const auto b =
        engine_run(RuleKind::ssgdm_global, Scheduler::synchronous, K, 240, 0.02, 0.9, 5, delay, true);
    CHECK((a.final_param - b.final_param).norm() == 0.0);
    CHECK((a.record->u_hist.back() - b.record->u_hist.back()).norm() == 0.0);
  }
}

TEST_CASE("head bucket tracks ceil(t/K) on asynchronous traces and floor(t/K) on synchronous ones") {
  DelayModel delay;
  delay.kind = DelayKind::exponential;
  for (int K : {1, 3, 8}) {
    const auto rr = engine_run(RuleKind::ormo, Scheduler::asynchronous, K, 200, 0.05, 0.9, 3, delay, true);
    const auto& b_hist = rr.record->b_hist;
    REQUIRE(b_hist.size() == 201);
    for (std::int64_t t = 0; t < 200; ++t) {
      const std::int64_t ceil_t = (t + K - 1) / K;
      CHECK(b_hist[static_cast<std::size_t>(t + 1)] == ceil_t);
    }
  }
  // Synchronously the waiting set only empties at bucket boundaries, so the
  // head trails by one bucket: b = floor(t/K), matching the barrier rule.
  const int K = 4;
  const auto rr = engine_run(RuleKind::ormo, Scheduler::synchronous, K, 200, 0.05, 0.9, 3, delay, true);
  const auto& b_hist = rr.record->b_hist;
  for (std::int64_t t = 0; t < 200; ++t)
    CHECK(b_hist[static_cast<std::size_t>(t + 1)] == t / K);
}

TEST_CASE("momentum ledger: the buffer equals its definition, decayed eta touching new gradients only") {
  DelayModel delay;
  delay.kind = DelayKind::lognormal;
  delay.slow_fraction = 0.2;
  delay.slow_factor = 6.0;
  const std::vector<std::pair<std::int64_t, double>> schedule = {{150, 0.1}};
  const auto rr =
      engine_run(RuleKind::ormo, Scheduler::asynchronous, 8, 400, 0.05, 0.9, 17, delay, true, schedule);
  const HyperParams hp{0.05, 0.9, 8, schedule};
  for (std::int64_t t = 100; t <= 400; t += 100) {
    const Vec want = oracles::momentum_ledger(*rr.record, hp, t);
    const Vec got = rr.record->u_hist[static_cast<std::size_t>(t)];
    CHECK((got - want).norm() <= 1e-10 * (1.0 + want.norm()));
  }
}

TEST_CASE("scripted replay of the four-worker staleness example recovers the published buffer") {
  // Arrival schedule (worker, parameter iteration) for t = 0..9 with K = 4:
  // all four initial gradients interleaved with increasingly stale ones.
  // Gradients are unit basis vectors so every coefficient of u_10 is visible:
  // index 0 from worker k -> e_k, index j >= 1 -> e_{3+j}.
  const int K = 4;
  const Index d = 13;
  const double eta = 0.1, beta = 0.9;
  ScriptedSchedule script;
  script.entries = {{0, 0}, {1, 0}, {2, 0}, {0, 1}, {3, 0}, {1, 2}, {1, 6}, {2, 3}, {2, 8}, {2, 9}};

  const Vec w0 = Vec::Zero(d);
  auto rule = make_rule(RuleKind::ormo, w0, beta, K);
  DelayModel delay;
  delay.kind = DelayKind::deterministic;
  EngineState st = init_cluster(K, delay, 1, w0);
  RunParams rp;
  rp.T = 10;
  rp.scheduler = Scheduler::asynchronous;
  rp.hp = HyperParams{eta, beta, K, {}};
  rp.script = &script;
  rp.record = true;
  const GradientSource grads = [&](const GradientRequest& req) {
    return req.param_iter == 0 ? unit(d, req.worker) : unit(d, 3 + req.param_iter);
  };
  const RunResult rr = run(st, rp, *rule, grads);

  // u_10: beta^3*eta on the four initial gradients, beta^2*eta on indices
  // 1..3, beta*eta on indices 6 and 8, eta on index 9, nothing else.
  Vec want = Vec::Zero(d);
  const double b3 = std::pow(beta, 3), b2 = std::pow(beta, 2);
  want(0) = want(1) = want(2) = want(3) = eta * b3;
  want(4) = want(5) = want(6) = eta * b2;
  want(9) = want(11) = eta * beta;
  want(12) = eta;
  const Vec got = rr.record->u_hist.back();
  for (Index i = 0; i < d; ++i) CHECK(std::abs(got(i) - want(i)) <= 1e-12);
  CHECK(rr.record->b_hist.back() == 3);

  // The replayed trace respects the bookkeeping recursion and tau = t - ite.
  CHECK(oracles::follows_async_recursion(rr.trace, K));
}
