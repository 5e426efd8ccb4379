// Acceptance runner: one [PASS]/[FAIL] line per criterion, exit 1 on any
// failure. Tolerances are pinned here and nowhere else.
#include "pssim/config.hpp"
#include "pssim/harness.hpp"
#include "pssim/verify.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

using namespace pssim;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int n, const char* name, bool pass, const std::string& detail) {
  std::printf("[%s] %2d %s (%s)\n", pass ? "PASS" : "FAIL", n, name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string eng(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3e", v);
  return buf;
}

double finite_or_inf(double v) {
  return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

ProblemSpec quad_spec(Index dim, Index n, double sigma, std::uint64_t seed) {
  ProblemSpec s;
  s.kind = ProblemKind::noisy_quadratic;
  s.dim = dim;
  s.n = n;
  s.noise_sigma = sigma;
  s.seed = seed;
  return s;
}

DelayModel lognormal_delay(double slow_fraction = 0.0, double slow_factor = 1.0) {
  DelayModel d;
  d.kind = DelayKind::lognormal;
  d.slow_fraction = slow_fraction;
  d.slow_factor = slow_factor;
  return d;
}

RunResult run_rule(const Problem& problem, RuleKind kind, int K, std::int64_t T, double eta,
                   double beta, std::uint64_t seed, const DelayModel& delay, Scheduler sched,
                   bool record, int batch = 4, const Problem* probe = nullptr,
                   std::int64_t stride = 1000000) {
  const Vec w0 = problem.initial_param();
  auto rule = make_rule(kind, w0, beta, K);
  EngineState st = init_cluster(K, delay, seed, w0, problem.size(), batch);
  RunParams rp;
  rp.T = T;
  rp.scheduler = sched;
  rp.hp = HyperParams{eta, beta, K, {}};
  rp.metric_stride = stride;
  rp.probe = probe;
  rp.record = record;
  return run(st, rp, *rule, problem_gradient_source(problem));
}

double sup_diff(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  double worst = std::numeric_limits<double>::infinity();
  if (a.size() != b.size() || a.empty()) return worst;
  worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, (a[i] - b[i]).cwiseAbs().maxCoeff());
  return worst;
}

// 1. With beta = 0 the ordered-momentum rule degenerates to plain
//    asynchronous SGD, iterate for iterate.
void criterion1() {
  const auto problem = make_problem(quad_spec(100, 200, 1.0, 5));
  double worst = 0.0;
  for (const int K : {1, 4, 16}) {
    const auto a = run_rule(*problem, RuleKind::asgd, K, 2000, 0.05, 0.0, 11 + K,
                            lognormal_delay(), Scheduler::asynchronous, true);
    const auto o = run_rule(*problem, RuleKind::ormo, K, 2000, 0.05, 0.0, 11 + K,
                            lognormal_delay(), Scheduler::asynchronous, true);
    worst = std::max(worst, sup_diff(a.record->w_hist, o.record->w_hist));
  }
  report(1, "ormo-beta0-matches-asgd", worst <= 1e-12,
         "sup |w| gap " + eng(worst) + " over K in {1,4,16}, T=2000; tol 1e-12");
}

// 2. Under the synchronous scheduler the ordered-momentum rule reproduces
//    global-momentum SSGD, parameters and momentum alike.
void criterion2() {
  const auto problem = make_problem(quad_spec(100, 200, 1.0, 5));
  double worst = 0.0;
  for (const int K : {1, 4, 16}) {
    const auto s = run_rule(*problem, RuleKind::ssgdm_global, K, 2000, 0.05, 0.9, 31 + K,
                            lognormal_delay(), Scheduler::synchronous, true);
    const auto o = run_rule(*problem, RuleKind::ormo, K, 2000, 0.05, 0.9, 31 + K,
                            lognormal_delay(), Scheduler::synchronous, true);
    worst = std::max(worst, sup_diff(s.record->w_hist, o.record->w_hist));
    worst = std::max(worst, sup_diff(s.record->u_hist, o.record->u_hist));
  }
  report(2, "ormo-sync-matches-ssgdm", worst <= 1e-12,
         "sup |w|,|u| gap " + eng(worst) + " over K in {1,4,16}, T=2000; tol 1e-12");
}

// 3. One synchronous round of per-gradient updates equals one mini-batch
//    momentum step with the K-fold learning rate.
void criterion3() {
  const int K = 8;
  const int rounds = 50;
  const double eta = 0.01, beta = 0.9;
  const auto problem = make_problem(quad_spec(50, 64, 1.0, 9));
  Vec w = problem->initial_param(), w2 = w;
  Vec u = Vec::Zero(w.size()), u2 = u;
  double worst = 0.0;
  for (int s = 0; s < rounds; ++s) {
    // All K workers hold the round-start parameter of their own sequence.
    const Vec w_base = w;
    Vec mean = Vec::Zero(w.size());
    for (int k = 0; k < K; ++k) {
      const std::int32_t idx = static_cast<std::int32_t>((s * K + k) % problem->size());
      const std::vector<std::int32_t> sample{idx};
      GradientMsg msg{problem->stochastic_grad(w_base, sample), s, k};
      ssgdm_global_step(w, u, msg, eta, beta, /*barrier=*/k == 0);
      mean += problem->stochastic_grad(w2, sample);
    }
    mean /= double(K);
    minibatch_sgdm_step(w2, u2, mean, double(K) * eta, beta);
    worst = std::max(worst, (w - w2).norm() / (1.0 + w.norm()));
    worst = std::max(worst, (u - u2).norm() / (1.0 + u.norm()));
  }
  report(3, "sync-round-equals-minibatch", worst <= 1e-10,
         "max rel gap " + eng(worst) + " over 50 rounds, K=8; tol 1e-10");
}

// 4-6. The four momentum/parameter identities hold on live asynchronous
//      traces across cluster sizes and momentum strengths.
void criteria456() {
  const auto problem = make_problem(quad_spec(30, 64, 1.0, 13));
  double worst12 = 0.0, worst3 = 0.0, worst4 = 0.0;
  bool ok12 = true, ok3 = true, ok4 = true;
  std::int64_t evaluated3 = 0;
  for (const int K : {2, 8, 16}) {
    for (const double beta : {0.0, 0.5, 0.9}) {
      const auto rr = run_rule(*problem, RuleKind::ormo, K, 500, 0.02, beta, 17 + K,
                               lognormal_delay(0.25, 8.0), Scheduler::asynchronous, true);
      const auto rep = verify_run(*rr.record);
      ok12 = ok12 && rep.identity1.pass && rep.identity2.pass;
      ok3 = ok3 && rep.identity3.pass && rep.identity3.evaluated > 0;
      ok4 = ok4 && rep.identity4.pass;
      worst12 = std::max({worst12, rep.identity1.max_rel, rep.identity2.max_rel});
      worst3 = std::max(worst3, rep.identity3.max_rel);
      worst4 = std::max(worst4, rep.identity4.max_rel);
      evaluated3 += rep.identity3.evaluated;
    }
  }
  report(4, "identities-1-2-async-traces", ok12,
         "max rel residual " + eng(worst12) + " over K x beta grid, T=500; tol 1e-9");
  report(5, "identity-3-bucket-boundaries", ok3,
         "max rel residual " + eng(worst3) + " at " + std::to_string(evaluated3) +
             " boundaries; tol 1e-9");
  report(6, "identity-4-distance-bound", ok4,
         "max value/bound ratio " + eng(worst4) + "; must stay <= 1 + 1e-9");
}

// 7. A fixed out-of-order delivery script yields the hand-computed momentum:
//    every gradient is weighted by beta^(head bucket minus its own bucket).
void criterion7() {
  const Index d = 13;
  const int K = 4;
  const double eta = 0.1, beta = 0.9;
  ScriptedSchedule script;
  script.entries = {{0, 0}, {1, 0}, {2, 0}, {0, 1}, {3, 0},
                    {1, 2}, {1, 6}, {2, 3}, {2, 8}, {2, 9}};
  const auto source = [d](const GradientRequest& req) {
    Vec g = Vec::Zero(d);
    if (req.param_iter == 0)
      g(req.worker) = 1.0;
    else
      g(3 + req.param_iter) = 1.0;
    return g;
  };
  const Vec w0 = Vec::Zero(d);
  auto rule = make_rule(RuleKind::ormo, w0, beta, K);
  EngineState st = init_cluster(K, lognormal_delay(), 1, w0);
  RunParams rp;
  rp.T = static_cast<std::int64_t>(script.entries.size());
  rp.scheduler = Scheduler::asynchronous;
  rp.hp = HyperParams{eta, beta, K, {}};
  rp.metric_stride = 1000000;
  rp.script = &script;
  rp.record = true;
  const auto rr = run(st, rp, *rule, source);

  Vec expected = Vec::Zero(d);
  for (const Index i : {0, 1, 2, 3}) expected(i) = eta * beta * beta * beta;
  for (const Index i : {4, 5, 6}) expected(i) = eta * beta * beta;
  for (const Index i : {9, 11}) expected(i) = eta * beta;
  expected(12) = eta;
  const double gap = (rr.record->u_hist.back() - expected).cwiseAbs().maxCoeff();
  const bool bucket_ok = rr.record->b_hist.back() == 3;
  report(7, "scripted-replay-momentum", gap <= 1e-12 && bucket_ok,
         "max coord gap " + eng(gap) + ", final head bucket " +
             std::to_string(rr.record->b_hist.back()) + "; tol 1e-12");
}

// 8. On a heterogeneous 16-worker logistic problem the ordered rule beats
//    naive momentum and is no worse than momentum-free SGD.
void criterion8() {
  ProblemSpec spec;
  spec.kind = ProblemKind::logistic_regression;
  spec.dim = 50;
  spec.n = 10000;
  spec.seed = 17;
  spec.label_flip = 0.05;
  const auto problem = make_problem(spec);
  const int K = 16;
  const std::int64_t T = 2000;
  const double eta = 1.0, beta = 0.95;
  const auto delay = lognormal_delay(1.0 / 16.0, 10.0);

  double asgd_sum = 0.0, naive_sum = 0.0, ormo_sum = 0.0;
  int ormo_wins = 0;
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  for (const auto seed : seeds) {
    const auto a = run_rule(*problem, RuleKind::asgd, K, T, eta, beta, seed, delay,
                            Scheduler::asynchronous, false, 64);
    const auto n = run_rule(*problem, RuleKind::naive_asgdm, K, T, eta, beta, seed, delay,
                            Scheduler::asynchronous, false, 64);
    const auto o = run_rule(*problem, RuleKind::ormo, K, T, eta, beta, seed, delay,
                            Scheduler::asynchronous, false, 64);
    const double la = finite_or_inf(problem->full_loss(a.final_param));
    const double ln = finite_or_inf(problem->full_loss(n.final_param));
    const double lo = finite_or_inf(problem->full_loss(o.final_param));
    asgd_sum += la;
    naive_sum += ln;
    ormo_sum += lo;
    if (lo <= ln) ++ormo_wins;
  }
  const double asgd_mean = asgd_sum / 5.0, naive_mean = naive_sum / 5.0,
               ormo_mean = ormo_sum / 5.0;
  const bool pass = ormo_mean <= naive_mean && ormo_mean <= asgd_mean + 1e-3 && ormo_wins >= 4;
  report(8, "heterogeneous-logistic-ranking", pass,
         "mean loss ormo " + eng(ormo_mean) + " vs naive " + eng(naive_mean) + " vs plain " +
             eng(asgd_mean) + ", ormo<=naive on " + std::to_string(ormo_wins) + "/5 seeds");
}

// 9. At the conservative rate eta = (1-beta)/(2KL) the gradient norm decays:
//    second-half mean of ||grad||^2 is below the first-half mean, every seed.
void criterion9() {
  ProblemSpec spec = quad_spec(50, 128, 1.0, 23);
  const auto problem = make_problem(spec);
  const int K = 8;
  const std::int64_t T = 10000;
  const double beta = 0.9;
  const double eta = (1.0 - beta) / (2.0 * double(K) * problem->smoothness());
  bool pass = true;
  double worst_ratio = 0.0;
  for (const std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const auto rr = run_rule(*problem, RuleKind::ormo, K, T, eta, beta, seed, lognormal_delay(),
                             Scheduler::asynchronous, false, 8, problem.get(), 1);
    double first = 0.0, second = 0.0;
    std::int64_t nf = 0, ns = 0;
    for (const auto& row : rr.metrics) {
      if (row.t < T / 2) {
        first += row.grad_norm2;
        ++nf;
      } else {
        second += row.grad_norm2;
        ++ns;
      }
    }
    first /= double(nf);
    second /= double(ns);
    const double ratio = second / first;
    worst_ratio = std::max(worst_ratio, ratio);
    pass = pass && second < first;
  }
  report(9, "small-eta-gradient-decay", pass,
         "worst second/first half mean ||grad||^2 ratio " + eng(worst_ratio) +
             " at eta=" + eng(eta) + "; must be < 1 on all 5 seeds");
}

// 10. The same experiment config writes byte-identical outputs on rerun.
void criterion10() {
  const auto make_cfg = [](const std::string& name) {
    ExperimentConfig cfg;
    cfg.problem = quad_spec(8, 32, 1.0, 21);
    cfg.K = 4;
    cfg.T = 60;
    cfg.optimizer = RuleKind::ormo;
    cfg.scheduler = Scheduler::asynchronous;
    cfg.hp = HyperParams{0.05, 0.9, 4, {}};
    cfg.batch = 4;
    cfg.seeds = {1, 2};
    cfg.metric_stride = 20;
    const fs::path dir = fs::absolute("acceptance_out") / name;
    fs::remove_all(dir);
    cfg.out_dir = dir.string();
    return cfg;
  };
  const auto a = make_cfg("repro_a");
  const auto b = make_cfg("repro_b");
  run_experiment(a);
  run_experiment(b);
  const auto read = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  bool pass = true;
  for (const char* name : {"metrics_seed1.csv", "trace_seed1.csv", "metrics_seed2.csv",
                           "trace_seed2.csv", "summary.json"}) {
    const auto xa = read(fs::path(a.out_dir) / name);
    pass = pass && !xa.empty() && xa == read(fs::path(b.out_dir) / name);
  }
  report(10, "byte-identical-reruns", pass,
         std::string(pass ? "all seed outputs identical across reruns"
                          : "outputs differ between reruns"));
}

}  // namespace

int main() {
  criterion1();
  criterion2();
  criterion3();
  criteria456();
  criterion7();
  criterion8();
  criterion9();
  criterion10();
  if (failures) {
    std::printf("acceptance: %d criterion(s) FAILED\n", failures);
    return 1;
  }
  std::printf("acceptance: all 10 criteria passed\n");
  return 0;
}
