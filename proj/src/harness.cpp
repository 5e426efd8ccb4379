#include "pssim/harness.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

namespace pssim {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

fs::path resolve_out_dir(const std::string& out_dir) {
  fs::path p(out_dir);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("PSSIM_OUT_ROOT"); root && *root) return fs::path(root) / p;
  return p;
}

namespace {

struct Aggregate {
  double mean = 0.0;
  double std_dev = 0.0;  // sample standard deviation (n-1); 0 for a single seed
};

Aggregate aggregate(const std::vector<double>& xs) {
  Aggregate a;
  if (xs.empty()) return a;
  for (const double x : xs) a.mean += x;
  a.mean /= double(xs.size());
  if (xs.size() > 1) {
    double acc = 0.0;
    for (const double x : xs) acc += (x - a.mean) * (x - a.mean);
    a.std_dev = std::sqrt(acc / double(xs.size() - 1));
  }
  return a;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw Error("failed while writing '" + path.string() + "'");
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream os;
  os << "t,sim_time,loss,grad_norm2,tau,b,eta_eff\n";
  for (const auto& r : rows) {
    os << r.t << ',' << format_double(r.sim_time) << ',' << format_double(r.loss) << ','
       << format_double(r.grad_norm2) << ',' << r.tau << ',';
    if (r.b) os << *r.b;
    os << ',' << format_double(r.eta_eff) << '\n';
  }
  return os.str();
}

std::string trace_csv(const std::vector<TraceRecord>& trace) {
  std::ostringstream os;
  os << "t,worker,ite,tau,sim_time\n";
  for (const auto& r : trace)
    os << r.t << ',' << r.worker << ',' << r.ite << ',' << r.tau << ',' << format_double(r.sim_time)
       << '\n';
  return os.str();
}

/// The part of a summary two runs must agree on to be comparable.
json comparable_block(const ExperimentConfig& cfg) {
  json problem{{"kind", to_string(cfg.problem.kind)}, {"dim", cfg.problem.dim},
               {"n", cfg.problem.n},                  {"seed", cfg.problem.seed},
               {"lambda", cfg.problem.lambda}};
  switch (cfg.problem.kind) {
    case ProblemKind::noisy_quadratic:
      problem["noise_sigma"] = cfg.problem.noise_sigma;
      problem["smoothness"] = cfg.problem.smoothness;
      problem["cond"] = cfg.problem.cond;
      break;
    case ProblemKind::logistic_regression:
      problem["label_flip"] = cfg.problem.label_flip;
      break;
    case ProblemKind::two_layer_net:
      problem["net_input"] = cfg.problem.net_input;
      problem["net_hidden"] = cfg.problem.net_hidden;
      problem["target_noise"] = cfg.problem.target_noise;
      break;
  }
  return json{{"problem", problem}, {"K", cfg.K}, {"T", cfg.T}};
}

RunResult run_one_seed(const ExperimentConfig& cfg, const Problem& problem, std::uint64_t seed,
                       bool record, bool with_metrics) {
  const Vec w0 = problem.initial_param();
  auto rule = make_rule(cfg.optimizer, w0, cfg.hp.beta, cfg.K);
  EngineState st = init_cluster(cfg.K, cfg.delay, seed, w0, cfg.problem.n, cfg.batch);
  RunParams rp;
  rp.T = cfg.T;
  rp.scheduler = cfg.scheduler;
  rp.hp = cfg.hp;
  rp.metric_stride = cfg.metric_stride;
  rp.probe = with_metrics ? &problem : nullptr;
  rp.record = record;
  return run(st, rp, *rule, problem_gradient_source(problem));
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  const auto problem = make_problem(cfg.problem);
  const fs::path dir = resolve_out_dir(cfg.out_dir);
  fs::create_directories(dir);

  ExperimentResult result;
  result.dir = dir;
  std::vector<double> losses, grad_norms, sim_times;
  json per_seed = json::array();
  for (const std::uint64_t seed : cfg.seeds) {
    const RunResult rr = run_one_seed(cfg, *problem, seed, /*record=*/false, /*with_metrics=*/true);
    SeedSummary s;
    s.seed = seed;
    s.final_loss = problem->full_loss(rr.final_param);
    s.final_grad_norm2 = problem->full_gradient(rr.final_param).squaredNorm();
    s.final_sim_time = rr.trace.back().sim_time;
    result.per_seed.push_back(s);
    losses.push_back(s.final_loss);
    grad_norms.push_back(s.final_grad_norm2);
    sim_times.push_back(s.final_sim_time);
    per_seed.push_back(json{{"seed", seed},
                            {"final_loss", s.final_loss},
                            {"final_grad_norm2", s.final_grad_norm2},
                            {"final_sim_time", s.final_sim_time}});
    const std::string tag = "seed" + std::to_string(seed);
    write_file(dir / ("metrics_" + tag + ".csv"), metrics_csv(rr.metrics));
    write_file(dir / ("trace_" + tag + ".csv"), trace_csv(rr.trace));
  }

  const Aggregate loss = aggregate(losses);
  const Aggregate gn2 = aggregate(grad_norms);
  const Aggregate stime = aggregate(sim_times);
  result.loss_mean = loss.mean;
  result.loss_std = loss.std_dev;

  json summary{{"comparable", comparable_block(cfg)},
               {"optimizer", to_string(cfg.optimizer)},
               {"scheduler", to_string(cfg.scheduler)},
               {"eta", cfg.hp.eta},
               {"beta", cfg.hp.beta},
               {"batch", cfg.batch},
               {"delay",
                {{"kind", to_string(cfg.delay.kind)},
                 {"mean", cfg.delay.mean},
                 {"slow_fraction", cfg.delay.slow_fraction},
                 {"slow_factor", cfg.delay.slow_factor},
                 {"lognormal_sigma", cfg.delay.lognormal_sigma}}},
               {"seeds", cfg.seeds},
               {"per_seed", per_seed},
               {"final_loss", {{"mean", loss.mean}, {"std", loss.std_dev}}},
               {"final_grad_norm2", {{"mean", gn2.mean}, {"std", gn2.std_dev}}},
               {"final_sim_time", {{"mean", stime.mean}, {"std", stime.std_dev}}}};
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  write_file(dir / "config.txt", dump_config(cfg));
  return result;
}

std::vector<fs::path> run_sweep(std::map<std::string, std::string> base_kv,
                                const std::string& vary_key, const std::vector<std::string>& values) {
  if (values.empty()) throw ConfigError("sweep needs at least one value for '" + vary_key + "'");
  const std::string base_out = [&] {
    const auto it = base_kv.find("out_dir");
    return it == base_kv.end() ? std::string("runs") : it->second;
  }();
  std::vector<fs::path> dirs;
  for (const auto& value : values) {
    auto kv = base_kv;
    apply_override(kv, vary_key + "=" + value);
    kv["out_dir"] = base_out + "/" + vary_key + "=" + value;
    const ExperimentConfig cfg = build_config(kv);
    dirs.push_back(run_experiment(cfg).dir);
  }
  return dirs;
}

std::string compare_report(const std::vector<std::string>& dirs) {
  if (dirs.empty()) throw ConfigError("report needs at least one run directory");
  struct Row {
    std::string dir, optimizer, scheduler, profile;
    double loss_mean, loss_std, gn2_mean, gn2_std;
  };
  std::vector<Row> rows;
  json reference;
  for (const auto& d : dirs) {
    const fs::path path = fs::path(d) / "summary.json";
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'; was the run written?");
    json s = json::parse(in, nullptr, /*allow_exceptions=*/true);
    if (reference.is_null()) {
      reference = s["comparable"];
    } else if (s["comparable"] != reference) {
      throw Error("runs in '" + dirs.front() + "' and '" + d +
                  "' use different problems or horizons and cannot be compared");
    }
    const bool slow = s["delay"]["slow_fraction"].get<double>() > 0.0 &&
                      s["delay"]["slow_factor"].get<double>() > 1.0;
    rows.push_back(Row{d, s["optimizer"].get<std::string>(), s["scheduler"].get<std::string>(),
                       slow ? "heterogeneous" : "homogeneous",
                       s["final_loss"]["mean"].get<double>(), s["final_loss"]["std"].get<double>(),
                       s["final_grad_norm2"]["mean"].get<double>(),
                       s["final_grad_norm2"]["std"].get<double>()});
  }
  std::ostringstream os;
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%-32s %-12s %-13s %-14s %-24s %-24s %s\n", "run", "optimizer",
                "scheduler", "delays", "final_loss (mean+-std)", "grad_norm2 (mean+-std)",
                "delta_loss_vs_first");
  os << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-32s %-12s %-13s %-14s %-11.5e +- %-9.3e %-11.5e +- %-9.3e %+.5e\n",
                  r.dir.c_str(), r.optimizer.c_str(), r.scheduler.c_str(), r.profile.c_str(),
                  r.loss_mean, r.loss_std, r.gn2_mean, r.gn2_std, r.loss_mean - rows.front().loss_mean);
    os << buf;
  }
  return os.str();
}

VerifyOutcome verify_experiment(const ExperimentConfig& cfg) {
  if (cfg.optimizer != RuleKind::ormo)
    throw ConfigError("verify checks the ordered-momentum rule; set optimizer = ormo");
  if (cfg.scheduler != Scheduler::asynchronous)
    throw ConfigError("the identities are stated over asynchronous traces; set scheduler = asynchronous");
  if (!cfg.hp.lr_schedule.empty())
    throw ConfigError("verify requires a constant learning rate; drop lr_schedule");

  const auto problem = make_problem(cfg.problem);
  VerifyOutcome out;
  std::ostringstream os;
  for (const std::uint64_t seed : cfg.seeds) {
    const RunResult rr = run_one_seed(cfg, *problem, seed, /*record=*/true, /*with_metrics=*/false);
    const RunRecord& rec = *rr.record;
    const VerificationReport rep = verify_run(rec);
    out.pass = out.pass && rep.identity1.pass && rep.identity2.pass && rep.identity3.pass && rep.identity4.pass;

    os << "seed " << seed << " (K=" << cfg.K << ", T=" << cfg.T << ", beta=" << cfg.hp.beta
       << ", eta=" << cfg.hp.eta << "): aux evaluated through t=" << rep.aux_reached << "\n";
    os << format_report(rep);

    // Empirical assumption constants from up to 200 evenly spaced
    // (parameter, gradient) observations.
    std::vector<std::pair<Vec, Vec>> obs;
    const auto T = static_cast<std::int64_t>(rec.trace.size());
    const std::int64_t step = std::max<std::int64_t>(1, T / 200);
    for (std::int64_t t = 0; t < T; t += step) {
      const auto& r = rec.trace[static_cast<std::size_t>(t)];
      obs.emplace_back(rec.w_hist[static_cast<std::size_t>(r.ite)],
                       rec.grads[static_cast<std::size_t>(t)]);
    }
    const AssumptionEstimates est = assumption_constants(*problem, obs);
    os << "  observed constants: sigma2_hat=" << format_double(est.sigma2_hat)
       << " G2_hat=" << format_double(est.g2_hat) << " L=" << format_double(est.smoothness) << "\n";

    const DelayStats ds = delay_stats(rr.trace);
    os << "  delays: mean_tau=" << format_double(ds.mean_tau) << " max_tau=" << ds.max_tau << "\n";
  }
  os << (out.pass ? "verification passed" : "verification FAILED") << "\n";
  out.text = os.str();
  return out;
}

void write_dataset_csv(const Problem& p, std::ostream& os) {
  const auto cols = p.dataset_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) os << ',';
    os << cols[i];
  }
  os << '\n';
  for (Index i = 0; i < p.size(); ++i) {
    const auto row = p.dataset_row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) os << ',';
      os << format_double(row[j]);
    }
    os << '\n';
  }
}

}  // namespace pssim
