#include "pssim/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace pssim {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const auto v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': '" + value + "' is not an integer");
  }
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  const auto v = parse_int(key, value);
  if (v < 0) throw ConfigError("key '" + key + "': must be >= 0");
  return static_cast<std::uint64_t>(v);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const auto v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': '" + value + "' is not a number");
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) parts.push_back(trim(cur));
  return parts;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "problem", "dim", "n", "problem_seed", "lambda",
      "noise_sigma", "smoothness", "cond",
      "label_flip",
      "net_input", "net_hidden", "target_noise",
      "K", "T", "optimizer", "scheduler", "eta", "beta", "lr_schedule",
      "batch", "seeds", "metric_stride", "out_dir",
      "delay", "mean_compute_time", "slow_fraction", "slow_factor", "lognormal_sigma",
  };
  return keys;
}

}  // namespace

std::map<std::string, std::string> parse_kv_text(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key or value");
    if (!kv.emplace(key, value).second)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }
  return kv;
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_kv_text(ss.str(), path);
}

void apply_override(std::map<std::string, std::string>& kv, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  const auto key = trim(assignment.substr(0, eq));
  const auto value = trim(assignment.substr(eq + 1));
  if (key.empty() || value.empty()) throw ConfigError("override '" + assignment + "' is not key=value");
  kv[key] = value;
}

ExperimentConfig build_config(const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    (void)value;
    if (!known_keys().count(key)) throw ConfigError("unknown config key '" + key + "'");
  }

  std::vector<std::string> missing;
  for (const char* req : {"problem", "K", "T", "optimizer", "eta"})
    if (!kv.count(req)) missing.push_back(req);
  if (!missing.empty()) {
    std::string msg = "missing required keys:";
    for (const auto& m : missing) msg += " " + m;
    throw ConfigError(msg + " (plus dim/n or net_input/net_hidden/n for the chosen problem)");
  }

  const auto get = [&kv](const char* key) -> const std::string& { return kv.at(key); };
  const auto maybe = [&kv](const char* key) -> const std::string* {
    const auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };

  ExperimentConfig cfg;

  cfg.problem.kind = problem_kind_from_string(get("problem"));
  const bool is_net = cfg.problem.kind == ProblemKind::two_layer_net;
  if (is_net) {
    if (maybe("dim"))
      throw ConfigError("dim is derived for two_layer_net; set net_input and net_hidden");
    if (!maybe("net_input") || !maybe("net_hidden"))
      throw ConfigError("two_layer_net requires net_input and net_hidden");
    cfg.problem.net_input = parse_int("net_input", get("net_input"));
    cfg.problem.net_hidden = parse_int("net_hidden", get("net_hidden"));
    cfg.problem.dim = cfg.problem.net_hidden * (cfg.problem.net_input + 2) + 1;
  } else {
    if (maybe("net_input") || maybe("net_hidden") || maybe("target_noise"))
      throw ConfigError("net_* keys apply only to two_layer_net");
    if (!maybe("dim")) throw ConfigError("problem '" + get("problem") + "' requires dim");
    cfg.problem.dim = parse_int("dim", get("dim"));
  }
  if (!maybe("n")) throw ConfigError("problem '" + get("problem") + "' requires a dataset size n");
  cfg.problem.n = parse_int("n", get("n"));
  if (const auto* v = maybe("problem_seed")) cfg.problem.seed = parse_uint("problem_seed", *v);
  if (const auto* v = maybe("lambda")) cfg.problem.lambda = parse_double("lambda", *v);
  if (const auto* v = maybe("noise_sigma")) cfg.problem.noise_sigma = parse_double("noise_sigma", *v);
  if (const auto* v = maybe("smoothness")) cfg.problem.smoothness = parse_double("smoothness", *v);
  if (const auto* v = maybe("cond")) cfg.problem.cond = parse_double("cond", *v);
  if (const auto* v = maybe("label_flip")) cfg.problem.label_flip = parse_double("label_flip", *v);
  if (const auto* v = maybe("target_noise")) cfg.problem.target_noise = parse_double("target_noise", *v);
  if (cfg.problem.kind != ProblemKind::noisy_quadratic &&
      (maybe("noise_sigma") || maybe("smoothness") || maybe("cond")))
    throw ConfigError("noise_sigma/smoothness/cond apply only to noisy_quadratic");
  if (cfg.problem.kind != ProblemKind::logistic_regression && maybe("label_flip"))
    throw ConfigError("label_flip applies only to logistic_regression");
  validate(cfg.problem);

  const auto k64 = parse_int("K", get("K"));
  if (k64 < 1 || k64 > 4096) throw ConfigError("K must be in [1, 4096]");
  cfg.K = static_cast<int>(k64);
  cfg.T = parse_int("T", get("T"));
  if (cfg.T < 1) throw ConfigError("T must be >= 1");

  cfg.optimizer = rule_kind_from_string(get("optimizer"));
  cfg.scheduler =
      maybe("scheduler") ? scheduler_from_string(get("scheduler")) : default_scheduler(cfg.optimizer);
  if (!rule_allows(cfg.optimizer, cfg.scheduler))
    throw ConfigError("optimizer '" + to_string(cfg.optimizer) + "' is not defined for the " +
                      to_string(cfg.scheduler) + " scheduler");

  cfg.hp.eta = parse_double("eta", get("eta"));
  cfg.hp.beta = maybe("beta") ? parse_double("beta", get("beta")) : 0.9;
  cfg.hp.workers = cfg.K;
  if (const auto* v = maybe("lr_schedule")) {
    for (const auto& part : split(*v, ',')) {
      if (part.empty()) continue;
      const auto colon = part.find(':');
      if (colon == std::string::npos)
        throw ConfigError("lr_schedule entries must be iteration:multiplier, got '" + part + "'");
      cfg.hp.lr_schedule.emplace_back(parse_int("lr_schedule", trim(part.substr(0, colon))),
                                      parse_double("lr_schedule", trim(part.substr(colon + 1))));
    }
  }
  validate(cfg.hp);

  if (const auto* v = maybe("batch")) {
    const auto b = parse_int("batch", *v);
    if (b < 1) throw ConfigError("batch must be >= 1");
    cfg.batch = static_cast<int>(b);
  }
  if (const auto* v = maybe("metric_stride")) {
    cfg.metric_stride = parse_int("metric_stride", *v);
    if (cfg.metric_stride < 1) throw ConfigError("metric_stride must be >= 1");
  }
  if (const auto* v = maybe("seeds")) {
    cfg.seeds.clear();
    for (const auto& part : split(*v, ',')) {
      if (part.empty()) throw ConfigError("seeds must be a comma-separated integer list");
      cfg.seeds.push_back(parse_uint("seeds", part));
    }
    if (cfg.seeds.empty()) throw ConfigError("seeds must name at least one seed");
    auto sorted = cfg.seeds;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw ConfigError("seeds must be distinct");
  }
  if (const auto* v = maybe("out_dir")) cfg.out_dir = *v;

  if (const auto* v = maybe("delay")) cfg.delay.kind = delay_kind_from_string(*v);
  if (const auto* v = maybe("mean_compute_time")) cfg.delay.mean = parse_double("mean_compute_time", *v);
  if (const auto* v = maybe("slow_fraction")) cfg.delay.slow_fraction = parse_double("slow_fraction", *v);
  if (const auto* v = maybe("slow_factor")) cfg.delay.slow_factor = parse_double("slow_factor", *v);
  if (const auto* v = maybe("lognormal_sigma"))
    cfg.delay.lognormal_sigma = parse_double("lognormal_sigma", *v);
  validate(cfg.delay);

  return cfg;
}

std::string dump_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "problem = " << to_string(cfg.problem.kind) << "\n";
  if (cfg.problem.kind == ProblemKind::two_layer_net) {
    os << "net_input = " << cfg.problem.net_input << "\n";
    os << "net_hidden = " << cfg.problem.net_hidden << "\n";
    os << "target_noise = " << fmt(cfg.problem.target_noise) << "\n";
  } else {
    os << "dim = " << cfg.problem.dim << "\n";
  }
  os << "n = " << cfg.problem.n << "\n";
  os << "problem_seed = " << cfg.problem.seed << "\n";
  os << "lambda = " << fmt(cfg.problem.lambda) << "\n";
  if (cfg.problem.kind == ProblemKind::noisy_quadratic) {
    os << "noise_sigma = " << fmt(cfg.problem.noise_sigma) << "\n";
    os << "smoothness = " << fmt(cfg.problem.smoothness) << "\n";
    os << "cond = " << fmt(cfg.problem.cond) << "\n";
  }
  if (cfg.problem.kind == ProblemKind::logistic_regression)
    os << "label_flip = " << fmt(cfg.problem.label_flip) << "\n";
  os << "K = " << cfg.K << "\n";
  os << "T = " << cfg.T << "\n";
  os << "optimizer = " << to_string(cfg.optimizer) << "\n";
  os << "scheduler = " << to_string(cfg.scheduler) << "\n";
  os << "eta = " << fmt(cfg.hp.eta) << "\n";
  os << "beta = " << fmt(cfg.hp.beta) << "\n";
  if (!cfg.hp.lr_schedule.empty()) {
    os << "lr_schedule = ";
    for (std::size_t i = 0; i < cfg.hp.lr_schedule.size(); ++i) {
      if (i) os << ",";
      os << cfg.hp.lr_schedule[i].first << ":" << fmt(cfg.hp.lr_schedule[i].second);
    }
    os << "\n";
  }
  os << "batch = " << cfg.batch << "\n";
  os << "seeds = ";
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    if (i) os << ",";
    os << cfg.seeds[i];
  }
  os << "\n";
  os << "metric_stride = " << cfg.metric_stride << "\n";
  os << "out_dir = " << cfg.out_dir << "\n";
  os << "delay = " << to_string(cfg.delay.kind) << "\n";
  os << "mean_compute_time = " << fmt(cfg.delay.mean) << "\n";
  os << "slow_fraction = " << fmt(cfg.delay.slow_fraction) << "\n";
  os << "slow_factor = " << fmt(cfg.delay.slow_factor) << "\n";
  os << "lognormal_sigma = " << fmt(cfg.delay.lognormal_sigma) << "\n";
  return os.str();
}

}  // namespace pssim
