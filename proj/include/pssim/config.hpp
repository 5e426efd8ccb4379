#pragma once

#include "pssim/delay.hpp"
#include "pssim/engine.hpp"
#include "pssim/optim.hpp"
#include "pssim/problems.hpp"
#include "pssim/types.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pssim {

/// One experiment: a problem instance, a cluster, an update rule, and the
/// seeds to repeat it over.
struct ExperimentConfig {
  ProblemSpec problem;
  int K = 0;
  std::int64_t T = 0;
  RuleKind optimizer = RuleKind::asgd;
  Scheduler scheduler = Scheduler::asynchronous;
  HyperParams hp;  // hp.workers mirrors K
  DelayModel delay;
  int batch = 64;
  std::vector<std::uint64_t> seeds = {1};
  std::int64_t metric_stride = 50;
  std::string out_dir = "runs";
};

/// Key -> value pairs from a flat `key = value` file ('#' comments, blank
/// lines ignored). Duplicate keys are an error.
std::map<std::string, std::string> parse_kv_file(const std::string& path);
std::map<std::string, std::string> parse_kv_text(const std::string& text, const std::string& origin);

/// Builds and validates a config from key/value pairs. Unknown keys are an
/// error; so are combinations the update rules are not defined for (e.g. a
/// synchronous-only rule under the asynchronous scheduler).
ExperimentConfig build_config(const std::map<std::string, std::string>& kv);

inline ExperimentConfig load_config(const std::string& path) { return build_config(parse_kv_file(path)); }

/// Canonical `key = value` text; load_config of it reproduces the config.
std::string dump_config(const ExperimentConfig& cfg);

/// Re-parses `key=value` into an existing key/value map (sweep overrides).
void apply_override(std::map<std::string, std::string>& kv, const std::string& assignment);

}  // namespace pssim
