#pragma once

#include "pssim/config.hpp"
#include "pssim/verify.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace pssim {

/// %.17g rendering used for every double written to CSV, so that equal
/// doubles always produce equal bytes.
std::string format_double(double v);

/// Output directory after applying the PSSIM_OUT_ROOT environment variable:
/// a relative out_dir is rooted there when the variable is set.
std::filesystem::path resolve_out_dir(const std::string& out_dir);

struct SeedSummary {
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  double final_grad_norm2 = 0.0;
  double final_sim_time = 0.0;
};

struct ExperimentResult {
  std::filesystem::path dir;
  std::vector<SeedSummary> per_seed;
  double loss_mean = 0.0;
  double loss_std = 0.0;
};

/// Runs the experiment once per seed and writes, under the resolved out_dir:
/// metrics_seed<S>.csv and trace_seed<S>.csv per seed, the resolved config
/// as config.txt, and summary.json with per-seed and aggregate results.
/// Identical configs produce byte-identical files.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Runs one experiment per value of `vary_key`, each in its own
/// <out_dir>/<key>=<value> subdirectory. Returns the run directories.
std::vector<std::filesystem::path> run_sweep(std::map<std::string, std::string> base_kv,
                                             const std::string& vary_key,
                                             const std::vector<std::string>& values);

/// Side-by-side table of previously written runs (their summary.json files).
/// Runs must agree on the problem, K and T; otherwise they are incomparable
/// and this throws.
std::string compare_report(const std::vector<std::string>& dirs);

struct VerifyOutcome {
  bool pass = true;
  std::string text;
};

/// Records one ordered-momentum run per seed and checks the four identities
/// on each, reporting residuals, delay statistics, and the empirical
/// assumption constants. Requires optimizer=ormo, an asynchronous scheduler,
/// and no lr_schedule.
VerifyOutcome verify_experiment(const ExperimentConfig& cfg);

/// The generated dataset as CSV (header plus n rows).
void write_dataset_csv(const Problem& p, std::ostream& os);

}  // namespace pssim
