#include "pssim/harness.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

// Exit codes: 0 success, 1 runtime error, 2 config error, 3 verification failure.
enum : int { exit_ok = 0, exit_runtime = 1, exit_config = 2, exit_verify = 3 };

pssim::ExperimentConfig load_with_overrides(const std::string& config_path,
                                            const std::vector<std::string>& overrides) {
  auto kv = pssim::parse_kv_file(config_path);
  for (const auto& o : overrides) pssim::apply_override(kv, o);
  return pssim::build_config(kv);
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides) {
  const auto cfg = load_with_overrides(config_path, overrides);
  const auto result = pssim::run_experiment(cfg);
  std::cout << "wrote " << result.dir.string() << " (" << result.per_seed.size()
            << " seed(s)); final loss " << pssim::format_double(result.loss_mean) << " +- "
            << pssim::format_double(result.loss_std) << "\n";
  return exit_ok;
}

int cmd_verify(const std::string& config_path, const std::vector<std::string>& overrides) {
  const auto cfg = load_with_overrides(config_path, overrides);
  const auto outcome = pssim::verify_experiment(cfg);
  std::cout << outcome.text;
  return outcome.pass ? exit_ok : exit_verify;
}

int cmd_sweep(const std::string& config_path, const std::string& vary,
              const std::vector<std::string>& overrides) {
  const auto eq = vary.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == vary.size())
    throw pssim::ConfigError("--vary expects key=v1,v2,...");
  const std::string key = vary.substr(0, eq);
  std::vector<std::string> values;
  std::string cur;
  std::istringstream vs(vary.substr(eq + 1));
  while (std::getline(vs, cur, ','))
    if (!cur.empty()) values.push_back(cur);
  auto kv = pssim::parse_kv_file(config_path);
  for (const auto& o : overrides) pssim::apply_override(kv, o);
  const auto dirs = pssim::run_sweep(std::move(kv), key, values);
  for (const auto& d : dirs) std::cout << "wrote " << d.string() << "\n";
  return exit_ok;
}

int cmd_report(const std::vector<std::string>& dirs) {
  std::cout << pssim::compare_report(dirs);
  return exit_ok;
}

int cmd_dump_dataset(const std::string& config_path, const std::vector<std::string>& overrides,
                     const std::string& out_path) {
  const auto cfg = load_with_overrides(config_path, overrides);
  const auto problem = pssim::make_problem(cfg.problem);
  if (out_path.empty()) {
    pssim::write_dataset_csv(*problem, std::cout);
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw pssim::Error("cannot write '" + out_path + "'");
    pssim::write_dataset_csv(*problem, out);
  }
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pssim: deterministic parameter-server simulator for asynchronous SGD variants"};
  app.require_subcommand(1);

  std::string config_path, vary, dump_out;
  std::vector<std::string> report_dirs, overrides;

  const auto add_set = [&overrides](CLI::App* cmd) {
    cmd->add_option("--set", overrides, "key=value override, repeatable");
  };

  auto* run_cmd = app.add_subcommand("run", "run an experiment config and write CSV/JSON results");
  run_cmd->add_option("config", config_path, "experiment config file")->required();
  add_set(run_cmd);

  auto* verify_cmd =
      app.add_subcommand("verify", "check the ordered-momentum identities on recorded runs");
  verify_cmd->add_option("config", config_path, "experiment config file")->required();
  add_set(verify_cmd);

  auto* sweep_cmd = app.add_subcommand("sweep", "run the config once per value of one key");
  sweep_cmd->add_option("config", config_path, "experiment config file")->required();
  sweep_cmd->add_option("--vary", vary, "key=v1,v2,... to sweep over")->required();
  add_set(sweep_cmd);

  auto* report_cmd = app.add_subcommand("report", "tabulate previously written runs side by side");
  report_cmd->add_option("dirs", report_dirs, "run directories (with summary.json)")
      ->required()
      ->expected(-1);

  auto* dump_cmd = app.add_subcommand("dump-dataset", "export the generated dataset as CSV");
  dump_cmd->add_option("config", config_path, "experiment config file")->required();
  add_set(dump_cmd);
  dump_cmd->add_option("--out", dump_out, "output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_config;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(config_path, overrides);
    if (verify_cmd->parsed()) return cmd_verify(config_path, overrides);
    if (sweep_cmd->parsed()) return cmd_sweep(config_path, vary, overrides);
    if (report_cmd->parsed()) return cmd_report(report_dirs);
    if (dump_cmd->parsed()) return cmd_dump_dataset(config_path, overrides, dump_out);
    return exit_config;
  } catch (const pssim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const pssim::VerifyError& e) {
    std::cerr << "verification error: " << e.what() << "\n";
    return exit_verify;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_runtime;
  }
}
