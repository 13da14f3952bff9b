// Command-line driver: train, eval, sweep, validate-config.
// Exit codes: 0 success, 1 runtime/I-O failure, 2 configuration error,
// 3 numerical abort.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "csr/config.hpp"
#include "csr/experiment.hpp"
#include "json.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "runs";
  std::optional<std::string> mode;
  bool trace = false;
  std::optional<double> duration_s;
  std::string checkpoints;
  std::optional<std::size_t> jobs;
};

void apply(const Overrides& o, csr::ExperimentConfig& c) {
  if (o.seed) c.seed = *o.seed;
  if (o.mode) c.mode = csr::parse_mode(*o.mode);
  if (o.trace) c.trace = true;
  if (o.duration_s) c.duration_s = *o.duration_s;
}

void print_summary(const csr::ExperimentConfig& c, csr::RunKind kind, const csr::RunResult& r) {
  nlohmann::json j{{"run", csr::to_string(kind)},
                   {"mode", csr::to_string(c.mode)},
                   {"run_dir", r.run_dir.string()},
                   {"throughput", r.metrics.throughput},
                   {"mean_delay_s", r.metrics.mean_delay_s},
                   {"per_ap_throughput", r.metrics.per_ap_throughput},
                   {"policy_updates", r.updates}};
  std::cout << j.dump() << std::endl;
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw csr::ConfigError("cannot open " + path);
  try {
    return nlohmann::json::parse(f, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw csr::ConfigError(path + ": " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coordinated spatial reuse simulator with hierarchical multi-agent PPO"};
  app.require_subcommand(1);
  Overrides o;

  auto add_common = [&](CLI::App* sub, bool run_flags) {
    sub->add_option("--config", o.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "base seed; component seeds derive from it");
    sub->add_option("--mode", o.mode, "hmarl | csma_baseline | ablation_ippo_hrl | ablation_marl_comnet");
    sub->add_option("--duration-s", o.duration_s, "simulated run length in seconds");
    if (run_flags) {
      sub->add_option("--out-dir", o.out_dir, "root directory for run outputs")->capture_default_str();
      sub->add_flag("--trace", o.trace, "write a per-TXOP events.jsonl");
    }
  };

  auto* train = app.add_subcommand("train", "train the learning APs and write checkpoints");
  add_common(train, true);
  auto* eval = app.add_subcommand("eval", "run frozen policies (or the CSMA/CA baseline)");
  add_common(eval, true);
  eval->add_option("--checkpoints", o.checkpoints, "checkpoint directory of a train run");
  auto* sweep = app.add_subcommand("sweep", "run the seed x mode x reward grid of a sweep file");
  sweep->add_option("--config", o.config, "sweep file: {base, seeds, modes, reward_variants, jobs}")
      ->required()
      ->check(CLI::ExistingFile);
  sweep->add_option("--out-dir", o.out_dir, "root directory for run outputs")->capture_default_str();
  sweep->add_option("--duration-s", o.duration_s, "simulated run length in seconds");
  sweep->add_option("--jobs", o.jobs, "worker threads");
  sweep->add_flag("--trace", o.trace, "write per-TXOP events for every run");
  auto* check = app.add_subcommand("validate-config", "parse and validate a config, print it in canonical form");
  add_common(check, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*sweep) {
      auto spec = csr::parse_sweep(read_json_file(o.config));
      if (o.duration_s) spec.base.duration_s = *o.duration_s;
      if (o.trace) spec.base.trace = true;
      if (o.jobs) spec.jobs = *o.jobs;
      if (spec.jobs == 0) throw csr::ConfigError("--jobs must be positive");
      const auto entries = csr::run_sweep(spec, o.out_dir);
      bool numerical = false, failed = false;
      for (const auto& e : entries) {
        if (!e.error.empty()) {
          std::cerr << "run " << csr::to_string(e.config.mode) << " seed " << e.config.seed << " failed: " << e.error
                    << '\n';
          numerical |= e.numerical_abort;
          failed = true;
        } else {
          print_summary(e.config, e.kind, e.result);
        }
      }
      return numerical ? kExitNumerical : failed ? kExitFailure : kExitOk;
    }

    auto cfg = csr::load_config(o.config);
    apply(o, cfg);
    if (*check) {
      csr::validate(cfg);
      std::cout << csr::to_json(cfg).dump(2) << '\n';
      std::cerr << "config ok: hash " << csr::config_hash(cfg) << '\n';
      return kExitOk;
    }
    const auto kind = *train ? csr::RunKind::Train : csr::RunKind::Eval;
    const auto r = csr::run_experiment(cfg, kind, o.out_dir, o.checkpoints);
    print_summary(cfg, kind, r);
    return kExitOk;
  } catch (const csr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const csr::nn::NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}
