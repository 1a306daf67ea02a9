// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ltgen/cli/config.hpp"
#include "ltgen/cli/pipeline.hpp"
#include "ltgen/core/error.hpp"

namespace {

using namespace ltgen;

constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDependency = 3;
constexpr int kExitNumeric = 4;

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> classes;
  std::optional<double> ratio;
  std::optional<std::size_t> threads;
  std::vector<std::string> settings;
};

cli::ExperimentConfig resolve(const GlobalOptions& g) {
  cli::ExperimentConfig config = g.config_path.empty() ? cli::ExperimentConfig{} : cli::load_config(g.config_path);
  for (const auto& kv : g.settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    cli::apply_setting(config, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  if (g.seed) config.seed = *g.seed;
  if (g.out) config.out = *g.out;
  if (g.classes) config.data.num_classes = *g.classes;
  if (g.ratio) config.data.imbalance_ratio = *g.ratio;
  if (g.threads) config.rlcas.threads = *g.threads;
  config.sync_seeds();
  cli::validate(config);
  return config;
}

cli::RunSpec run_spec(const cli::ExperimentConfig& config, const std::string& strategy, const std::string& variant) {
  cli::RunSpec run;
  run.strategy = strategy.empty() ? config.strategy : clf::parse_strategy(strategy);
  run.variant = cli::parse_variant(variant);
  return run;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ltgen: long-tail synthetic augmentation experiments"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config_path, "Config file (key = value lines)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--classes", g.classes, "Number of classes");
  app.add_option("--ratio", g.ratio, "Imbalance ratio (head / tail count)");
  app.add_option("--threads", g.threads, "Worker threads for episode rollouts");
  app.add_option("--set", g.settings, "Override a config key: key=value")->take_all();

  std::string variant = "sketch";
  std::string strategy;
  auto* gen = app.add_subcommand("gen-data", "Generate the long-tailed dataset");
  auto* synth = app.add_subcommand("train-synth", "Train a synthesizer");
  auto* pool = app.add_subcommand("sample-pool", "Sample the synthetic pool");
  auto* train = app.add_subcommand("train-clf", "Train a classifier");
  auto* eval = app.add_subcommand("eval", "Evaluate a classifier on the test split");
  auto* report = app.add_subcommand("report", "Write report.md and report.json");
  auto* pipeline = app.add_subcommand("pipeline", "Run every stage for every report row");
  for (auto* sub : {synth, pool, train, eval}) {
    sub->add_option("--variant", variant, "Synthesizer variant: class or sketch")->capture_default_str();
  }
  for (auto* sub : {train, eval}) {
    sub->add_option("--strategy", strategy, "baseline, fixed-mix, class-balanced-resample or rl-cas");
  }
  for (auto* sub : {gen, synth, pool, train, eval, report, pipeline}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    const auto config = resolve(g);
    std::filesystem::path produced;
    if (gen->parsed()) {
      produced = cli::cmd_gen_data(config);
    } else if (synth->parsed()) {
      produced = cli::cmd_train_synth(config, cli::parse_variant(variant));
    } else if (pool->parsed()) {
      produced = cli::cmd_sample_pool(config, cli::parse_variant(variant));
    } else if (train->parsed()) {
      produced = cli::cmd_train_clf(config, run_spec(config, strategy, variant));
    } else if (eval->parsed()) {
      produced = cli::cmd_eval(config, run_spec(config, strategy, variant));
    } else if (report->parsed()) {
      produced = cli::cmd_report(config);
    } else if (pipeline->parsed()) {
      produced = cli::cmd_pipeline(config);
    }
    std::cout << produced.string() << "\n";
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DependencyError& e) {
    std::cerr << "dependency error: " << e.what() << "\n";
    return kExitDependency;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
}
