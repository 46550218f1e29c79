// Command-line driver: mmu <subcommand> --config FILE --out DIR [options]

#include <CLI11.hpp>

#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include "mmu/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Certified minimax unlearning experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", mode;
  long long seed_override = -1;
  long long trials = 0;
  bool timing = false;

  using Runner = std::function<void(const mmu::ExperimentConfig&, const std::string&, const mmu::RunOptions&)>;
  const std::map<std::string, std::pair<std::string, Runner>> commands = {
      {"gen-data", {"generate a dataset CSV", [](const auto& e, const auto& o, const auto&) { mmu::cmd_gen_data(e, o); }}},
      {"train", {"train and store the model with its memory variables", mmu::cmd_train}},
      {"unlearn", {"delete samples from a trained model", mmu::cmd_unlearn}},
      {"retrain", {"retrain from scratch without the deleted samples", mmu::cmd_retrain}},
      {"evaluate", {"compare all unlearning updates against retraining", mmu::cmd_evaluate}},
      {"audit", {"closeness-versus-bound audit over random instances", mmu::cmd_audit}},
      {"sweep", {"deletion-capacity sweep over an m grid", mmu::cmd_sweep}},
  };
  for (const auto& [name, entry] : commands) {
    CLI::App* sub = app.add_subcommand(name, entry.first);
    sub->add_option("--config", config_path, "experiment config file")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed-override", seed_override, "replace the config seed");
    sub->add_option("--mode", mode, "unlearning mode: alg2, alg3 or online");
    sub->add_option("--trials", trials, "noise draws per risk estimate");
    sub->add_flag("--timing", timing, "record wall time (makes reports nondeterministic)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return mmu::kExitConfig;
  }

  try {
    mmu::Config cfg = mmu::Config::load(config_path);
    if (seed_override >= 0) cfg.set("seed", std::to_string(seed_override));
    if (!mode.empty()) cfg.set("mode", mode);
    if (trials > 0) cfg.set("trials", std::to_string(trials));
    const mmu::ExperimentConfig e = mmu::ExperimentConfig::from(cfg);
    for (const auto& [name, entry] : commands) {
      if (app.got_subcommand(name)) entry.second(e, out_dir, mmu::RunOptions{timing});
    }
  } catch (const std::exception& err) {
    std::fprintf(stderr, "mmu: %s\n", err.what());
    return mmu::exit_code_for(err);
  }
  return mmu::kExitOk;
}
