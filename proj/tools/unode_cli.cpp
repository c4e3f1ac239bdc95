// unode: augmentation selection, training, scoring, evaluation and theory checks.
#include <exception>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "unode/cli/commands.hpp"

int main(int argc, char** argv) {
  using namespace unode;
  CLI::App app{"Near-distribution novelty detection toolkit"};
  app.require_subcommand(1);
  // Global flags are accepted after the subcommand too.
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  app.add_option("--config", config_path, "key = value config file");
  app.add_option("--seed", seed, "overrides the config seed");
  app.add_option("--out", out_dir, "overrides the config output directory");

  const std::map<std::string, std::pair<std::string, std::function<int(const Config&)>>> commands{
      {"augweights", {"rank hard augmentations and write weights.csv", cli::cmd_augweights}},
      {"train", {"train on the inlier class; writes checkpoint, loss log and bank", cli::cmd_train}},
      {"score", {"score the test split with a trained checkpoint", cli::cmd_score}},
      {"eval-oneclass", {"one-class AUROC per class", cli::cmd_eval_oneclass}},
      {"eval-corrupt", {"one-class AUROC under test-time corruptions", cli::cmd_eval_corrupt}},
      {"eval-multiclass", {"multi-class inliers against external sets", cli::cmd_eval_multiclass}},
      {"theory", {"Gaussian adversarial error sweep with Monte Carlo checks", cli::cmd_theory}},
  };
  for (const auto& [name, entry] : commands) app.add_subcommand(name, entry.first);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    Config cfg = config_path.empty() ? Config{} : Config::load(config_path);
    if (seed) cfg.set("seed", std::to_string(*seed), "--seed");
    if (!out_dir.empty()) cfg.set("out_dir", out_dir, "--out");
    for (const auto* sub : app.get_subcommands()) return commands.at(sub->get_name()).second(cfg);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
