// Experiment driver: ctxbnn <command> [--config path] [--seed n] [--out dir] [--task kcbs|rhombus]

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ctxbnn/errors.hpp"
#include "ctxbnn/experiment.hpp"

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kDivergence = 3, kIo = 4 };

}  // namespace

int main(int argc, char** argv) {
  using namespace ctxbnn;

  CLI::App app{"Contextuality classification with standard and Bayesian neural networks"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> task;
  app.add_option("--config", config_path, "JSON experiment config");
  app.add_option("--seed", seed, "Base seed (overrides the config)");
  app.add_option("--out", out_dir, "Output directory (overrides the config)");
  app.add_option("--task", task, "kcbs or rhombus (overrides the config)")
      ->check(CLI::IsMember({"kcbs", "rhombus"}));

  const char* help[] = {
      "Write training and test datasets",
      "Train the point-estimate network on the training set",
      "Sample the Bayesian network posterior with HMC",
      "Accuracy against training size for both models",
      "Uncertainty histograms over all and wrong predictions",
      "Misclassification probability against uncertainty thresholds",
      "Rhombus toy task on uniform and corner-depleted data",
      "Every command above in sequence",
  };
  const auto& names = experiment::command_names();
  for (std::size_t i = 0; i < names.size(); ++i) app.add_subcommand(names[i], help[i]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    experiment::ExperimentConfig cfg =
        config_path ? experiment::load_config(*config_path) : experiment::ExperimentConfig{};
    if (seed) cfg.seed = *seed;
    if (out_dir) cfg.out_dir = *out_dir;
    if (task) cfg.task = *task == "kcbs" ? experiment::Task::Kcbs : experiment::Task::Rhombus;
    const auto* sub = app.get_subcommands().front();
    experiment::run_command(sub->get_name(), cfg, std::cout);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericDivergence& e) {
    std::cerr << "numeric divergence: " << e.what() << "\n";
    return kDivergence;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
