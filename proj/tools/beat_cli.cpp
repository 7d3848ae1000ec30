#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "beat/checkpoint.hpp"
#include "beat/dataset_io.hpp"
#include "beat/error.hpp"
#include "beat/harness.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool dry_run = false;
};

void add_common(CLI::App* cmd, Options& opt) {
  cmd->add_option("--config", opt.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", opt.seed, "override the config seed");
  cmd->add_option("--out", opt.out, "override the output directory");
  cmd->add_flag("--dry-run", opt.dry_run, "print the resolved config and exit");
}

beat::ExperimentConfig resolve(const Options& opt) {
  nlohmann::json doc = nlohmann::json::parse(beat::read_text_file(opt.config), nullptr, false);
  if (doc.is_discarded()) throw beat::ParseError("config '" + opt.config + "' is not valid JSON", 1, 0);
  if (opt.seed) doc["seed"] = *opt.seed;
  if (opt.out) doc["output_dir"] = *opt.out;
  return beat::ExperimentConfig::from_json(doc);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BEAT: Bayesian energy-based adversarial training for skeletal motion"};
  app.set_version_flag("--version", beat::kToolkitVersion);
  app.require_subcommand(1);
  Options opt;
  auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
  auto* train = app.add_subcommand("train", "train the configured defenses");
  auto* eval = app.add_subcommand("evaluate", "attack trained models and write metrics");
  auto* grad = app.add_subcommand("grad-analysis", "expected loss-gradient statistics");
  for (auto* cmd : {gen, train, eval, grad}) add_common(cmd, opt);
  CLI11_PARSE(app, argc, argv);

  try {
    beat::configure_logging_from_env();
    const beat::ExperimentConfig cfg = resolve(opt);
    if (opt.dry_run) {
      nlohmann::json doc = cfg.to_json();
      doc["config_digest"] = cfg.digest();
      std::cout << doc.dump(2) << "\n";
      return 0;
    }
    if (gen->parsed()) {
      const auto s = beat::cmd_generate(cfg);
      std::cout << "classes=" << s.classes << " train=" << s.train_size << " test=" << s.test_size
                << " dir=" << s.dir.string() << "\n";
    } else if (train->parsed()) {
      const auto rec = beat::cmd_train(cfg);
      for (const auto& [name, path] : rec.checkpoints) std::cout << name << " " << path << "\n";
    } else if (eval->parsed()) {
      const auto rec = beat::cmd_evaluate(cfg);
      for (const auto& r : rec.reports)
        std::cout << r.model << " " << r.attack << " accuracy=" << r.clean_accuracy << " asr=" << r.asr << "\n";
    } else if (grad->parsed()) {
      beat::cmd_grad_analysis(cfg);
      std::cout << (cfg.output_dir / "grad_analysis.json").string() << "\n";
    }
  } catch (const beat::Error& e) {
    std::cerr << "error[" << e.kind() << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
