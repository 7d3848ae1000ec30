#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "beat/attacks.hpp"
#include "beat/evaluation.hpp"
#include "beat/trainers.hpp"

namespace beat {

// Everything one experiment needs, loaded from a single JSON file. Unknown
// keys anywhere are rejected so typos cannot silently fall back to defaults.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "beat-run";
  // Directory holding train.jsonl / test.jsonl / topology.json; defaults to
  // <output_dir>/data.
  std::optional<std::filesystem::path> dataset_dir;
  SynthConfig generator;
  std::size_t hidden = 64;

  std::vector<std::string> defenses{"st"};  // trained by `train`, in order
  StandardTrainConfig st;
  AtConfig at;
  RsConfig rs;
  BeatTrainerConfig beat;
  std::optional<std::filesystem::path> base_checkpoint;

  std::vector<std::string> evaluate{"st"};  // models attacked by `evaluate`
  std::vector<AttackConfig> attacks{AttackConfig{}};
  std::size_t eval_samples = 0;  // 0 = the whole test split
  MetricThresholds thresholds;
  std::size_t gradient_samples = 0;  // 0 disables gradient analysis in `evaluate`
  std::size_t threads = 1;

  static ExperimentConfig from_json(const nlohmann::json& doc);
  static ExperimentConfig load(const std::filesystem::path& path);
  // Fully resolved config, every default spelled out.
  nlohmann::json to_json() const;
  // FNV-1a digest of the resolved config without output locations.
  std::string digest() const;

  std::filesystem::path data_dir() const;
  std::filesystem::path checkpoint_path(const std::string& defense) const;
  BaseArch arch(const Dataset& train) const;
};

extern const std::vector<std::string> kDefenseNames;

struct RunRecord {
  std::string command;
  std::string config_digest;
  std::uint64_t seed = 0;
  std::string tool_version;
  std::vector<std::pair<std::string, double>> timings;  // phase, seconds
  std::vector<MetricsReport> reports;
  std::map<std::string, std::string> checkpoints;  // defense -> path

  nlohmann::json to_json() const;
};

// Exclusive writer lock on an output directory, released on destruction.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::filesystem::path path_;
};

struct GenerateSummary {
  std::size_t classes = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::filesystem::path dir;
};

GenerateSummary cmd_generate(const ExperimentConfig& cfg);
RunRecord cmd_train(const ExperimentConfig& cfg);
RunRecord cmd_evaluate(const ExperimentConfig& cfg);
RunRecord cmd_grad_analysis(const ExperimentConfig& cfg);

// Reads BEAT_LOG (trace, debug, info, warn, error, off) and sets the log level.
void configure_logging_from_env();

}  // namespace beat
