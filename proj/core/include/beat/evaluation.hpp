#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "beat/attacks.hpp"
#include "beat/models.hpp"

namespace beat {

// Percentage of argmax-correct predictions. Throws ConfigError on an empty set.
double accuracy(const Classifier& model, const Dataset& dataset);
// Indices of samples the model classifies correctly.
std::vector<std::size_t> correctly_classified(const Classifier& model, const Dataset& dataset);

struct PerceptualMetrics {
  double l = 0.0;               // mean joint position deviation
  double accel = 0.0;           // mean l2 deviation of second differences
  double angular_accel = 0.0;   // mean |second difference| deviation of per-bone frame-to-frame angles
  double bone_violation = 0.0;  // mean relative bone-length change, percent
};

// Throws ShapeError on incompatible motions or fewer than 4 frames and
// NumericError if x has a zero-length bone.
PerceptualMetrics perceptual_metrics(const Motion& x, const Motion& x_adv);

struct MetricThresholds {
  double a1 = 0.1;   // l threshold
  double a2 = 10.0;  // bone violation threshold, percent
};

struct AttackOutcome {
  std::size_t index = 0;  // position in the evaluated dataset
  AttackResult result;
};

struct GradientAnalysis {
  double threshold = 1e-10;
  std::vector<double> components;
  double fraction_below = 0.0;  // in [0,1]
  double median_abs = 0.0;

  nlohmann::json summary_json() const;
};

struct MetricsReport {
  std::string model;
  std::string attack;
  double clean_accuracy = 0.0;
  std::size_t evaluated = 0;  // correctly classified samples attacked
  std::size_t successes = 0;
  double asr = 0.0;
  // Over successful adversaries.
  PerceptualMetrics mean;
  PerceptualMetrics max;
  double pct_l_ge_a1 = 0.0;
  double pct_bone_ge_a2 = 0.0;
  MetricThresholds thresholds;
  std::optional<GradientAnalysis> gradients;

  nlohmann::json to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

inline constexpr const char* kMetricsCsvSchema = "beat-metrics-v1";

// Attacks every correctly classified sample; sample i uses the stream
// derive_seed(cfg.seed, i). Throws ConfigError if no sample is correct.
std::vector<AttackOutcome> run_attacks(const Classifier& model, const Dataset& dataset, const AttackConfig& cfg,
                                       const Dataset* pool = nullptr, std::size_t threads = 1);

double attack_success_rate(const Classifier& model, const Dataset& dataset, const AttackConfig& cfg,
                           const Dataset* pool = nullptr, std::size_t threads = 1);

MetricsReport summarize(const std::string& model_name, const Classifier& model, const Dataset& dataset,
                        const AttackConfig& cfg, const std::vector<AttackOutcome>& outcomes,
                        const MetricThresholds& thresholds = {});

// Loss-gradient components restricted to one random frame of each of
// `sample_count` random samples (with replacement).
GradientAnalysis gradient_analysis(const Classifier& model, const Dataset& dataset, std::size_t sample_count,
                                   std::uint64_t seed, double threshold = 1e-10);

}  // namespace beat
