#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "beat/models.hpp"
#include "beat/samplers.hpp"

namespace beat {

// Plain minibatch gradient descent on cross-entropy.
struct StandardTrainConfig {
  std::size_t epochs = 40;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct TrainingTrace {
  std::vector<double> epoch_loss;  // mean minibatch loss per epoch
};

BaseClassifier train_standard(const BaseArch& arch, const Dataset& dataset, const StandardTrainConfig& cfg,
                              TrainingTrace* trace = nullptr);

// Standard adversarial training: PGD inner maximization in an l-infinity ball,
// gradient descent on the adversarial loss.
struct AtConfig {
  double epsilon = 0.005;
  std::size_t inner_iterations = 20;
  double inner_step = 0.00125;
  StandardTrainConfig outer;
};

BaseClassifier train_at(const BaseArch& arch, const Dataset& dataset, const AtConfig& cfg,
                        TrainingTrace* trace = nullptr);

// Randomized smoothing: Gaussian noise followed by the temporal Gaussian filter.
struct RsConfig {
  double delta = 0.1;
  std::size_t draws = 8;
  bool train_with_noise = true;
  std::size_t train_epochs = 1;
  std::uint64_t seed = 0;
};

// Noise-augmented fine-tuning of an existing classifier (one smoothed draw per
// sample per epoch). Returns the input unchanged when training is disabled.
BaseClassifier train_rs(const BaseClassifier& base, const Dataset& dataset, const RsConfig& cfg,
                        const StandardTrainConfig& optimizer);

// Average of softmax predictions over `draws` noisy, filtered copies. With
// delta = 0 no smoothing is applied and the plain prediction is returned.
std::vector<double> predict_rs(const Classifier& model, const Motion& motion, const RsConfig& cfg,
                               std::mt19937_64& rng);
Motion smooth_draw(const Motion& motion, double delta, std::mt19937_64& rng);

// Classifier view of a randomized-smoothing defense. Every query reuses the
// same noise stream (seeded from cfg.seed) so predictions are deterministic;
// the loss gradient is averaged over the same draws.
class SmoothedClassifier final : public Classifier {
 public:
  SmoothedClassifier(BaseClassifier base, RsConfig cfg) : base_(std::move(base)), cfg_(cfg) {}
  const BaseClassifier& base() const noexcept { return base_; }
  std::size_t class_count() const override { return base_.class_count(); }
  std::vector<double> predict_proba(const Motion& motion) const override;
  Tensor loss_input_gradient(const Motion& motion, int label) const override;

 private:
  BaseClassifier base_;
  RsConfig cfg_;
};

struct BeatTrainerConfig {
  std::size_t iterations = 100;   // N_tra
  std::size_t heads = 5;          // N
  double w1 = 1.0;
  double w2 = 0.3;
  double w3 = 0.1;
  double budget = 0.05;           // b
  std::size_t negative_steps = 10;   // M1
  std::size_t adversary_steps = 10;  // M2
  std::size_t batch_positive = 32;   // L1, also the minibatch size
  std::size_t batch_negative = 32;   // L2
  SgldConfig sgld{0.01, 0.005, 10};
  double lambda = 1e-3;
  SgahmcConfig sgahmc{};
  double head_init_std = 0.01;
  std::size_t pcd_capacity = 512;
  double pcd_reinit = 0.05;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  // Settings used when defending against decision-based attacks.
  static BeatTrainerConfig blackbox_preset();
  void validate() const;
};

struct BeatTrace {
  // Per head, per outer iteration: weighted loss whose gradient drove SG-AHMC.
  std::vector<std::vector<double>> head_loss;
};

// Post-train Bayesian training of N appended heads on a frozen base. Each head
// owns its random stream, negative buffer and sampler state, so the result does
// not depend on how heads are scheduled across threads. Throws DigestError if
// the base parameters change.
BeatEnsemble train_beat(const BaseClassifier& base, const Dataset& dataset, const BeatTrainerConfig& cfg,
                        BeatTrace* trace = nullptr);

// Seed for an independent sub-stream (per head, per sample, ...).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace beat
