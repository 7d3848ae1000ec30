#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "beat/autodiff.hpp"
#include "beat/param_vector.hpp"
#include "beat/skeleton.hpp"

namespace beat {

// Anything that maps a motion to class probabilities and can report the input
// gradient of its classification loss. Attacks and metrics only see this.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::size_t class_count() const = 0;
  // Length-C probability vector.
  virtual std::vector<double> predict_proba(const Motion& motion) const = 0;
  // d(cross-entropy)/d(positions), shape [M,J,3]. For ensembles this is the
  // member-averaged loss gradient.
  virtual Tensor loss_input_gradient(const Motion& motion, int label) const = 0;

  int predict(const Motion& motion) const;
};

struct BaseArch {
  std::size_t frames = 16;
  std::size_t joints = 8;
  std::size_t hidden = 64;
  std::size_t classes = 4;

  std::size_t input_dim() const { return frames * joints * 3; }
  nlohmann::json to_json() const;
  static BaseArch from_json(const nlohmann::json& doc);
  friend bool operator==(const BaseArch&, const BaseArch&) = default;
};

// Flattens motions into the [B, M*J*3] design matrix the networks consume.
Tensor stack_inputs(const std::vector<const Motion*>& motions);
Tensor stack_inputs(const Motion& motion);

// flatten -> affine(hidden) -> ReLU -> affine(C).
class BaseClassifier final : public Classifier {
 public:
  BaseClassifier(BaseArch arch, ParamVector params);

  static BaseClassifier zeros(const BaseArch& arch);
  // He-normal weights, zero biases.
  static BaseClassifier init(const BaseArch& arch, std::uint64_t seed);

  const BaseArch& arch() const noexcept { return arch_; }
  const ParamVector& params() const noexcept { return params_; }
  ParamVector& params() noexcept { return params_; }
  std::string digest() const { return params_.digest(); }

  // Logits for inputs `x` [B, in]. With `trainable` the four parameter blocks
  // are graph parameters and their handles are returned through `param_vars`.
  ad::Var forward(ad::Graph& g, ad::Var x, bool trainable = false,
                  std::vector<ad::Var>* param_vars = nullptr) const;

  std::vector<double> logits(const Motion& motion) const;
  // Logits for a batch [B, in] without building a graph; shape [B, C].
  Tensor logits_batch(const Tensor& inputs) const;

  std::size_t class_count() const override { return arch_.classes; }
  std::vector<double> predict_proba(const Motion& motion) const override;
  Tensor loss_input_gradient(const Motion& motion, int label) const override;

 private:
  void check_input(const Motion& motion) const;
  BaseArch arch_;
  ParamVector params_;
};

// Two affine layers C -> C -> C with tanh in between, applied to base logits.
class AppendedHead {
 public:
  AppendedHead(std::size_t classes, ParamVector params);
  static AppendedHead zeros(std::size_t classes);
  // Gaussian weights with the given std, zero biases.
  static AppendedHead init(std::size_t classes, double weight_std, std::mt19937_64& rng);

  std::size_t classes() const noexcept { return classes_; }
  const ParamVector& params() const noexcept { return params_; }
  ParamVector& params() noexcept { return params_; }

  // f(z) for base logits z [B, C].
  ad::Var forward(ad::Graph& g, ad::Var z, bool trainable = false,
                  std::vector<ad::Var>* param_vars = nullptr) const;
  // Skip-connected member logits z + f(z).
  ad::Var member_logits(ad::Graph& g, ad::Var z, bool trainable = false,
                        std::vector<ad::Var>* param_vars = nullptr) const;

  // Same maps with parameters supplied as graph nodes {l1.w, l1.b, l2.w, l2.b},
  // so several inputs can share one set of trainable leaves.
  static ad::Var forward_with(ad::Var z, const std::vector<ad::Var>& params);
  static ad::Var member_logits_with(ad::Var z, const std::vector<ad::Var>& params);

 private:
  std::size_t classes_;
  ParamVector params_;
};

// Frozen base classifier plus N appended heads; predictions average member
// softmax outputs.
class BeatEnsemble final : public Classifier {
 public:
  BeatEnsemble(BaseClassifier base, std::vector<AppendedHead> heads);

  const BaseClassifier& base() const noexcept { return base_; }
  const std::vector<AppendedHead>& heads() const noexcept { return heads_; }
  std::vector<AppendedHead>& heads() noexcept { return heads_; }
  std::size_t size() const noexcept { return heads_.size(); }
  // Digest of the base parameters recorded at construction.
  const std::string& base_digest() const noexcept { return base_digest_; }
  // Throws DigestError if the base parameters no longer match the recorded digest.
  void verify_base() const;
  // Ensemble made of the first `n` heads.
  BeatEnsemble prefix(std::size_t n) const;

  std::vector<double> base_logits(const Motion& motion) const { return base_.logits(motion); }
  std::vector<double> member_logits(const Motion& motion, std::size_t i) const;
  std::vector<double> predict_bma(const Motion& motion) const;
  // Mean over members of d(member cross-entropy)/d(positions).
  Tensor expected_input_gradient(const Motion& motion, int label) const;

  std::size_t class_count() const override { return base_.class_count(); }
  std::vector<double> predict_proba(const Motion& motion) const override { return predict_bma(motion); }
  Tensor loss_input_gradient(const Motion& motion, int label) const override {
    return expected_input_gradient(motion, label);
  }

 private:
  BaseClassifier base_;
  std::vector<AppendedHead> heads_;
  std::string base_digest_;
};

std::vector<double> softmax(const std::vector<double>& logits);

}  // namespace beat
