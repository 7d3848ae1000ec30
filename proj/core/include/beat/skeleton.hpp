#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "beat/tensor.hpp"

namespace beat {

enum class BudgetClass { kHip, kKnee, kAnkle, kFoot, kOther };

std::string to_string(BudgetClass c);
BudgetClass budget_class_from_string(const std::string& s);

struct Bone {
  std::size_t parent;
  std::size_t child;
  friend bool operator==(const Bone&, const Bone&) = default;
};

class SkeletonTopology {
 public:
  // Validates indices, self-loops and that bones form a tree rooted at joint 0.
  SkeletonTopology(std::size_t joint_count, std::vector<Bone> bones,
                   std::vector<BudgetClass> budget_classes);

  // 8 joints: pelvis, chest, head, hip, knee, ankle, foot, hand.
  static SkeletonTopology default_toy();
  // Simple chain 0-1-...-(J-1), every joint budget class "other".
  static SkeletonTopology chain(std::size_t joint_count);

  std::size_t joint_count() const noexcept { return joint_count_; }
  std::size_t bone_count() const noexcept { return bones_.size(); }
  const std::vector<Bone>& bones() const noexcept { return bones_; }
  const std::vector<BudgetClass>& budget_classes() const noexcept { return budget_classes_; }

  std::string digest() const;
  nlohmann::json to_json() const;
  static SkeletonTopology from_json(const nlohmann::json& doc);

  friend bool operator==(const SkeletonTopology&, const SkeletonTopology&) = default;

 private:
  std::size_t joint_count_;
  std::vector<Bone> bones_;
  std::vector<BudgetClass> budget_classes_;
};

// Joint positions over frames, stored as a [M, J, 3] tensor.
class Motion {
 public:
  Motion(std::shared_ptr<const SkeletonTopology> topology, Tensor positions);
  Motion(std::shared_ptr<const SkeletonTopology> topology, std::size_t frames, double fill = 0.0);

  std::size_t frames() const { return positions_.dim(0); }
  std::size_t joints() const { return positions_.dim(1); }
  const SkeletonTopology& topology() const { return *topology_; }
  const std::shared_ptr<const SkeletonTopology>& topology_ptr() const { return topology_; }

  const Tensor& positions() const noexcept { return positions_; }
  Tensor& positions() noexcept { return positions_; }
  double& at(std::size_t m, std::size_t j, std::size_t axis) {
    return positions_[(m * joints() + j) * 3 + axis];
  }
  double at(std::size_t m, std::size_t j, std::size_t axis) const {
    return positions_[(m * joints() + j) * 3 + axis];
  }

  // Same topology and frame count.
  bool compatible(const Motion& other) const;

 private:
  std::shared_ptr<const SkeletonTopology> topology_;
  Tensor positions_;
};

struct LabeledSample {
  Motion motion;
  int label;
};

enum class Split { kTrain, kTest };
std::string to_string(Split s);

struct Dataset {
  std::shared_ptr<const SkeletonTopology> topology;
  std::size_t class_count = 0;
  std::size_t frames = 0;
  Split split = Split::kTrain;
  std::vector<LabeledSample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  // Throws if any invariant (shared topology, label range, frame count) is violated.
  void validate() const;
};

// Entry (m, b) is the length of bone b in frame m; shape [M, B].
Tensor bone_lengths(const Motion& motion);

// k = 0 positions [M,J,3]; k = 1 forward differences [M-1,J,3]; k = 2 second
// differences [M-2,J,3].
Tensor derivative(const Motion& motion, int order);

struct SynthConfig {
  std::size_t classes = 4;
  std::size_t train_per_class = 100;
  std::size_t test_per_class = 50;
  std::size_t joints = 8;
  std::size_t frames = 16;
  double noise_std = 0.05;
  bool rigid = true;
};

struct SynthDataset {
  Dataset train;
  Dataset test;
};

// Class-templated sinusoidal joint trajectories with Gaussian jitter. With
// `rigid` the jitter acts on bone rotation angles and root translation so bone
// lengths stay constant; otherwise it is added to every joint coordinate.
SynthDataset synth_generate(const SynthConfig& config, std::uint64_t seed);

// Normalized 5-tap Gaussian (std 1 frame) along time, reflect-padded.
Motion temporal_gaussian_filter(const Motion& motion);
std::array<double, 5> temporal_gaussian_kernel();

}  // namespace beat
