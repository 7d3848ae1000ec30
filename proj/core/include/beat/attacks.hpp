#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "beat/models.hpp"

namespace beat {

enum class AttackKind { kIterL2, kLinfPerJoint, kDecision, kEotL2 };

std::string to_string(AttackKind kind);
// Throws ConfigError listing the valid kinds for anything unknown.
AttackKind attack_kind_from_string(const std::string& s);
std::vector<std::string> attack_kind_names();

// Per-joint l-infinity budgets. Joints without a lower-body class use the hip value.
struct JointBudgets {
  double hip = 0.01;
  double knee = 0.05;
  double ankle = 0.15;
  double foot = 0.25;

  double of(BudgetClass c) const;
};

struct AttackConfig {
  AttackKind kind = AttackKind::kIterL2;
  std::size_t iterations = 100;
  double step_size = 0.005;
  JointBudgets budgets;
  std::size_t eot_draws = 8;
  // EoT interpolation factor u ~ U(eot_min_factor, 1).
  double eot_min_factor = 0.0;
  // Decision attack: binary-search rounds and initial step scales.
  std::size_t search_rounds = 12;
  double orthogonal_scale = 0.1;
  double source_scale = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static AttackConfig from_json(const nlohmann::json& doc);
};

struct AttackResult {
  Motion adversarial;
  bool success = false;
  std::size_t iterations = 0;
  // Cross-entropy of the true label at the returned motion for gradient
  // attacks; l2 distance to the original for the decision attack.
  double final_loss = 0.0;
  // Decision attack: l2 distance after the seed search and after every
  // accepted step.
  std::vector<double> distance_trace;
};

// Untargeted gradient ascent on cross-entropy with l2-normalized steps.
// Returns the first misclassifying iterate.
AttackResult attack_iter_l2(const Classifier& model, const Motion& x, int label, const AttackConfig& cfg,
                            std::mt19937_64& rng);
// Sign-gradient ascent; after each step every joint's perturbation is clipped
// to its class budget.
AttackResult attack_linf_perjoint(const Classifier& model, const Motion& x, int label, const AttackConfig& cfg,
                                  std::mt19937_64& rng);
// Label-only boundary walk seeded from a pool sample the model assigns to a
// different class. Throws ConfigError if no such sample exists.
AttackResult attack_decision(const Classifier& model, const Motion& x, int label, const Dataset& pool,
                             const AttackConfig& cfg, std::mt19937_64& rng);
// iter-l2 whose step direction is the mean loss gradient at random
// interpolations x + u (x~ - x).
AttackResult attack_eot(const Classifier& model, const Motion& x, int label, const AttackConfig& cfg,
                        std::mt19937_64& rng);

// Dispatch on cfg.kind; `pool` is required for the decision attack.
AttackResult run_attack(const Classifier& model, const Motion& x, int label, const AttackConfig& cfg,
                        std::mt19937_64& rng, const Dataset* pool = nullptr);

double l2_distance(const Motion& a, const Motion& b);

}  // namespace beat
