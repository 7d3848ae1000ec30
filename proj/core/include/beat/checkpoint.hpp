#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <variant>

#include "beat/models.hpp"

namespace beat {

inline constexpr const char* kToolkitVersion = "1.0.0";

struct CheckpointMeta {
  std::string topology_digest;
  std::uint64_t seed = 0;
  std::string defense;  // st, at, rs, beat
};

// Versioned JSON checkpoint:
//   {format, version, kind: base|ensemble, arch, topology_digest, created{...},
//    base_digest, heads_digest, base: ParamVector, heads: [ParamVector...]}
nlohmann::json checkpoint_to_json(const BaseClassifier& base, const CheckpointMeta& meta);
nlohmann::json checkpoint_to_json(const BeatEnsemble& ensemble, const CheckpointMeta& meta);

void checkpoint_save(const std::filesystem::path& path, const BaseClassifier& base, const CheckpointMeta& meta);
void checkpoint_save(const std::filesystem::path& path, const BeatEnsemble& ensemble, const CheckpointMeta& meta);

struct LoadedCheckpoint {
  std::variant<BaseClassifier, BeatEnsemble> model;
  CheckpointMeta meta;

  bool is_ensemble() const { return std::holds_alternative<BeatEnsemble>(model); }
  const Classifier& classifier() const;
  const BaseClassifier& base() const;
};

// Verifies stored digests (DigestError on mismatch) and, when given, that the
// architecture matches `expected_arch` (ArchitectureError otherwise).
LoadedCheckpoint checkpoint_from_json(const nlohmann::json& doc,
                                      const std::optional<BaseArch>& expected_arch = std::nullopt);
LoadedCheckpoint checkpoint_load(const std::filesystem::path& path,
                                 const std::optional<BaseArch>& expected_arch = std::nullopt);

// Loads an ensemble and additionally requires its base to carry `base_digest`.
BeatEnsemble ensemble_load(const std::filesystem::path& path, const std::string& base_digest);

}  // namespace beat
