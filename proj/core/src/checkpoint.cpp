#include "beat/checkpoint.hpp"

#include "beat/dataset_io.hpp"
#include "beat/error.hpp"

namespace beat {

namespace {

constexpr const char* kFormat = "beat-checkpoint";
constexpr int kVersion = 1;

std::string heads_digest(const std::vector<AppendedHead>& heads) {
  Fnv1a h;
  for (const auto& head : heads) h.update(head.params().digest());
  return h.hex();
}

nlohmann::json common(const BaseClassifier& base, const CheckpointMeta& meta, const char* kind) {
  return {{"format", kFormat},
          {"version", kVersion},
          {"kind", kind},
          {"arch", base.arch().to_json()},
          {"topology_digest", meta.topology_digest},
          {"created", {{"tool_version", kToolkitVersion}, {"seed", meta.seed}, {"defense", meta.defense}}},
          {"base_digest", base.digest()},
          {"base", base.params().to_json()}};
}

}  // namespace

const Classifier& LoadedCheckpoint::classifier() const {
  return std::visit([](const auto& m) -> const Classifier& { return m; }, model);
}

const BaseClassifier& LoadedCheckpoint::base() const {
  if (const auto* e = std::get_if<BeatEnsemble>(&model)) return e->base();
  return std::get<BaseClassifier>(model);
}

nlohmann::json checkpoint_to_json(const BaseClassifier& base, const CheckpointMeta& meta) {
  auto doc = common(base, meta, "base");
  doc["heads_digest"] = heads_digest({});
  doc["heads"] = nlohmann::json::array();
  return doc;
}

nlohmann::json checkpoint_to_json(const BeatEnsemble& ensemble, const CheckpointMeta& meta) {
  ensemble.verify_base();
  auto doc = common(ensemble.base(), meta, "ensemble");
  doc["heads_digest"] = heads_digest(ensemble.heads());
  nlohmann::json heads = nlohmann::json::array();
  for (const auto& h : ensemble.heads()) heads.push_back(h.params().to_json());
  doc["heads"] = std::move(heads);
  return doc;
}

void checkpoint_save(const std::filesystem::path& path, const BaseClassifier& base, const CheckpointMeta& meta) {
  write_text_file(path, checkpoint_to_json(base, meta).dump() + "\n");
}

void checkpoint_save(const std::filesystem::path& path, const BeatEnsemble& ensemble, const CheckpointMeta& meta) {
  write_text_file(path, checkpoint_to_json(ensemble, meta).dump() + "\n");
}

LoadedCheckpoint checkpoint_from_json(const nlohmann::json& doc, const std::optional<BaseArch>& expected_arch) {
  try {
    if (doc.at("format").get<std::string>() != kFormat) throw ConfigError("not a beat-checkpoint document");
    if (doc.at("version").get<int>() != kVersion)
      throw ConfigError("unsupported checkpoint version " + doc.at("version").dump());
    const BaseArch arch = BaseArch::from_json(doc.at("arch"));
    if (expected_arch && !(arch == *expected_arch))
      throw ArchitectureError("checkpoint architecture " + arch.to_json().dump() + " does not match expected " +
                              expected_arch->to_json().dump());
    CheckpointMeta meta;
    meta.topology_digest = doc.at("topology_digest").get<std::string>();
    meta.seed = doc.at("created").at("seed").get<std::uint64_t>();
    meta.defense = doc.at("created").at("defense").get<std::string>();

    BaseClassifier base(arch, ParamVector::from_json(doc.at("base")));
    const std::string stored = doc.at("base_digest").get<std::string>();
    if (base.digest() != stored)
      throw DigestError("base parameters digest " + base.digest() + " does not match stored " + stored);

    std::vector<AppendedHead> heads;
    for (const auto& h : doc.at("heads")) heads.emplace_back(arch.classes, ParamVector::from_json(h));
    const std::string stored_heads = doc.at("heads_digest").get<std::string>();
    if (heads_digest(heads) != stored_heads)
      throw DigestError("head parameters digest " + heads_digest(heads) + " does not match stored " + stored_heads);

    const std::string kind = doc.at("kind").get<std::string>();
    if (kind == "base") {
      if (!heads.empty()) throw ConfigError("base checkpoint carries heads");
      return {std::move(base), std::move(meta)};
    }
    if (kind == "ensemble") return {BeatEnsemble(std::move(base), std::move(heads)), std::move(meta)};
    throw ConfigError("unknown checkpoint kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

LoadedCheckpoint checkpoint_load(const std::filesystem::path& path, const std::optional<BaseArch>& expected_arch) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("checkpoint '" + path.string() + "' is not valid JSON: " + e.what(), 1, e.byte);
  }
  return checkpoint_from_json(doc, expected_arch);
}

BeatEnsemble ensemble_load(const std::filesystem::path& path, const std::string& base_digest) {
  LoadedCheckpoint ck = checkpoint_load(path);
  if (!ck.is_ensemble()) throw ConfigError("'" + path.string() + "' is not an ensemble checkpoint");
  auto& ens = std::get<BeatEnsemble>(ck.model);
  if (ens.base_digest() != base_digest)
    throw DigestError("frozen-base violation: ensemble base digest " + ens.base_digest() + " differs from " +
                      base_digest);
  return std::move(ens);
}

}  // namespace beat
