#include "beat/harness.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <set>

#include <spdlog/spdlog.h>

#include "beat/checkpoint.hpp"
#include "beat/dataset_io.hpp"
#include "beat/error.hpp"

namespace beat {

const std::vector<std::string> kDefenseNames{"st", "at", "rs", "beat"};

namespace {

// Reads known keys of one JSON object and rejects anything left over.
class Fields {
 public:
  Fields(const nlohmann::json& doc, std::string where) : doc_(doc), where_(std::move(where)) {
    if (!doc_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!doc_.contains(key)) return;
    seen_.insert(key);
    try {
      out = doc_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  const nlohmann::json* sub(const char* key) {
    if (!doc_.contains(key)) return nullptr;
    seen_.insert(key);
    return &doc_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : doc_.items())
      if (!seen_.count(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
  }

 private:
  const nlohmann::json& doc_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_standard(const nlohmann::json& doc, const std::string& where, StandardTrainConfig& c) {
  Fields f(doc, where);
  f.get("epochs", c.epochs);
  f.get("learning_rate", c.learning_rate);
  f.get("batch_size", c.batch_size);
  f.finish();
}

nlohmann::json standard_json(const StandardTrainConfig& c) {
  return {{"epochs", c.epochs}, {"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}};
}

void read_beat(const nlohmann::json& doc, BeatTrainerConfig& c) {
  Fields f(doc, "beat");
  bool blackbox = false;
  f.get("blackbox_preset", blackbox);
  if (blackbox) c = BeatTrainerConfig::blackbox_preset();
  f.get("iterations", c.iterations);
  f.get("heads", c.heads);
  f.get("w1", c.w1);
  f.get("w2", c.w2);
  f.get("w3", c.w3);
  f.get("budget", c.budget);
  f.get("negative_steps", c.negative_steps);
  f.get("adversary_steps", c.adversary_steps);
  f.get("batch_positive", c.batch_positive);
  f.get("batch_negative", c.batch_negative);
  f.get("sgld_step", c.sgld.step);
  f.get("sgld_noise_std", c.sgld.noise_std);
  f.get("lambda", c.lambda);
  f.get("sgahmc_step", c.sgahmc.step);
  f.get("sgahmc_friction", c.sgahmc.friction);
  f.get("sgahmc_steps", c.sgahmc.steps);
  f.get("sgahmc_burn_in", c.sgahmc.burn_in);
  f.get("head_init_std", c.head_init_std);
  f.get("pcd_capacity", c.pcd_capacity);
  f.get("pcd_reinit", c.pcd_reinit);
  f.finish();
}

nlohmann::json beat_json(const BeatTrainerConfig& c) {
  return {{"iterations", c.iterations},
          {"heads", c.heads},
          {"w1", c.w1},
          {"w2", c.w2},
          {"w3", c.w3},
          {"budget", c.budget},
          {"negative_steps", c.negative_steps},
          {"adversary_steps", c.adversary_steps},
          {"batch_positive", c.batch_positive},
          {"batch_negative", c.batch_negative},
          {"sgld_step", c.sgld.step},
          {"sgld_noise_std", c.sgld.noise_std},
          {"lambda", c.lambda},
          {"sgahmc_step", c.sgahmc.step},
          {"sgahmc_friction", c.sgahmc.friction},
          {"sgahmc_steps", c.sgahmc.steps},
          {"sgahmc_burn_in", c.sgahmc.burn_in},
          {"head_init_std", c.head_init_std},
          {"pcd_capacity", c.pcd_capacity},
          {"pcd_reinit", c.pcd_reinit}};
}

void check_defense(const std::string& d, const char* where) {
  for (const auto& n : kDefenseNames)
    if (n == d) return;
  throw ConfigError(std::string(where) + ": unknown defense '" + d + "' (valid: st, at, rs, beat)");
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Dataset load_split(const ExperimentConfig& cfg, const char* split) {
  const auto path = cfg.data_dir() / (std::string(split) + ".jsonl");
  if (!std::filesystem::exists(path))
    throw IoError("dataset file '" + path.string() + "' does not exist (run `generate` first)");
  return dataset_load(path);
}

CheckpointMeta meta_for(const ExperimentConfig& cfg, const Dataset& train, const std::string& defense) {
  return CheckpointMeta{train.topology->digest(), cfg.seed, defense};
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& doc) {
  ExperimentConfig c;
  Fields f(doc, "config");
  if (!doc.contains("seed")) throw ConfigError("config: 'seed' is required");
  f.get("seed", c.seed);
  std::string out = c.output_dir.string();
  f.get("output_dir", out);
  c.output_dir = out;
  if (const auto* d = f.sub("dataset_dir"); d && !d->is_null()) c.dataset_dir = d->get<std::string>();
  if (const auto* g = f.sub("generator")) {
    Fields gf(*g, "generator");
    gf.get("classes", c.generator.classes);
    gf.get("train_per_class", c.generator.train_per_class);
    gf.get("test_per_class", c.generator.test_per_class);
    gf.get("joints", c.generator.joints);
    gf.get("frames", c.generator.frames);
    gf.get("noise_std", c.generator.noise_std);
    gf.get("rigid", c.generator.rigid);
    gf.finish();
  }
  if (c.generator.classes < 2) throw ConfigError("generator: at least 2 classes are required");
  f.get("hidden", c.hidden);
  f.get("defenses", c.defenses);
  for (const auto& d : c.defenses) check_defense(d, "defenses");
  if (const auto* s = f.sub("st")) read_standard(*s, "st", c.st);
  if (const auto* a = f.sub("at")) {
    Fields af(*a, "at");
    af.get("epsilon", c.at.epsilon);
    af.get("inner_iterations", c.at.inner_iterations);
    af.get("inner_step", c.at.inner_step);
    if (const auto* o = af.sub("outer")) read_standard(*o, "at.outer", c.at.outer);
    af.finish();
  }
  if (const auto* r = f.sub("rs")) {
    Fields rf(*r, "rs");
    rf.get("delta", c.rs.delta);
    rf.get("draws", c.rs.draws);
    rf.get("train_with_noise", c.rs.train_with_noise);
    rf.get("train_epochs", c.rs.train_epochs);
    rf.finish();
  }
  if (const auto* b = f.sub("beat")) read_beat(*b, c.beat);
  c.beat.validate();
  if (const auto* b = f.sub("base_checkpoint"); b && !b->is_null()) c.base_checkpoint = b->get<std::string>();
  f.get("evaluate", c.evaluate);
  for (const auto& d : c.evaluate) check_defense(d, "evaluate");
  if (const auto* a = f.sub("attacks")) {
    if (!a->is_array()) throw ConfigError("attacks: expected an array");
    c.attacks.clear();
    for (const auto& spec : *a) c.attacks.push_back(AttackConfig::from_json(spec));
  }
  f.get("eval_samples", c.eval_samples);
  if (const auto* t = f.sub("thresholds")) {
    Fields tf(*t, "thresholds");
    tf.get("a1", c.thresholds.a1);
    tf.get("a2_pct", c.thresholds.a2);
    tf.finish();
  }
  f.get("gradient_samples", c.gradient_samples);
  f.get("threads", c.threads);
  f.finish();

  // Sub-seeds are derived from the single experiment seed.
  c.st.seed = derive_seed(c.seed, 10);
  c.at.outer.seed = derive_seed(c.seed, 11);
  c.rs.seed = derive_seed(c.seed, 12);
  c.beat.seed = derive_seed(c.seed, 13);
  c.beat.threads = c.threads;
  for (std::size_t k = 0; k < c.attacks.size(); ++k)
    if (!(doc.contains("attacks") && doc["attacks"][k].contains("seed"))) c.attacks[k].seed = derive_seed(c.seed, 20 + k);
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("config '" + path.string() + "' is not valid JSON: " + e.what(), 1, e.byte);
  }
  return from_json(doc);
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json attacks_json = nlohmann::json::array();
  for (const auto& a : attacks) attacks_json.push_back(a.to_json());
  nlohmann::json doc{
      {"seed", seed},
      {"output_dir", output_dir.string()},
      {"generator",
       {{"classes", generator.classes},
        {"train_per_class", generator.train_per_class},
        {"test_per_class", generator.test_per_class},
        {"joints", generator.joints},
        {"frames", generator.frames},
        {"noise_std", generator.noise_std},
        {"rigid", generator.rigid}}},
      {"hidden", hidden},
      {"defenses", defenses},
      {"st", standard_json(st)},
      {"at",
       {{"epsilon", at.epsilon},
        {"inner_iterations", at.inner_iterations},
        {"inner_step", at.inner_step},
        {"outer", standard_json(at.outer)}}},
      {"rs",
       {{"delta", rs.delta}, {"draws", rs.draws}, {"train_with_noise", rs.train_with_noise},
        {"train_epochs", rs.train_epochs}}},
      {"beat", beat_json(beat)},
      {"evaluate", evaluate},
      {"attacks", attacks_json},
      {"eval_samples", eval_samples},
      {"thresholds", {{"a1", thresholds.a1}, {"a2_pct", thresholds.a2}}},
      {"gradient_samples", gradient_samples},
      {"threads", threads}};
  doc["dataset_dir"] = dataset_dir ? nlohmann::json(dataset_dir->string()) : nlohmann::json(nullptr);
  doc["base_checkpoint"] = base_checkpoint ? nlohmann::json(base_checkpoint->string()) : nlohmann::json(nullptr);
  return doc;
}

std::string ExperimentConfig::digest() const {
  nlohmann::json doc = to_json();
  doc.erase("output_dir");
  doc.erase("dataset_dir");
  doc.erase("base_checkpoint");
  doc.erase("threads");
  Fnv1a h;
  h.update(doc.dump());
  return h.hex();
}

std::filesystem::path ExperimentConfig::data_dir() const {
  return dataset_dir ? *dataset_dir : output_dir / "data";
}

std::filesystem::path ExperimentConfig::checkpoint_path(const std::string& defense) const {
  return output_dir / "checkpoints" / (defense + ".json");
}

BaseArch ExperimentConfig::arch(const Dataset& train) const {
  return BaseArch{train.frames, train.topology->joint_count(), hidden, train.class_count};
}

nlohmann::json RunRecord::to_json() const {
  nlohmann::json t = nlohmann::json::object();
  for (const auto& [phase, s] : timings) t[phase] = s;
  nlohmann::json r = nlohmann::json::array();
  for (const auto& rep : reports) r.push_back(rep.to_json());
  return {{"command", command}, {"config_digest", config_digest}, {"seed", seed}, {"tool_version", tool_version},
          {"timings_s", t},     {"reports", r},                   {"checkpoints", checkpoints}};
}

OutputLock::OutputLock(const std::filesystem::path& dir) : path_(dir / ".beat.lock") {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (!f)
    throw IoError("output directory '" + dir.string() + "' is locked by another run (remove " + path_.string() +
                  " if stale)");
  std::fclose(f);
}

OutputLock::~OutputLock() {
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

GenerateSummary cmd_generate(const ExperimentConfig& cfg) {
  OutputLock lock(cfg.output_dir);
  const SynthDataset data = synth_generate(cfg.generator, cfg.seed);
  const auto dir = cfg.data_dir();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create dataset directory '" + dir.string() + "': " + ec.message());
  dataset_save(dir / "train.jsonl", data.train);
  dataset_save(dir / "test.jsonl", data.test);
  topology_save(dir / "topology.json", *data.train.topology);
  spdlog::info("generated {} classes: {} train, {} test samples in {}", data.train.class_count, data.train.size(),
               data.test.size(), dir.string());
  return GenerateSummary{data.train.class_count, data.train.size(), data.test.size(), dir};
}

RunRecord cmd_train(const ExperimentConfig& cfg) {
  RunRecord rec{"train", cfg.digest(), cfg.seed, kToolkitVersion, {}, {}, {}};
  // Fail before any work if a post-train defense has nothing to build on.
  const bool st_in_run = std::find(cfg.defenses.begin(), cfg.defenses.end(), "st") != cfg.defenses.end();
  for (const auto& d : cfg.defenses)
    if ((d == "beat" || d == "rs") && !st_in_run && !cfg.base_checkpoint &&
        !std::filesystem::exists(cfg.checkpoint_path("st")))
      throw ConfigError("defense '" + d +
                        "' is post-train and needs a trained base classifier: add 'st' before it in "
                        "'defenses', or set 'base_checkpoint'");

  OutputLock lock(cfg.output_dir);
  std::filesystem::create_directories(cfg.output_dir / "checkpoints");
  auto t0 = Clock::now();
  const Dataset train = load_split(cfg, "train");
  rec.timings.emplace_back("load", seconds_since(t0));
  const BaseArch arch = cfg.arch(train);

  std::optional<BaseClassifier> base;
  auto need_base = [&]() -> const BaseClassifier& {
    if (base) return *base;
    const auto path = cfg.base_checkpoint ? *cfg.base_checkpoint : cfg.checkpoint_path("st");
    LoadedCheckpoint ck = checkpoint_load(path, arch);
    if (ck.is_ensemble()) throw ConfigError("base checkpoint '" + path.string() + "' holds an ensemble");
    if (ck.meta.topology_digest != train.topology->digest())
      throw DigestError("base checkpoint topology does not match the dataset topology");
    base = ck.base();
    return *base;
  };

  for (const auto& d : cfg.defenses) {
    t0 = Clock::now();
    const auto path = cfg.checkpoint_path(d);
    if (d == "st") {
      base = train_standard(arch, train, cfg.st);
      checkpoint_save(path, *base, meta_for(cfg, train, d));
    } else if (d == "at") {
      checkpoint_save(path, train_at(arch, train, cfg.at), meta_for(cfg, train, d));
    } else if (d == "rs") {
      checkpoint_save(path, train_rs(need_base(), train, cfg.rs, cfg.st), meta_for(cfg, train, d));
    } else {
      const BaseClassifier& b = need_base();
      const std::string digest = b.digest();
      BeatEnsemble ens = train_beat(b, train, cfg.beat);
      ens.verify_base();
      if (ens.base_digest() != digest) throw DigestError("frozen-base violation after BEAT training");
      checkpoint_save(path, ens, meta_for(cfg, train, d));
      ensemble_load(path, digest);
      rec.checkpoints["beat.base_digest"] = digest;
    }
    rec.checkpoints[d] = path.string();
    rec.timings.emplace_back("train." + d, seconds_since(t0));
    spdlog::info("trained {} in {:.1f}s -> {}", d, rec.timings.back().second, path.string());
  }
  write_text_file(cfg.output_dir / "train_record.json", rec.to_json().dump(2) + "\n");
  return rec;
}

namespace {

struct LoadedModel {
  std::string name;
  LoadedCheckpoint ck;
  std::optional<SmoothedClassifier> smoothed;
  const Classifier& classifier() const { return smoothed ? *smoothed : ck.classifier(); }
};

std::vector<LoadedModel> load_models(const ExperimentConfig& cfg, const Dataset& test) {
  std::vector<LoadedModel> out;
  const BaseArch arch = cfg.arch(test);
  for (const auto& name : cfg.evaluate) {
    const auto path = cfg.checkpoint_path(name);
    if (!std::filesystem::exists(path))
      throw IoError("checkpoint '" + path.string() + "' does not exist (train '" + name + "' first)");
    LoadedModel m{name, checkpoint_load(path, arch), std::nullopt};
    if (m.ck.meta.topology_digest != test.topology->digest())
      throw DigestError("checkpoint '" + path.string() + "' was trained on a different skeleton topology");
    if (name == "rs") m.smoothed.emplace(m.ck.base(), cfg.rs);
    out.push_back(std::move(m));
  }
  return out;
}

Dataset eval_subset(const ExperimentConfig& cfg, Dataset test) {
  if (cfg.eval_samples > 0 && cfg.eval_samples < test.size()) test.samples.erase(test.samples.begin() + static_cast<std::ptrdiff_t>(cfg.eval_samples), test.samples.end());
  return test;
}

}  // namespace

RunRecord cmd_evaluate(const ExperimentConfig& cfg) {
  RunRecord rec{"evaluate", cfg.digest(), cfg.seed, kToolkitVersion, {}, {}, {}};
  OutputLock lock(cfg.output_dir);
  auto t0 = Clock::now();
  const Dataset test = eval_subset(cfg, load_split(cfg, "test"));
  std::optional<Dataset> pool;
  for (const auto& a : cfg.attacks)
    if (a.kind == AttackKind::kDecision && !pool) pool = load_split(cfg, "train");
  const auto models = load_models(cfg, test);
  rec.timings.emplace_back("load", seconds_since(t0));

  for (const auto& m : models) {
    rec.checkpoints[m.name] = cfg.checkpoint_path(m.name).string();
    std::optional<GradientAnalysis> grads;
    if (cfg.gradient_samples > 0)
      grads = gradient_analysis(m.classifier(), test, cfg.gradient_samples, derive_seed(cfg.seed, 30));
    for (const auto& a : cfg.attacks) {
      t0 = Clock::now();
      const auto outcomes = run_attacks(m.classifier(), test, a, pool ? &*pool : nullptr, cfg.threads);
      MetricsReport rep = summarize(m.name, m.classifier(), test, a, outcomes, cfg.thresholds);
      rep.gradients = grads;
      rec.timings.emplace_back("attack." + m.name + "." + to_string(a.kind), seconds_since(t0));
      spdlog::info("{} vs {}: clean {:.2f}%, ASR {:.2f}% ({}/{})", m.name, rep.attack, rep.clean_accuracy, rep.asr,
                   rep.successes, rep.evaluated);
      rec.reports.push_back(std::move(rep));
    }
  }

  // Metrics CSV carries no timings, so reruns are byte-identical.
  const std::string prefix = rec.config_digest + "," + std::to_string(cfg.seed) + ",";
  std::string csv = "config_digest,seed," + MetricsReport::csv_header() + "\n";
  for (const auto& r : rec.reports) csv += prefix + r.csv_row() + "\n";
  write_text_file(cfg.output_dir / "metrics.csv", csv);

  std::string cmp = "schema,config_digest,seed,attack,st_asr,beat_asr,asr_delta,st_accuracy,beat_accuracy\n";
  for (std::size_t k = 0; k < cfg.attacks.size(); ++k) {
    const MetricsReport *st = nullptr, *bt = nullptr;
    for (std::size_t i = 0; i < models.size(); ++i) {
      const auto& r = rec.reports[i * cfg.attacks.size() + k];
      if (r.model == "st") st = &r;
      if (r.model == "beat") bt = &r;
    }
    if (!st || !bt) continue;
    auto num = [](double v) { return nlohmann::json(v).dump(); };
    cmp += "beat-comparison-v1," + prefix + st->attack + "," + num(st->asr) + "," + num(bt->asr) + "," +
           num(bt->asr - st->asr) + "," + num(st->clean_accuracy) + "," + num(bt->clean_accuracy) + "\n";
  }
  write_text_file(cfg.output_dir / "comparison.csv", cmp);

  nlohmann::json metrics{{"config_digest", rec.config_digest}, {"seed", cfg.seed}, {"reports", nlohmann::json::array()}};
  for (const auto& r : rec.reports) metrics["reports"].push_back(r.to_json());
  write_text_file(cfg.output_dir / "metrics.json", metrics.dump(2) + "\n");
  write_text_file(cfg.output_dir / "evaluate_record.json", rec.to_json().dump(2) + "\n");
  return rec;
}

RunRecord cmd_grad_analysis(const ExperimentConfig& cfg) {
  RunRecord rec{"grad-analysis", cfg.digest(), cfg.seed, kToolkitVersion, {}, {}, {}};
  OutputLock lock(cfg.output_dir);
  const Dataset test = load_split(cfg, "test");
  const auto models = load_models(cfg, test);
  const std::size_t n = cfg.gradient_samples > 0 ? cfg.gradient_samples : 500;
  nlohmann::json out{{"config_digest", rec.config_digest}, {"seed", cfg.seed}, {"models", nlohmann::json::object()}};
  for (const auto& m : models) {
    const auto t0 = Clock::now();
    const GradientAnalysis g = gradient_analysis(m.classifier(), test, n, derive_seed(cfg.seed, 30));
    nlohmann::json entry = g.summary_json();
    entry["values"] = g.components;
    out["models"][m.name] = entry;
    rec.checkpoints[m.name] = cfg.checkpoint_path(m.name).string();
    rec.timings.emplace_back("grad." + m.name, seconds_since(t0));
    spdlog::info("{}: median |grad| {:.3e}, {:.2f}% below {:.0e}", m.name, g.median_abs, 100.0 * g.fraction_below,
                 g.threshold);
  }
  write_text_file(cfg.output_dir / "grad_analysis.json", out.dump(2) + "\n");
  write_text_file(cfg.output_dir / "grad_record.json", rec.to_json().dump(2) + "\n");
  return rec;
}

void configure_logging_from_env() {
  const char* env = std::getenv("BEAT_LOG");
  if (!env) return;
  const auto level = spdlog::level::from_str(env);
  if (level == spdlog::level::off && std::string(env) != "off")
    throw ConfigError(std::string("BEAT_LOG: unknown level '") + env + "'");
  spdlog::set_level(level);
}

}  // namespace beat
