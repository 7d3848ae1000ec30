#include "beat/skeleton.hpp"

#include <cmath>
#include <numbers>
#include <queue>
#include <random>

#include "beat/error.hpp"
#include "beat/param_vector.hpp"

namespace beat {

std::string to_string(BudgetClass c) {
  switch (c) {
    case BudgetClass::kHip: return "hip";
    case BudgetClass::kKnee: return "knee";
    case BudgetClass::kAnkle: return "ankle";
    case BudgetClass::kFoot: return "foot";
    case BudgetClass::kOther: return "other";
  }
  return "other";
}

BudgetClass budget_class_from_string(const std::string& s) {
  if (s == "hip") return BudgetClass::kHip;
  if (s == "knee") return BudgetClass::kKnee;
  if (s == "ankle") return BudgetClass::kAnkle;
  if (s == "foot") return BudgetClass::kFoot;
  if (s == "other") return BudgetClass::kOther;
  throw ConfigError("unknown budget class '" + s + "' (valid: hip, knee, ankle, foot, other)");
}

std::string to_string(Split s) { return s == Split::kTrain ? "train" : "test"; }

// ----- topology ----------------------------------------------------------

SkeletonTopology::SkeletonTopology(std::size_t joint_count, std::vector<Bone> bones,
                                   std::vector<BudgetClass> budget_classes)
    : joint_count_(joint_count), bones_(std::move(bones)), budget_classes_(std::move(budget_classes)) {
  if (joint_count_ == 0) throw ConfigError("topology: joint_count must be positive");
  if (budget_classes_.size() != joint_count_)
    throw ConfigError("topology: expected " + std::to_string(joint_count_) + " budget classes, got " +
                      std::to_string(budget_classes_.size()));
  std::vector<std::vector<std::size_t>> children(joint_count_);
  std::vector<int> indegree(joint_count_, 0);
  for (const Bone& b : bones_) {
    if (b.parent >= joint_count_ || b.child >= joint_count_)
      throw ConfigError("topology: bone (" + std::to_string(b.parent) + "," + std::to_string(b.child) +
                        ") index out of range");
    if (b.parent == b.child)
      throw ConfigError("topology: self-loop bone at joint " + std::to_string(b.parent));
    children[b.parent].push_back(b.child);
    ++indegree[b.child];
  }
  // Tree rooted at joint 0: every other joint has exactly one parent and is reachable.
  if (bones_.size() + 1 != joint_count_ || indegree[0] != 0)
    throw ConfigError("topology: bones must form a tree rooted at joint 0");
  std::vector<bool> seen(joint_count_, false);
  std::queue<std::size_t> q;
  q.push(0);
  seen[0] = true;
  std::size_t reached = 1;
  while (!q.empty()) {
    const std::size_t j = q.front();
    q.pop();
    for (std::size_t c : children[j]) {
      if (seen[c]) throw ConfigError("topology: joint " + std::to_string(c) + " has two parents");
      seen[c] = true;
      ++reached;
      q.push(c);
    }
  }
  if (reached != joint_count_) throw ConfigError("topology: bones are not connected to joint 0");
}

SkeletonTopology SkeletonTopology::default_toy() {
  using BC = BudgetClass;
  return SkeletonTopology(8, {{0, 1}, {1, 2}, {0, 3}, {3, 4}, {4, 5}, {5, 6}, {1, 7}},
                          {BC::kOther, BC::kOther, BC::kOther, BC::kHip, BC::kKnee, BC::kAnkle,
                           BC::kFoot, BC::kOther});
}

SkeletonTopology SkeletonTopology::chain(std::size_t joint_count) {
  std::vector<Bone> bones;
  for (std::size_t j = 1; j < joint_count; ++j) bones.push_back({j - 1, j});
  return SkeletonTopology(joint_count, std::move(bones),
                          std::vector<BudgetClass>(joint_count, BudgetClass::kOther));
}

std::string SkeletonTopology::digest() const {
  Fnv1a h;
  h.update(to_json().dump());
  return h.hex();
}

nlohmann::json SkeletonTopology::to_json() const {
  nlohmann::json bones = nlohmann::json::array();
  for (const Bone& b : bones_) bones.push_back({b.parent, b.child});
  nlohmann::json classes = nlohmann::json::array();
  for (BudgetClass c : budget_classes_) classes.push_back(to_string(c));
  return {{"joint_count", joint_count_}, {"bones", std::move(bones)}, {"budget_classes", std::move(classes)}};
}

SkeletonTopology SkeletonTopology::from_json(const nlohmann::json& doc) {
  try {
    for (const auto& [key, _] : doc.items())
      if (key != "joint_count" && key != "bones" && key != "budget_classes")
        throw ConfigError("topology: unknown key '" + key + "'");
    std::vector<Bone> bones;
    for (const auto& b : doc.at("bones")) {
      if (!b.is_array() || b.size() != 2) throw ConfigError("topology: bone must be a [parent, child] pair");
      bones.push_back({b[0].get<std::size_t>(), b[1].get<std::size_t>()});
    }
    std::vector<BudgetClass> classes;
    for (const auto& c : doc.at("budget_classes")) classes.push_back(budget_class_from_string(c.get<std::string>()));
    return SkeletonTopology(doc.at("joint_count").get<std::size_t>(), std::move(bones), std::move(classes));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("topology: ") + e.what());
  }
}

// ----- motion ------------------------------------------------------------

Motion::Motion(std::shared_ptr<const SkeletonTopology> topology, Tensor positions)
    : topology_(std::move(topology)), positions_(std::move(positions)) {
  if (!topology_) throw ConfigError("motion: null topology");
  if (positions_.rank() != 3 || positions_.dim(1) != topology_->joint_count() || positions_.dim(2) != 3)
    throw ShapeError("motion: positions " + shape_str(positions_.shape()) + " do not match [M," +
                     std::to_string(topology_->joint_count()) + ",3]");
}

Motion::Motion(std::shared_ptr<const SkeletonTopology> topology, std::size_t frames, double fill)
    : Motion(topology, Tensor({frames, topology ? topology->joint_count() : 0, 3}, fill)) {}

bool Motion::compatible(const Motion& other) const {
  return frames() == other.frames() &&
         (topology_ == other.topology_ || *topology_ == *other.topology_);
}

void Dataset::validate() const {
  if (!topology) throw ConfigError("dataset: missing topology");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= class_count)
      throw ConfigError("dataset: sample " + std::to_string(i) + " label " + std::to_string(s.label) +
                        " outside [0," + std::to_string(class_count) + ")");
    if (!(s.motion.topology() == *topology))
      throw ConfigError("dataset: sample " + std::to_string(i) + " uses a different topology");
    if (s.motion.frames() != frames)
      throw ConfigError("dataset: sample " + std::to_string(i) + " has " +
                        std::to_string(s.motion.frames()) + " frames, expected " + std::to_string(frames));
  }
}

// ----- features ----------------------------------------------------------

Tensor bone_lengths(const Motion& motion) {
  const auto& bones = motion.topology().bones();
  const std::size_t M = motion.frames();
  Tensor out({M, bones.size()}, 0.0);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t b = 0; b < bones.size(); ++b) {
      double s = 0.0;
      for (std::size_t a = 0; a < 3; ++a) {
        const double d = motion.at(m, bones[b].child, a) - motion.at(m, bones[b].parent, a);
        s += d * d;
      }
      out.at(m, b) = std::sqrt(s);
    }
  return out;
}

Tensor derivative(const Motion& motion, int order) {
  if (order < 0 || order > 2) throw ConfigError("derivative: order must be 0, 1 or 2");
  const std::size_t M = motion.frames();
  const std::size_t k = static_cast<std::size_t>(order);
  if (M < k + 1)
    throw ShapeError("derivative: order " + std::to_string(order) + " needs at least " +
                     std::to_string(k + 1) + " frames, got " + std::to_string(M));
  Tensor cur = motion.positions();
  for (std::size_t step = 0; step < k; ++step) {
    const std::size_t frames = cur.dim(0) - 1;
    const std::size_t stride = cur.dim(1) * 3;
    Tensor next({frames, cur.dim(1), 3}, 0.0);
    for (std::size_t m = 0; m < frames; ++m)
      for (std::size_t i = 0; i < stride; ++i)
        next[m * stride + i] = cur[(m + 1) * stride + i] - cur[m * stride + i];
    cur = std::move(next);
  }
  return cur;
}

// ----- synthetic data ----------------------------------------------------

namespace {

using Vec3 = std::array<double, 3>;

Vec3 rotate(const Vec3& v, const Vec3& axis, double angle) {
  // Rodrigues' rotation formula; `axis` is unit length.
  const double c = std::cos(angle), s = std::sin(angle);
  const double dot = axis[0] * v[0] + axis[1] * v[1] + axis[2] * v[2];
  const Vec3 cross{axis[1] * v[2] - axis[2] * v[1], axis[2] * v[0] - axis[0] * v[2],
                   axis[0] * v[1] - axis[1] * v[0]};
  Vec3 out;
  for (int a = 0; a < 3; ++a) out[a] = v[a] * c + cross[a] * s + axis[a] * dot * (1.0 - c);
  return out;
}

struct BoneTemplate {
  Vec3 rest;
  Vec3 axis;
};

struct ClassTemplate {
  double frequency;
  std::vector<double> amplitude;  // per bone
  std::vector<double> phase;      // per bone
  Vec3 root_amplitude;
  double root_phase;
};

std::vector<BoneTemplate> bone_templates(const SkeletonTopology& topo, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const bool toy = topo == SkeletonTopology::default_toy();
  const std::array<Vec3, 7> toy_rest{Vec3{0.0, 0.3, 0.0},  Vec3{0.0, 0.2, 0.0},   Vec3{0.1, -0.05, 0.0},
                                     Vec3{0.0, -0.25, 0.0}, Vec3{0.0, -0.25, 0.0}, Vec3{0.0, 0.0, 0.1},
                                     Vec3{0.3, 0.0, 0.0}};
  std::vector<BoneTemplate> out;
  for (std::size_t b = 0; b < topo.bone_count(); ++b) {
    Vec3 rest = toy ? toy_rest[b] : Vec3{0.0, -0.2, 0.0};
    Vec3 axis{u(rng), u(rng), u(rng)};
    double n = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
    if (n < 1e-3) {
      axis = {0.0, 0.0, 1.0};
      n = 1.0;
    }
    for (double& a : axis) a /= n;
    out.push_back({rest, axis});
  }
  return out;
}

// Joints in breadth-first order from the root, with the bone that reaches each.
std::vector<std::pair<std::size_t, std::size_t>> traversal(const SkeletonTopology& topo) {
  std::vector<std::pair<std::size_t, std::size_t>> order;  // (bone index, child joint)
  std::vector<std::size_t> frontier{0};
  while (!frontier.empty()) {
    std::vector<std::size_t> next;
    for (std::size_t j : frontier)
      for (std::size_t b = 0; b < topo.bone_count(); ++b)
        if (topo.bones()[b].parent == j) {
          order.emplace_back(b, topo.bones()[b].child);
          next.push_back(topo.bones()[b].child);
        }
    frontier = std::move(next);
  }
  return order;
}

Motion synth_motion(const std::shared_ptr<const SkeletonTopology>& topo,
                    const std::vector<BoneTemplate>& bones, const ClassTemplate& cls,
                    const std::vector<std::pair<std::size_t, std::size_t>>& order, std::size_t frames,
                    double noise_std, bool rigid, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Motion motion(topo, frames);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t m = 0; m < frames; ++m) {
    const double t = two_pi * cls.frequency * static_cast<double>(m) / static_cast<double>(frames);
    for (int a = 0; a < 3; ++a) {
      double root = cls.root_amplitude[a] * std::sin(t + cls.root_phase + a);
      if (rigid && noise_std > 0.0) root += noise_std * gauss(rng);
      motion.at(m, 0, a) = root;
    }
    for (const auto& [b, child] : order) {
      double angle = cls.amplitude[b] * std::sin(t + cls.phase[b]);
      if (rigid && noise_std > 0.0) angle += noise_std * gauss(rng);
      const Vec3 v = rotate(bones[b].rest, bones[b].axis, angle);
      const std::size_t parent = topo->bones()[b].parent;
      for (int a = 0; a < 3; ++a) motion.at(m, child, a) = motion.at(m, parent, a) + v[a];
    }
  }
  if (!rigid && noise_std > 0.0)
    for (double& v : motion.positions().values()) v += noise_std * gauss(rng);
  return motion;
}

}  // namespace

SynthDataset synth_generate(const SynthConfig& config, std::uint64_t seed) {
  if (config.classes < 2) throw ConfigError("synth: need at least 2 classes");
  if (config.joints < 2) throw ConfigError("synth: need at least 2 joints");
  if (config.frames < 8) throw ConfigError("synth: need at least 8 frames");
  if (!(config.noise_std >= 0.0) || !std::isfinite(config.noise_std))
    throw ConfigError("synth: noise_std must be a finite non-negative number");

  auto topo = std::make_shared<const SkeletonTopology>(
      config.joints == 8 ? SkeletonTopology::default_toy() : SkeletonTopology::chain(config.joints));

  std::mt19937_64 template_rng(seed);
  const auto bones = bone_templates(*topo, template_rng);
  const auto order = traversal(*topo);

  std::uniform_real_distribution<double> amp(0.2, 0.6);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> root_amp(0.0, 0.1);
  std::vector<ClassTemplate> classes;
  for (std::size_t c = 0; c < config.classes; ++c) {
    ClassTemplate t;
    t.frequency = 1.0 + static_cast<double>(c % 3);
    for (std::size_t b = 0; b < topo->bone_count(); ++b) {
      t.amplitude.push_back(amp(template_rng));
      t.phase.push_back(phase(template_rng));
    }
    t.root_amplitude = {root_amp(template_rng), root_amp(template_rng), root_amp(template_rng)};
    t.root_phase = phase(template_rng);
    classes.push_back(std::move(t));
  }

  auto make_split = [&](Split split, std::size_t per_class, std::uint64_t stream) {
    Dataset ds;
    ds.topology = topo;
    ds.class_count = config.classes;
    ds.frames = config.frames;
    ds.split = split;
    std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * stream));
    for (std::size_t i = 0; i < per_class; ++i)
      for (std::size_t c = 0; c < config.classes; ++c)
        ds.samples.push_back({synth_motion(topo, bones, classes[c], order, config.frames,
                                           config.noise_std, config.rigid, rng),
                              static_cast<int>(c)});
    return ds;
  };
  return {make_split(Split::kTrain, config.train_per_class, 1),
          make_split(Split::kTest, config.test_per_class, 2)};
}

// ----- temporal filter ---------------------------------------------------

std::array<double, 5> temporal_gaussian_kernel() {
  std::array<double, 5> w{};
  double s = 0.0;
  for (int k = -2; k <= 2; ++k) s += w[k + 2] = std::exp(-0.5 * k * k);
  for (double& v : w) v /= s;
  return w;
}

Motion temporal_gaussian_filter(const Motion& motion) {
  const std::size_t M = motion.frames();
  if (M < 5) throw ShapeError("temporal_gaussian_filter: needs at least 5 frames, got " + std::to_string(M));
  const auto w = temporal_gaussian_kernel();
  // Half-sample symmetric reflection: -1 -> 0, -2 -> 1, M -> M-1, M+1 -> M-2.
  auto reflect = [M](long i) {
    const long n = static_cast<long>(M);
    if (i < 0) return static_cast<std::size_t>(-i - 1);
    if (i >= n) return static_cast<std::size_t>(2 * n - i - 1);
    return static_cast<std::size_t>(i);
  };
  Motion out(motion.topology_ptr(), M);
  const std::size_t stride = motion.joints() * 3;
  const Tensor& src = motion.positions();
  Tensor& dst = out.positions();
  for (std::size_t m = 0; m < M; ++m)
    for (int k = -2; k <= 2; ++k) {
      const std::size_t sm = reflect(static_cast<long>(m) + k);
      const double wk = w[k + 2];
      for (std::size_t i = 0; i < stride; ++i) dst[m * stride + i] += wk * src[sm * stride + i];
    }
  return out;
}

}  // namespace beat
