#include "beat/models.hpp"

#include <algorithm>
#include <cmath>

#include "beat/error.hpp"

namespace beat {

int Classifier::predict(const Motion& motion) const {
  const auto p = predict_proba(motion);
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

std::vector<double> softmax(const std::vector<double>& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) s += p[i] = std::exp(logits[i] - mx);
  for (double& v : p) v /= s;
  return p;
}

nlohmann::json BaseArch::to_json() const {
  return {{"frames", frames}, {"joints", joints}, {"hidden", hidden}, {"classes", classes}};
}

BaseArch BaseArch::from_json(const nlohmann::json& doc) {
  BaseArch a;
  a.frames = doc.at("frames").get<std::size_t>();
  a.joints = doc.at("joints").get<std::size_t>();
  a.hidden = doc.at("hidden").get<std::size_t>();
  a.classes = doc.at("classes").get<std::size_t>();
  return a;
}

Tensor stack_inputs(const std::vector<const Motion*>& motions) {
  if (motions.empty()) throw ShapeError("stack_inputs: no motions");
  const std::size_t dim = motions.front()->positions().size();
  Tensor out({motions.size(), dim}, 0.0);
  for (std::size_t r = 0; r < motions.size(); ++r) {
    const auto& v = motions[r]->positions().values();
    if (v.size() != dim) throw ShapeError("stack_inputs: motions have different sizes");
    std::copy(v.begin(), v.end(), out.values().begin() + static_cast<std::ptrdiff_t>(r * dim));
  }
  return out;
}

Tensor stack_inputs(const Motion& motion) { return stack_inputs(std::vector<const Motion*>{&motion}); }

// ----- base classifier ---------------------------------------------------

BaseClassifier::BaseClassifier(BaseArch arch, ParamVector params)
    : arch_(arch), params_(std::move(params)) {
  if (arch_.classes < 2) throw ArchitectureError("base classifier needs at least 2 classes");
  const std::size_t in = arch_.input_dim(), h = arch_.hidden, c = arch_.classes;
  const std::vector<std::pair<const char*, Shape>> expected{
      {"fc1.weight", {in, h}}, {"fc1.bias", {h}}, {"fc2.weight", {h, c}}, {"fc2.bias", {c}}};
  if (params_.blocks().size() != expected.size())
    throw ArchitectureError("base classifier expects 4 parameter blocks, got " +
                            std::to_string(params_.blocks().size()));
  for (const auto& [name, shape] : expected) {
    if (!params_.contains(name)) throw ArchitectureError(std::string("missing parameter block ") + name);
    if (params_.get(name).shape() != shape)
      throw ArchitectureError(std::string("block ") + name + " has shape " +
                              shape_str(params_.get(name).shape()) + ", architecture needs " + shape_str(shape));
  }
}

BaseClassifier BaseClassifier::zeros(const BaseArch& arch) {
  ParamVector p;
  p.add("fc1.weight", Tensor({arch.input_dim(), arch.hidden}, 0.0));
  p.add("fc1.bias", Tensor({arch.hidden}, 0.0));
  p.add("fc2.weight", Tensor({arch.hidden, arch.classes}, 0.0));
  p.add("fc2.bias", Tensor({arch.classes}, 0.0));
  return BaseClassifier(arch, std::move(p));
}

BaseClassifier BaseClassifier::init(const BaseArch& arch, std::uint64_t seed) {
  BaseClassifier model = zeros(arch);
  std::mt19937_64 rng(seed);
  auto fill = [&rng](Tensor& t, double std) {
    std::normal_distribution<double> d(0.0, std);
    for (double& v : t.values()) v = d(rng);
  };
  fill(model.params_.get("fc1.weight"), std::sqrt(2.0 / static_cast<double>(arch.input_dim())));
  fill(model.params_.get("fc2.weight"), std::sqrt(2.0 / static_cast<double>(arch.hidden)));
  return model;
}

ad::Var BaseClassifier::forward(ad::Graph& g, ad::Var x, bool trainable,
                                std::vector<ad::Var>* param_vars) const {
  if (x.value().rank() != 2 || x.value().dim(1) != arch_.input_dim())
    throw ShapeError("base forward: input " + shape_str(x.value().shape()) + " but architecture expects [B," +
                     std::to_string(arch_.input_dim()) + "]");
  auto leaf = [&](const char* name) {
    return trainable ? g.parameter(params_.get(name)) : g.constant(params_.get(name));
  };
  ad::Var w1 = leaf("fc1.weight"), b1 = leaf("fc1.bias"), w2 = leaf("fc2.weight"), b2 = leaf("fc2.bias");
  if (param_vars) *param_vars = {w1, b1, w2, b2};
  return ad::affine(ad::relu(ad::affine(x, w1, b1)), w2, b2);
}

Tensor BaseClassifier::logits_batch(const Tensor& inputs) const {
  if (inputs.rank() != 2 || inputs.dim(1) != arch_.input_dim())
    throw ShapeError("base logits: input " + shape_str(inputs.shape()) + " but architecture expects [B," +
                     std::to_string(arch_.input_dim()) + "]");
  const std::size_t B = inputs.dim(0), in = arch_.input_dim(), H = arch_.hidden, C = arch_.classes;
  const Tensor& w1 = params_.get("fc1.weight");
  const Tensor& b1 = params_.get("fc1.bias");
  const Tensor& w2 = params_.get("fc2.weight");
  const Tensor& b2 = params_.get("fc2.bias");
  Tensor out({B, C}, 0.0);
  std::vector<double> hidden(H);
  for (std::size_t r = 0; r < B; ++r) {
    std::fill(hidden.begin(), hidden.end(), 0.0);
    for (std::size_t i = 0; i < in; ++i) {
      const double xv = inputs[r * in + i];
      if (xv == 0.0) continue;
      const double* wrow = &w1[i * H];
      for (std::size_t h = 0; h < H; ++h) hidden[h] += xv * wrow[h];
    }
    for (std::size_t h = 0; h < H; ++h) {
      const double a = hidden[h] + b1[h];
      hidden[h] = a > 0.0 ? a : 0.0;
    }
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t h = 0; h < H; ++h) s += hidden[h] * w2[h * C + c];
      out[r * C + c] = s + b2[c];
    }
  }
  return out;
}

void BaseClassifier::check_input(const Motion& motion) const {
  if (motion.frames() != arch_.frames || motion.joints() != arch_.joints)
    throw ShapeError("motion with " + std::to_string(motion.frames()) + " frames and " +
                     std::to_string(motion.joints()) + " joints does not match architecture (" +
                     std::to_string(arch_.frames) + " frames, " + std::to_string(arch_.joints) + " joints)");
}

std::vector<double> BaseClassifier::logits(const Motion& motion) const {
  check_input(motion);
  return logits_batch(stack_inputs(motion)).values();
}

std::vector<double> BaseClassifier::predict_proba(const Motion& motion) const { return softmax(logits(motion)); }

Tensor BaseClassifier::loss_input_gradient(const Motion& motion, int label) const {
  check_input(motion);
  ad::Graph g;
  ad::Var x = g.parameter(stack_inputs(motion));
  ad::Var loss = ad::sum(ad::softmax_ce(forward(g, x), {label}));
  g.backward(loss);
  return g.grad(x).reshaped(motion.positions().shape());
}

// ----- appended head -----------------------------------------------------

AppendedHead::AppendedHead(std::size_t classes, ParamVector params)
    : classes_(classes), params_(std::move(params)) {
  const std::vector<std::pair<const char*, Shape>> expected{
      {"l1.weight", {classes, classes}}, {"l1.bias", {classes}}, {"l2.weight", {classes, classes}}, {"l2.bias", {classes}}};
  if (params_.blocks().size() != expected.size())
    throw ArchitectureError("appended head expects 4 parameter blocks");
  for (const auto& [name, shape] : expected) {
    if (!params_.contains(name)) throw ArchitectureError(std::string("head: missing block ") + name);
    if (params_.get(name).shape() != shape)
      throw ArchitectureError(std::string("head: block ") + name + " has shape " +
                              shape_str(params_.get(name).shape()) + ", expected " + shape_str(shape));
  }
}

AppendedHead AppendedHead::zeros(std::size_t classes) {
  ParamVector p;
  p.add("l1.weight", Tensor({classes, classes}, 0.0));
  p.add("l1.bias", Tensor({classes}, 0.0));
  p.add("l2.weight", Tensor({classes, classes}, 0.0));
  p.add("l2.bias", Tensor({classes}, 0.0));
  return AppendedHead(classes, std::move(p));
}

AppendedHead AppendedHead::init(std::size_t classes, double weight_std, std::mt19937_64& rng) {
  AppendedHead h = zeros(classes);
  std::normal_distribution<double> d(0.0, weight_std);
  for (const char* name : {"l1.weight", "l2.weight"})
    for (double& v : h.params_.get(name).values()) v = d(rng);
  return h;
}

ad::Var AppendedHead::forward(ad::Graph& g, ad::Var z, bool trainable, std::vector<ad::Var>* param_vars) const {
  auto leaf = [&](const char* name) {
    return trainable ? g.parameter(params_.get(name)) : g.constant(params_.get(name));
  };
  ad::Var w1 = leaf("l1.weight"), b1 = leaf("l1.bias"), w2 = leaf("l2.weight"), b2 = leaf("l2.bias");
  if (param_vars) *param_vars = {w1, b1, w2, b2};
  return forward_with(z, {w1, b1, w2, b2});
}

ad::Var AppendedHead::forward_with(ad::Var z, const std::vector<ad::Var>& params) {
  if (params.size() != 4) throw ArchitectureError("appended head expects 4 parameter nodes");
  return ad::affine(ad::tanh(ad::affine(z, params[0], params[1])), params[2], params[3]);
}

ad::Var AppendedHead::member_logits_with(ad::Var z, const std::vector<ad::Var>& params) {
  return ad::add(forward_with(z, params), z);
}

ad::Var AppendedHead::member_logits(ad::Graph& g, ad::Var z, bool trainable,
                                    std::vector<ad::Var>* param_vars) const {
  return ad::add(forward(g, z, trainable, param_vars), z);
}

// ----- ensemble ----------------------------------------------------------

BeatEnsemble::BeatEnsemble(BaseClassifier base, std::vector<AppendedHead> heads)
    : base_(std::move(base)), heads_(std::move(heads)), base_digest_(base_.digest()) {
  if (heads_.empty()) throw ArchitectureError("ensemble needs at least one appended head");
  for (const auto& h : heads_)
    if (h.classes() != base_.class_count())
      throw ArchitectureError("head class count " + std::to_string(h.classes()) + " differs from base " +
                              std::to_string(base_.class_count()));
}

void BeatEnsemble::verify_base() const {
  const std::string now = base_.digest();
  if (now != base_digest_)
    throw DigestError("frozen-base violation: base digest " + now + " differs from recorded " + base_digest_);
}

BeatEnsemble BeatEnsemble::prefix(std::size_t n) const {
  if (n == 0 || n > heads_.size())
    throw ConfigError("ensemble prefix size " + std::to_string(n) + " outside [1," +
                      std::to_string(heads_.size()) + "]");
  return BeatEnsemble(base_, std::vector<AppendedHead>(heads_.begin(), heads_.begin() + static_cast<std::ptrdiff_t>(n)));
}

std::vector<double> BeatEnsemble::member_logits(const Motion& motion, std::size_t i) const {
  if (i >= heads_.size())
    throw ConfigError("member index " + std::to_string(i) + " out of range for " + std::to_string(heads_.size()) +
                      " heads");
  ad::Graph g;
  ad::Var z = g.constant(Tensor({1, base_.class_count()}, base_.logits(motion)));
  return heads_[i].member_logits(g, z).value().values();
}

std::vector<double> BeatEnsemble::predict_bma(const Motion& motion) const {
  ad::Graph g;
  ad::Var z = g.constant(Tensor({1, base_.class_count()}, base_.logits(motion)));
  std::vector<double> avg(base_.class_count(), 0.0);
  for (const auto& h : heads_) {
    const auto p = softmax(h.member_logits(g, z).value().values());
    for (std::size_t c = 0; c < avg.size(); ++c) avg[c] += p[c];
  }
  for (double& v : avg) v /= static_cast<double>(heads_.size());
  return avg;
}

Tensor BeatEnsemble::expected_input_gradient(const Motion& motion, int label) const {
  ad::Graph g;
  ad::Var x = g.parameter(stack_inputs(motion));
  ad::Var z = base_.forward(g, x);
  ad::Var total;
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    ad::Var ce = ad::sum(ad::softmax_ce(heads_[i].member_logits(g, z), {label}));
    total = i == 0 ? ce : ad::add(total, ce);
  }
  g.backward(ad::scale(total, 1.0 / static_cast<double>(heads_.size())));
  return g.grad(x).reshaped(motion.positions().shape());
}

}  // namespace beat
