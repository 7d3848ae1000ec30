#include "beat/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "beat/error.hpp"

namespace beat {

namespace {

const std::vector<std::pair<AttackKind, const char*>> kKinds{
    {AttackKind::kIterL2, "iter-l2"},
    {AttackKind::kLinfPerJoint, "linf-per-joint"},
    {AttackKind::kDecision, "decision"},
    {AttackKind::kEotL2, "eot-l2"}};

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double cross_entropy(const Classifier& model, const Motion& m, int label) {
  const auto p = model.predict_proba(m);
  return -std::log(std::max(p[static_cast<std::size_t>(label)], 1e-300));
}

void check_label(const Classifier& model, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= model.class_count())
    throw ConfigError("attack: label " + std::to_string(label) + " out of range");
}

AttackResult finish(const Classifier& model, Motion m, int label, bool success, std::size_t it) {
  const double loss = cross_entropy(model, m, label);
  return AttackResult{std::move(m), success, it, loss, {}};
}

// Shared loop for the l2-normalized attacks; `direction` supplies the ascent
// direction at the current iterate.
template <typename DirectionFn>
AttackResult normalized_ascent(const Classifier& model, const Motion& x, int label, const AttackConfig& cfg,
                               DirectionFn direction) {
  check_label(model, label);
  Motion cur = x;
  if (model.predict(cur) != label) return finish(model, std::move(cur), label, true, 0);
  for (std::size_t t = 1; t <= cfg.iterations; ++t) {
    const Tensor g = direction(cur);
    const double n = norm(g.values());
    if (n > 0.0 && cfg.step_size > 0.0) {
      auto& v = cur.positions().values();
      for (std::size_t i = 0; i < v.size(); ++i) v[i] += cfg.step_size * g[i] / n;
    }
    if (model.predict(cur) != label) return finish(model, std::move(cur), label, true, t);
  }
  return finish(model, std::move(cur), label, false, cfg.iterations);
}

}  // namespace

std::string to_string(AttackKind kind) {
  for (const auto& [k, name] : kKinds)
    if (k == kind) return name;
  return "unknown";
}

std::vector<std::string> attack_kind_names() {
  std::vector<std::string> out;
  for (const auto& [k, name] : kKinds) out.emplace_back(name);
  return out;
}

AttackKind attack_kind_from_string(const std::string& s) {
  for (const auto& [k, name] : kKinds)
    if (s == name) return k;
  std::string valid;
  for (const auto& n : attack_kind_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown attack kind '" + s + "' (valid kinds: " + valid + ")");
}

double JointBudgets::of(BudgetClass c) const {
  switch (c) {
    case BudgetClass::kHip: return hip;
    case BudgetClass::kKnee: return knee;
    case BudgetClass::kAnkle: return ankle;
    case BudgetClass::kFoot: return foot;
    case BudgetClass::kOther: return hip;
  }
  return hip;
}

void AttackConfig::validate() const {
  if (iterations == 0) throw ConfigError("attack: iterations must be at least 1");
  if (!(step_size >= 0.0)) throw ConfigError("attack: step size must be non-negative");
  if (!(budgets.hip >= 0.0 && budgets.knee >= 0.0 && budgets.ankle >= 0.0 && budgets.foot >= 0.0))
    throw ConfigError("attack: per-joint budgets must be non-negative");
  if (eot_draws == 0) throw ConfigError("attack: eot_draws must be at least 1");
  if (!(eot_min_factor >= 0.0 && eot_min_factor <= 1.0))
    throw ConfigError("attack: eot_min_factor must lie in [0,1]");
}

nlohmann::json AttackConfig::to_json() const {
  return {{"kind", to_string(kind)},
          {"iterations", iterations},
          {"step_size", step_size},
          {"budgets", {{"hip", budgets.hip}, {"knee", budgets.knee}, {"ankle", budgets.ankle}, {"foot", budgets.foot}}},
          {"eot_draws", eot_draws},
          {"eot_min_factor", eot_min_factor},
          {"search_rounds", search_rounds},
          {"orthogonal_scale", orthogonal_scale},
          {"source_scale", source_scale},
          {"seed", seed}};
}

AttackConfig AttackConfig::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("attack config must be an object");
  AttackConfig c;
  for (const auto& [key, value] : doc.items()) {
    if (key == "kind") c.kind = attack_kind_from_string(value.get<std::string>());
    else if (key == "iterations") c.iterations = value.get<std::size_t>();
    else if (key == "step_size") c.step_size = value.get<double>();
    else if (key == "eot_draws") c.eot_draws = value.get<std::size_t>();
    else if (key == "eot_min_factor") c.eot_min_factor = value.get<double>();
    else if (key == "search_rounds") c.search_rounds = value.get<std::size_t>();
    else if (key == "orthogonal_scale") c.orthogonal_scale = value.get<double>();
    else if (key == "source_scale") c.source_scale = value.get<double>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "budgets") {
      for (const auto& [bk, bv] : value.items()) {
        if (bk == "hip") c.budgets.hip = bv.get<double>();
        else if (bk == "knee") c.budgets.knee = bv.get<double>();
        else if (bk == "ankle") c.budgets.ankle = bv.get<double>();
        else if (bk == "foot") c.budgets.foot = bv.get<double>();
        else throw ConfigError("attack budgets: unknown key '" + bk + "'");
      }
    } else {
      throw ConfigError("attack config: unknown key '" + key + "'");
    }
  }
  // The boundary walk needs more steps than the gradient attacks.
  if (c.kind == AttackKind::kDecision && !doc.contains("iterations")) c.iterations = 200;
  c.validate();
  return c;
}

double l2_distance(const Motion& a, const Motion& b) {
  if (a.positions().shape() != b.positions().shape()) throw ShapeError("l2_distance: shapes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.positions().size(); ++i) {
    const double d = a.positions()[i] - b.positions()[i];
    s += d * d;
  }
  return std::sqrt(s);
}

AttackResult attack_iter_l2(const Classifier& model, const Motion& x, int label, const AttackConfig& cfg,
                            std::mt19937_64&) {
  cfg.validate();
  return normalized_ascent(model, x, label, cfg,
                           [&](const Motion& cur) { return model.loss_input_gradient(cur, label); });
}

AttackResult attack_eot(const Classifier& model, const Motion& x, int label, const AttackConfig& cfg,
                        std::mt19937_64& rng) {
  cfg.validate();
  std::uniform_real_distribution<double> u(cfg.eot_min_factor, 1.0);
  return normalized_ascent(model, x, label, cfg, [&](const Motion& cur) {
    Tensor total(cur.positions().shape(), 0.0);
    for (std::size_t d = 0; d < cfg.eot_draws; ++d) {
      const double f = cfg.eot_min_factor < 1.0 ? u(rng) : 1.0;
      Tensor g;
      if (f == 1.0) {
        g = model.loss_input_gradient(cur, label);
      } else {
        Motion p = x;
        auto& v = p.positions().values();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += f * (cur.positions()[i] - x.positions()[i]);
        g = model.loss_input_gradient(p, label);
      }
      for (std::size_t i = 0; i < total.size(); ++i) total[i] += g[i];
    }
    for (double& v : total.values()) v /= static_cast<double>(cfg.eot_draws);
    return total;
  });
}

AttackResult attack_linf_perjoint(const Classifier& model, const Motion& x, int label, const AttackConfig& cfg,
                                  std::mt19937_64&) {
  cfg.validate();
  check_label(model, label);
  const std::size_t M = x.frames(), J = x.joints();
  std::vector<double> budget(J);
  for (std::size_t j = 0; j < J; ++j) budget[j] = cfg.budgets.of(x.topology().budget_classes()[j]);

  Motion cur = x;
  if (model.predict(cur) != label) return finish(model, std::move(cur), label, true, 0);
  for (std::size_t t = 1; t <= cfg.iterations; ++t) {
    const Tensor g = model.loss_input_gradient(cur, label);
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t j = 0; j < J; ++j)
        for (std::size_t a = 0; a < 3; ++a) {
          const std::size_t i = (m * J + j) * 3 + a;
          const double s = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
          const double delta = std::clamp(cur.positions()[i] + cfg.step_size * s - x.positions()[i],
                                          -budget[j], budget[j]);
          cur.positions()[i] = x.positions()[i] + delta;
        }
    if (model.predict(cur) != label) return finish(model, std::move(cur), label, true, t);
  }
  return finish(model, std::move(cur), label, false, cfg.iterations);
}

AttackResult attack_decision(const Classifier& model, const Motion& x, int label, const Dataset& pool,
                             const AttackConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  check_label(model, label);
  std::vector<std::size_t> seeds;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const Motion& m = pool.samples[i].motion;
    if (m.positions().shape() == x.positions().shape() && model.predict(m) != label) seeds.push_back(i);
  }
  if (seeds.empty())
    throw ConfigError("decision attack: no pool sample is classified differently from label " +
                      std::to_string(label));
  std::uniform_int_distribution<std::size_t> pick(0, seeds.size() - 1);
  const Tensor& origin = x.positions();
  const std::size_t n = origin.size();

  // Binary search along the segment from x to the seed, keeping the
  // misclassified end.
  Motion adv(x.topology_ptr(), pool.samples[seeds[pick(rng)]].motion.positions());
  auto lerp = [&](const Tensor& to, double f) {
    Motion p = x;
    for (std::size_t i = 0; i < n; ++i) p.positions()[i] = origin[i] + f * (to[i] - origin[i]);
    return p;
  };
  double lo = 0.0, hi = 1.0;
  for (std::size_t r = 0; r < cfg.search_rounds; ++r) {
    const double mid = 0.5 * (lo + hi);
    if (model.predict(lerp(adv.positions(), mid)) != label) hi = mid;
    else lo = mid;
  }
  if (hi < 1.0) adv = lerp(adv.positions(), hi);

  AttackResult result{adv, true, 0, l2_distance(adv, x), {}};
  result.distance_trace.push_back(result.final_loss);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double orth = cfg.orthogonal_scale, toward = cfg.source_scale;
  std::vector<double> eta(n);
  for (std::size_t t = 1; t <= cfg.iterations; ++t) {
    result.iterations = t;
    const double d = result.final_loss;
    if (d == 0.0) break;
    // Random direction with the component along (adv - x) removed.
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      eta[i] = gauss(rng);
      dot += eta[i] * (result.adversarial.positions()[i] - origin[i]);
    }
    for (std::size_t i = 0; i < n; ++i) eta[i] -= dot / (d * d) * (result.adversarial.positions()[i] - origin[i]);
    const double en = norm(eta);
    Motion cand = x;
    for (std::size_t i = 0; i < n; ++i) {
      const double moved = result.adversarial.positions()[i] + (en > 0.0 ? orth * d * eta[i] / en : 0.0);
      cand.positions()[i] = origin[i] + (1.0 - toward) * (moved - origin[i]);
    }
    const double cd = l2_distance(cand, x);
    if (cd < d && model.predict(cand) != label) {
      result.adversarial = std::move(cand);
      result.final_loss = cd;
      result.distance_trace.push_back(cd);
      orth = std::min(orth * 1.1, 1.0);
      toward = std::min(toward * 1.1, 0.5);
    } else {
      orth = std::max(orth * 0.9, 1e-4);
      toward = std::max(toward * 0.9, 1e-4);
    }
  }
  return result;
}

AttackResult run_attack(const Classifier& model, const Motion& x, int label, const AttackConfig& cfg,
                        std::mt19937_64& rng, const Dataset* pool) {
  switch (cfg.kind) {
    case AttackKind::kIterL2: return attack_iter_l2(model, x, label, cfg, rng);
    case AttackKind::kLinfPerJoint: return attack_linf_perjoint(model, x, label, cfg, rng);
    case AttackKind::kEotL2: return attack_eot(model, x, label, cfg, rng);
    case AttackKind::kDecision:
      if (!pool) throw ConfigError("decision attack requires a sample pool");
      return attack_decision(model, x, label, *pool, cfg, rng);
  }
  throw ConfigError("unhandled attack kind");
}

}  // namespace beat
