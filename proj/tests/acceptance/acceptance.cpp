// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "beat/attacks.hpp"
#include "beat/dataset_io.hpp"
#include "beat/energy.hpp"
#include "beat/evaluation.hpp"
#include "beat/samplers.hpp"
#include "beat/trainers.hpp"

using namespace beat;
namespace fs = std::filesystem;

namespace {

// ----- tolerances --------------------------------------------------------

constexpr double kGradRelTol = 1e-5;
constexpr std::size_t kGradPoints = 20;
constexpr double kGradSeconds = 10.0;
constexpr double kDistanceTol = 1e-12;
constexpr std::size_t kDistancePairs = 100;
constexpr double kSgldMeanTol = 0.05;
constexpr double kSgldVarTol = 0.1;
constexpr double kSgldSeconds = 30.0;
constexpr double kSgahmcTarget = 0.1;
constexpr double kBmaTol = 1e-12;
constexpr double kAccuracyDropPoints = 2.0;
constexpr double kAsrDropPoints = 20.0;
constexpr double kBaseAccuracy = 95.0;
constexpr double kExperimentSeconds = 600.0;
constexpr std::size_t kBudgetRuns = 1000;
constexpr double kBudgetSlack = 1e-12;

// ----- desk-scale experiment settings ------------------------------------

constexpr std::uint64_t kSeeds[] = {1, 2, 3};
constexpr double kDataNoise = 0.13;

BeatTrainerConfig experiment_beat_config(std::uint64_t seed) {
  BeatTrainerConfig c;
  c.sgahmc.step = 0.02;
  c.w3 = 1.0;
  c.seed = seed;
  return c;
}

// ----- reporting ---------------------------------------------------------

struct Outcome {
  int id;
  std::string name;
  bool pass;
  std::string detail;
};

std::vector<Outcome> g_outcomes;

void report(int id, const std::string& name, bool pass, const std::string& detail, double seconds) {
  g_outcomes.push_back({id, name, pass, detail});
  std::printf("%s [%d] %s: %s (%.1f s)\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str(), seconds);
  std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor gaussian(Shape shape, std::mt19937_64& rng, double std = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, std);
  for (double& v : t.values()) v = n(rng);
  return t;
}

// ----- 1. autodiff -------------------------------------------------------

void criterion_autodiff() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  using ad::Var;

  // Each entry maps a random point to a scalar through one op; the other
  // operands and the output weighting are random constants fixed per point.
  struct Case {
    std::string op;
    Shape shape;
    std::function<ad::ScalarFn(std::mt19937_64&)> make;
  };
  auto weighted = [](Var y, const Tensor& w) { return ad::sum(ad::mul(y, y.graph().constant(w))); };
  std::vector<Case> cases;
  cases.push_back({"matmul(a,.)", {3, 4}, [&](std::mt19937_64& r) -> ad::ScalarFn {
                     Tensor a = gaussian({2, 3}, r), w = gaussian({2, 4}, r);
                     return [=](ad::Graph& g, Var x) { return weighted(ad::matmul(g.constant(a), x), w); };
                   }});
  cases.push_back({"matmul(.,b)", {2, 3}, [&](std::mt19937_64& r) -> ad::ScalarFn {
                     Tensor b = gaussian({3, 4}, r), w = gaussian({2, 4}, r);
                     return [=](ad::Graph& g, Var x) { return weighted(ad::matmul(x, g.constant(b)), w); };
                   }});
  cases.push_back({"add", {3, 4}, [&](std::mt19937_64& r) -> ad::ScalarFn {
                     Tensor b = gaussian({3, 4}, r), w = gaussian({3, 4}, r);
                     return [=](ad::Graph& g, Var x) { return weighted(ad::add(x, g.constant(b)), w); };
                   }});
  cases.push_back({"add(broadcast row)", {4}, [&](std::mt19937_64& r) -> ad::ScalarFn {
                     Tensor a = gaussian({3, 4}, r), w = gaussian({3, 4}, r);
                     return [=](ad::Graph& g, Var x) { return weighted(ad::add(g.constant(a), x), w); };
                   }});
  cases.push_back({"sub", {3, 4}, [&](std::mt19937_64& r) -> ad::ScalarFn {
                     Tensor a = gaussian({3, 4}, r), w = gaussian({3, 4}, r);
                     return [=](ad::Graph& g, Var x) { return weighted(ad::sub(g.constant(a), x), w); };
                   }});
  cases.push_back({"mul", {3, 4}, [&](std::mt19937_64& r) -> ad::ScalarFn {
                     Tensor b = gaussian({3, 4}, r), w = gaussian({3, 4}, r);
                     return [=](ad::Graph& g, Var x) { return weighted(ad::mul(x, g.constant(b)), w); };
                   }});
  cases.push_back({"mul(x,x)", {3, 4}, [&](std::mt19937_64& r) -> ad::ScalarFn {
                     Tensor w = gaussian({3, 4}, r);
                     return [=](ad::Graph&, Var x) { return weighted(ad::mul(x, x), w); };
                   }});
  cases.push_back({"scale", {3, 4}, [&](std::mt19937_64& r) -> ad::ScalarFn {
                     Tensor w = gaussian({3, 4}, r);
                     const double f = std::normal_distribution<double>(0.0, 2.0)(r);
                     return [=](ad::Graph&, Var x) { return weighted(ad::scale(x, f), w); };
                   }});
  cases.push_back({"affine(x,.,.)", {2, 3}, [&](std::mt19937_64& r) -> ad::ScalarFn {
                     Tensor W = gaussian({3, 4}, r), b = gaussian({4}, r), w = gaussian({2, 4}, r);
                     return [=](ad::Graph& g, Var x) { return weighted(ad::affine(x, g.constant(W), g.constant(b)), w); };
                   }});
  cases.push_back({"affine(.,W,.)", {3, 4}, [&](std::mt19937_64& r) -> ad::ScalarFn {
                     Tensor X = gaussian({2, 3}, r), b = gaussian({4}, r), w = gaussian({2, 4}, r);
                     return [=](ad::Graph& g, Var x) { return weighted(ad::affine(g.constant(X), x, g.constant(b)), w); };
                   }});
  cases.push_back({"affine(.,.,b)", {4}, [&](std::mt19937_64& r) -> ad::ScalarFn {
                     Tensor X = gaussian({2, 3}, r), W = gaussian({3, 4}, r), w = gaussian({2, 4}, r);
                     return [=](ad::Graph& g, Var x) { return weighted(ad::affine(g.constant(X), g.constant(W), x), w); };
                   }});
  cases.push_back({"relu", {3, 4}, [&](std::mt19937_64& r) -> ad::ScalarFn {
                     Tensor w = gaussian({3, 4}, r);
                     return [=](ad::Graph&, Var x) { return weighted(ad::relu(x), w); };
                   }});
  cases.push_back({"tanh", {3, 4}, [&](std::mt19937_64& r) -> ad::ScalarFn {
                     Tensor w = gaussian({3, 4}, r);
                     return [=](ad::Graph&, Var x) { return weighted(ad::tanh(x), w); };
                   }});
  cases.push_back({"sum", {3, 4}, [&](std::mt19937_64&) -> ad::ScalarFn {
                     return [=](ad::Graph&, Var x) { return ad::sum(ad::mul(x, x)); };
                   }});
  cases.push_back({"mean", {3, 4}, [&](std::mt19937_64&) -> ad::ScalarFn {
                     return [=](ad::Graph&, Var x) { return ad::mean(ad::mul(x, x)); };
                   }});
  cases.push_back({"logsumexp", {3, 4}, [&](std::mt19937_64& r) -> ad::ScalarFn {
                     Tensor w = gaussian({3}, r);
                     return [=](ad::Graph&, Var x) { return weighted(ad::logsumexp(x), w); };
                   }});
  cases.push_back({"row_mean", {3, 4}, [&](std::mt19937_64& r) -> ad::ScalarFn {
                     Tensor w = gaussian({3}, r);
                     return [=](ad::Graph&, Var x) { return weighted(ad::row_mean(ad::mul(x, x)), w); };
                   }});
  cases.push_back({"select", {3, 4}, [&](std::mt19937_64& r) -> ad::ScalarFn {
                     Tensor w = gaussian({3}, r);
                     std::vector<int> labels(3);
                     for (int& l : labels) l = std::uniform_int_distribution<int>(0, 3)(r);
                     return [=](ad::Graph&, Var x) { return weighted(ad::select(ad::mul(x, x), labels), w); };
                   }});
  cases.push_back({"softmax_ce", {3, 4}, [&](std::mt19937_64& r) -> ad::ScalarFn {
                     Tensor w = gaussian({3}, r);
                     std::vector<int> labels(3);
                     for (int& l : labels) l = std::uniform_int_distribution<int>(0, 3)(r);
                     return [=](ad::Graph&, Var x) { return weighted(ad::softmax_ce(x, labels), w); };
                   }});

  double worst = 0.0;
  std::string worst_op;
  for (const auto& c : cases)
    for (std::size_t p = 0; p < kGradPoints; ++p) {
      const ad::ScalarFn fn = c.make(rng);
      const double err = ad::grad_check(fn, gaussian(c.shape, rng), 1e-5);
      if (err > worst) {
        worst = err;
        worst_op = c.op;
      }
    }
  const double secs = seconds_since(t0);
  report(1, "autodiff gradient check", worst < kGradRelTol && secs < kGradSeconds,
         fmt::format("{} ops x {} points, worst relative error {:.2e} ({}) < {:.0e}, runtime < {:.0f} s", cases.size(),
                     kGradPoints, worst, worst_op, kGradRelTol, kGradSeconds),
         secs);
}

// ----- 2. manifold distance ----------------------------------------------

// Straightforward restatement of the distance with explicit difference
// stencils, written without the library's helpers.
double brute_force_distance(const Motion& x, const Motion& y) {
  const std::size_t M = x.frames(), J = x.joints();
  const auto& bones = x.topology().bones();
  auto len = [](const Motion& q, std::size_t m, std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t k = 0; k < 3; ++k) s += (q.at(m, a, k) - q.at(m, b, k)) * (q.at(m, a, k) - q.at(m, b, k));
    return std::sqrt(s);
  };
  double bone = 0.0;
  for (std::size_t m = 0; m < M; ++m)
    for (const auto& b : bones) {
      const double d = len(x, m, b.parent, b.child) - len(y, m, b.parent, b.child);
      bone += d * d;
    }
  bone = bones.empty() ? 0.0 : bone / static_cast<double>(M * bones.size());

  auto diff = [&](std::size_t order, std::size_t m, std::size_t j, std::size_t k) {
    auto e = [&](std::size_t f) { return x.at(f, j, k) - y.at(f, j, k); };
    if (order == 0) return e(m);
    if (order == 1) return e(m + 1) - e(m);
    return e(m + 2) - 2.0 * e(m + 1) + e(m);
  };
  double dyn = 0.0;
  for (std::size_t order = 0; order <= 2; ++order) {
    double s = 0.0;
    for (std::size_t m = 0; m + order < M; ++m)
      for (std::size_t j = 0; j < J; ++j)
        for (std::size_t k = 0; k < 3; ++k) s += diff(order, m, j, k) * diff(order, m, j, k);
    dyn += s / static_cast<double>((M - order) * J);
  }
  return bone + dyn;
}

void criterion_distance() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(202);
  auto topo = std::make_shared<const SkeletonTopology>(SkeletonTopology::default_toy());
  double worst = 0.0;
  for (std::size_t p = 0; p < kDistancePairs; ++p) {
    const std::size_t M = std::uniform_int_distribution<std::size_t>(3, 24)(rng);
    Motion x(topo, gaussian({M, topo->joint_count(), 3}, rng));
    Motion y = x;
    const double s = p % 2 ? 0.05 : 1.0;
    for (double& v : y.positions().values()) v += std::normal_distribution<double>(0.0, s)(rng);
    const double ref = brute_force_distance(x, y);
    worst = std::max(worst, std::abs(manifold_distance(x, y) - ref) / std::max(1.0, std::abs(ref)));
  }
  const Motion x(topo, gaussian({16, topo->joint_count(), 3}, rng));
  const double self = manifold_distance(x, x);

  auto point = std::make_shared<const SkeletonTopology>(1, std::vector<Bone>{},
                                                        std::vector<BudgetClass>{BudgetClass::kOther});
  Motion a(point, 3), b(point, 3);
  for (std::size_t m = 0; m < 3; ++m) b.at(m, 0, 0) = 1.0;
  const double translated = manifold_distance(a, b);

  const bool pass = worst <= kDistanceTol && self == 0.0 && translated == 1.0;
  report(2, "manifold distance oracle", pass,
         fmt::format("{} random pairs, max deviation from brute force {:.2e} <= {:.0e}; d(x,x) = {}; unit translation "
                     "with M=3, J=1 gives {}",
                     kDistancePairs, worst, kDistanceTol, self, translated),
         seconds_since(t0));
}

// ----- 3. SGLD stationarity ----------------------------------------------

void criterion_sgld() {
  const auto t0 = std::chrono::steady_clock::now();
  // 384 independent coordinates (one desk-scale motion) pooled for the moments.
  const std::size_t dim = 384, steps = 50000, burn_in = 5000;
  const SgldConfig cfg{0.05, 1.0, 1};
  std::mt19937_64 rng(303);
  Tensor x({dim}, 0.0);
  const GradientFn grad = [](const Tensor& p) {
    Tensor g = p;
    for (double& v : g.values()) v = -v;
    return g;
  };
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < steps; ++t) {
    x = sgld_step(x, grad, cfg, rng);
    if (t < burn_in) continue;
    for (double v : x.values()) {
      sum += v;
      sq += v * v;
    }
    n += dim;
  }
  const double mean = sum / static_cast<double>(n);
  const double var = sq / static_cast<double>(n) - mean * mean;
  const double secs = seconds_since(t0);
  report(3, "SGLD stationarity", std::abs(mean) < kSgldMeanTol && std::abs(var - 1.0) < kSgldVarTol && secs < kSgldSeconds,
         fmt::format("standard normal target, step 0.05, {} steps ({} burn-in), {} pooled coordinates: mean {:+.4f} "
                     "(|.| < {}), variance {:.4f} (|.-1| < {}), runtime < {:.0f} s",
                     steps, burn_in, dim, mean, kSgldMeanTol, var, kSgldVarTol, kSgldSeconds),
         secs);
}

// ----- 4. SG-AHMC descent ------------------------------------------------

void criterion_sgahmc() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t dim = 10;
  const SgahmcConfig cfg{};
  SgahmcState state(dim, cfg);
  std::mt19937_64 rng(404);
  std::vector<double> theta(dim, 1.0 / std::sqrt(static_cast<double>(dim)));
  for (std::size_t t = 0; t < 5000; ++t) state.step(theta, theta, rng);  // h = grad of |theta|^2 / 2
  double norm = 0.0;
  for (double v : theta) norm += v * v;
  norm = std::sqrt(norm);
  report(4, "SG-AHMC descent", norm < kSgahmcTarget,
         fmt::format("quadratic loss, |theta_0| = 1, 5000 steps, sigma {}, F {:.0e}: final |theta| = {:.4f} < {}",
                     cfg.step, cfg.friction, norm, kSgahmcTarget),
         seconds_since(t0));
}

// ----- 5. skip connection ------------------------------------------------

void criterion_skip(const SynthDataset& data, const BaseClassifier& base) {
  const auto t0 = std::chrono::steady_clock::now();
  const BeatEnsemble zero(base, {AppendedHead::zeros(4), AppendedHead::zeros(4), AppendedHead::zeros(4)});
  std::size_t disagreements = 0;
  for (const auto& s : data.test.samples)
    if (zero.predict(s.motion) != base.predict(s.motion)) ++disagreements;

  std::mt19937_64 rng(505);
  const BeatEnsemble one(base, {AppendedHead::init(4, 0.5, rng)});
  double worst = 0.0;
  for (const auto& s : data.test.samples) {
    const auto bma = one.predict_bma(s.motion);
    const auto member = softmax(one.member_logits(s.motion, 0));
    for (std::size_t c = 0; c < bma.size(); ++c) worst = std::max(worst, std::abs(bma[c] - member[c]));
  }
  report(5, "skip-connection identity", disagreements == 0 && worst <= kBmaTol,
         fmt::format("zero-weight heads disagree with the base on {} of {} test samples; N=1 BMA vs member softmax max "
                     "deviation {:.1e} <= {:.0e}",
                     disagreements, data.test.size(), worst, kBmaTol),
         seconds_since(t0));
}

// ----- 6-8. desk-scale experiment ----------------------------------------

struct SeedResult {
  double st_acc = 0.0, st_asr = 0.0;
  double acc[3] = {0, 0, 0}, asr[3] = {0, 0, 0}, median_grad[3] = {0, 0, 0}, below[3] = {0, 0, 0};
  bool base_unchanged = false;
  std::string base_digest_before, base_digest_after;
};

SeedResult run_seed(std::uint64_t seed) {
  SynthConfig gen;
  gen.noise_std = kDataNoise;
  const SynthDataset data = synth_generate(gen, seed);
  StandardTrainConfig st;
  st.seed = seed;
  const BaseClassifier base = train_standard(BaseArch{}, data.train, st);

  SeedResult r;
  r.base_digest_before = base.digest();
  const BeatEnsemble ens = train_beat(base, data.train, experiment_beat_config(seed));
  r.base_digest_after = base.digest();
  r.base_unchanged = r.base_digest_before == r.base_digest_after && ens.base_digest() == r.base_digest_before;

  AttackConfig attack;
  attack.iterations = 100;
  attack.seed = derive_seed(seed, 20);
  r.st_acc = accuracy(base, data.test);
  r.st_asr = attack_success_rate(base, data.test, attack);
  const std::size_t sizes[3] = {1, 3, 5};
  for (int k = 0; k < 3; ++k) {
    const BeatEnsemble e = ens.prefix(sizes[k]);
    r.acc[k] = accuracy(e, data.test);
    r.asr[k] = attack_success_rate(e, data.test, attack);
    const GradientAnalysis g = gradient_analysis(e, data.test, 100, derive_seed(seed, 30));
    r.median_grad[k] = g.median_abs;
    r.below[k] = g.fraction_below;
  }
  spdlog::info("seed {}: ST acc {:.1f} ASR {:.1f} | BEAT N=1 {:.1f}/{:.1f} N=3 {:.1f}/{:.1f} N=5 {:.1f}/{:.1f}", seed,
               r.st_acc, r.st_asr, r.acc[0], r.asr[0], r.acc[1], r.asr[1], r.acc[2], r.asr[2]);
  return r;
}

void criteria_experiment() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<SeedResult> runs;
  for (std::uint64_t seed : kSeeds) runs.push_back(run_seed(seed));
  const double secs = seconds_since(t0);
  const double n = static_cast<double>(runs.size());

  bool frozen = true;
  for (const auto& r : runs) frozen = frozen && r.base_unchanged;
  report(6, "frozen base", frozen,
         fmt::format("base digest unchanged by BEAT training on all {} seeds (e.g. {})", runs.size(),
                     runs.front().base_digest_before),
         0.0);

  double st_acc = 0, st_asr = 0, acc[3] = {0, 0, 0}, asr[3] = {0, 0, 0}, grad[3] = {0, 0, 0}, below[3] = {0, 0, 0};
  double min_base = 100.0;
  std::string per_seed;
  for (const auto& r : runs) {
    st_acc += r.st_acc / n;
    st_asr += r.st_asr / n;
    min_base = std::min(min_base, r.st_acc);
    for (int k = 0; k < 3; ++k) {
      acc[k] += r.acc[k] / n;
      asr[k] += r.asr[k] / n;
      grad[k] += r.median_grad[k] / n;
      below[k] += r.below[k] / n;
    }
    per_seed += fmt::format(" [ST {:.1f}/{:.1f}, BEAT {:.1f}/{:.1f}]", r.st_acc, r.st_asr, r.acc[2], r.asr[2]);
  }
  const bool base_ok = min_base >= kBaseAccuracy;
  const bool a = acc[2] >= st_acc - kAccuracyDropPoints;
  const bool b = st_asr - asr[2] >= kAsrDropPoints;
  const bool c = asr[0] >= asr[1] && asr[1] >= asr[2];
  const bool fast = secs < kExperimentSeconds;
  report(7, "desk-scale robustness", base_ok && a && b && c && fast,
         fmt::format("{} seeds; base accuracy min {:.1f} (>= {}) {}; (a) clean accuracy BEAT {:.2f} vs ST {:.2f} "
                     "(drop <= {}) {}; (b) iter-l2 ASR BEAT {:.2f} vs ST {:.2f}, drop {:.2f} (>= {}) {}; (c) ASR over "
                     "N=1,3,5: {:.2f}, {:.2f}, {:.2f} non-increasing {}; runtime < {:.0f} s {}; per seed acc/ASR:{}",
                     runs.size(), min_base, kBaseAccuracy, base_ok ? "ok" : "FAIL", acc[2], st_acc, kAccuracyDropPoints,
                     a ? "ok" : "FAIL", asr[2], st_asr, st_asr - asr[2], kAsrDropPoints, b ? "ok" : "FAIL", asr[0],
                     asr[1], asr[2], c ? "ok" : "FAIL", kExperimentSeconds, fast ? "ok" : "FAIL", per_seed),
         secs);

  report(8, "expected-gradient trend", grad[0] > grad[1] && grad[1] > grad[2],
         fmt::format("seed-averaged median |expected gradient component| over N=1,3,5: {:.3e}, {:.3e}, {:.3e} (strictly "
                     "decreasing); fraction below 1e-10: {:.3f}, {:.3f}, {:.3f}",
                     grad[0], grad[1], grad[2], below[0], below[1], below[2]),
         0.0);
}

// ----- 9. per-joint budgets ----------------------------------------------

void criterion_budgets(const SynthDataset& data) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(909);
  std::vector<BaseClassifier> models;
  for (std::uint64_t s = 0; s < 4; ++s) models.push_back(BaseClassifier::init(BaseArch{}, 900 + s));
  const JointBudgets budgets;
  const auto& classes = data.test.topology->budget_classes();
  std::size_t violations = 0;
  double worst_ratio = 0.0;
  for (std::size_t run = 0; run < kBudgetRuns; ++run) {
    const auto& s = data.test.samples[std::uniform_int_distribution<std::size_t>(0, data.test.size() - 1)(rng)];
    const auto& model = models[run % models.size()];
    AttackConfig cfg;
    cfg.kind = AttackKind::kLinfPerJoint;
    cfg.iterations = std::uniform_int_distribution<std::size_t>(1, 20)(rng);
    cfg.step_size = std::exp(std::uniform_real_distribution<double>(std::log(1e-3), std::log(0.5))(rng));
    const AttackResult r = attack_linf_perjoint(model, s.motion, model.predict(s.motion), cfg, rng);
    for (std::size_t m = 0; m < s.motion.frames(); ++m)
      for (std::size_t j = 0; j < s.motion.joints(); ++j) {
        const double budget = budgets.of(classes[j]);
        for (std::size_t k = 0; k < 3; ++k) {
          const double dev = std::abs(r.adversarial.at(m, j, k) - s.motion.at(m, j, k));
          if (dev > budget + kBudgetSlack) ++violations;
          worst_ratio = std::max(worst_ratio, dev / budget);
        }
      }
  }
  report(9, "per-joint budget contract", violations == 0,
         fmt::format("{} randomized linf-per-joint runs (budgets hip {}, knee {}, ankle {}, foot {}): {} coordinates "
                     "over budget + {:.0e}; largest deviation/budget {:.12f}",
                     kBudgetRuns, budgets.hip, budgets.knee, budgets.ankle, budgets.foot, violations, kBudgetSlack,
                     worst_ratio),
         seconds_since(t0));
}

// ----- 10. perceptual metrics --------------------------------------------

void criterion_perceptual(const SynthDataset& data) {
  const auto t0 = std::chrono::steady_clock::now();
  // Dyadic coordinates keep translation and scaling exact in floating point.
  Motion x = data.test.samples[0].motion;
  for (double& v : x.positions().values()) v = std::round(v * 1024.0) / 1024.0;

  Motion shifted = x;
  const double offset[3] = {0.25, 0.5, 0.5};  // |offset| = 0.75
  for (std::size_t m = 0; m < x.frames(); ++m)
    for (std::size_t j = 0; j < x.joints(); ++j)
      for (std::size_t k = 0; k < 3; ++k) shifted.at(m, j, k) += offset[k];
  const PerceptualMetrics t = perceptual_metrics(x, shifted);

  Motion doubled = x;
  for (double& v : doubled.positions().values()) v *= 2.0;
  const PerceptualMetrics d = perceptual_metrics(x, doubled);

  const bool pass = t.accel == 0.0 && t.angular_accel == 0.0 && t.bone_violation == 0.0 && t.l == 0.75 &&
                    d.bone_violation == 100.0;
  report(10, "perceptual metrics", pass,
         fmt::format("translation by |offset| 0.75: l {}, accel {}, angular accel {}, bone violation {}%; doubled "
                     "skeleton: bone violation {}%",
                     t.l, t.accel, t.angular_accel, t.bone_violation, d.bone_violation),
         seconds_since(t0));
}

// ----- 11. reproducibility -----------------------------------------------

int run_cli(const std::string& cli, const std::string& sub, const fs::path& config, const fs::path& out,
            const fs::path& log) {
  const std::string cmd = fmt::format("BEAT_LOG=warn \"{}\" {} --config \"{}\" --out \"{}\" >>\"{}\" 2>&1", cli, sub,
                                      config.string(), out.string(), log.string());
  return std::system(cmd.c_str());
}

void criterion_reproducibility(const std::string& cli, const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(work);
  const fs::path config = work / "config.json";
  const nlohmann::json doc = {{"seed", 7},
                              {"defenses", {"st", "beat"}},
                              {"beat", {{"iterations", 20}, {"heads", 3}}},
                              {"evaluate", {"st", "beat"}},
                              {"attacks",
                               {{{"kind", "iter-l2"}, {"iterations", 100}},
                                {{"kind", "linf-per-joint"}, {"iterations", 20}},
                                {{"kind", "decision"}, {"iterations", 50}},
                                {{"kind", "eot-l2"}, {"iterations", 30}, {"eot_draws", 2}}}},
                              {"eval_samples", 40},
                              {"gradient_samples", 20}};
  std::ofstream(config) << doc.dump(2) << "\n";

  std::string files[2][2];
  std::string failure;
  for (int run = 0; run < 2 && failure.empty(); ++run) {
    const fs::path out = work / ("run" + std::to_string(run));
    fs::remove_all(out);
    const fs::path log = work / ("run" + std::to_string(run) + ".log");
    fs::remove(log);
    for (const char* sub : {"generate", "train", "evaluate"})
      if (run_cli(cli, sub, config, out, log) != 0) {
        failure = fmt::format("'{}' failed in run {} (see {})", sub, run, log.string());
        break;
      }
    if (failure.empty()) {
      files[run][0] = read_text_file(out / "metrics.csv");
      files[run][1] = read_text_file(out / "comparison.csv");
    }
  }
  const bool same = failure.empty() && files[0][0] == files[1][0] && files[0][1] == files[1][1] && !files[0][0].empty();
  report(11, "pipeline reproducibility", same,
         failure.empty() ? fmt::format("two generate -> train -> evaluate runs with seed 7: metrics.csv ({} bytes) and "
                                       "comparison.csv ({} bytes) byte-identical: {}",
                                       files[0][0].size(), files[0][1].size(), same ? "yes" : "no")
                         : failure,
         seconds_since(t0));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string work = "acceptance-work";
  std::string cli;
  app.add_option("--work-dir", work, "scratch directory for the pipeline run");
  app.add_option("--cli", cli, "path to the beat command-line tool")->required();
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::info);

  const SynthDataset data = synth_generate(SynthConfig{}, 1);
  StandardTrainConfig st;
  st.seed = 1;
  const BaseClassifier base = train_standard(BaseArch{}, data.train, st);

  criterion_autodiff();
  criterion_distance();
  criterion_sgld();
  criterion_sgahmc();
  criterion_skip(data, base);
  criteria_experiment();
  criterion_budgets(data);
  criterion_perceptual(data);
  criterion_reproducibility(cli, work);

  std::sort(g_outcomes.begin(), g_outcomes.end(), [](const Outcome& a, const Outcome& b) { return a.id < b.id; });
  std::size_t failed = 0;
  for (const auto& o : g_outcomes) failed += o.pass ? 0 : 1;
  std::printf("%zu of %zu criteria passed\n", g_outcomes.size() - failed, g_outcomes.size());
  return failed == 0 ? 0 : 1;
}
