#include "beat/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

#include <spdlog/fmt/fmt.h>

#include "beat/error.hpp"
#include "beat/trainers.hpp"

namespace beat {

double accuracy(const Classifier& model, const Dataset& dataset) {
  if (dataset.empty()) throw ConfigError("accuracy: dataset is empty");
  return 100.0 * static_cast<double>(correctly_classified(model, dataset).size()) /
         static_cast<double>(dataset.size());
}

std::vector<std::size_t> correctly_classified(const Classifier& model, const Dataset& dataset) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    if (model.predict(dataset.samples[i].motion) == dataset.samples[i].label) out.push_back(i);
  return out;
}

namespace {

double bone_angle(const Motion& x, const Bone& b, std::size_t m) {
  double u[3], v[3];
  for (std::size_t a = 0; a < 3; ++a) {
    u[a] = x.at(m, b.child, a) - x.at(m, b.parent, a);
    v[a] = x.at(m + 1, b.child, a) - x.at(m + 1, b.parent, a);
  }
  const double cx = u[1] * v[2] - u[2] * v[1], cy = u[2] * v[0] - u[0] * v[2], cz = u[0] * v[1] - u[1] * v[0];
  return std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), u[0] * v[0] + u[1] * v[1] + u[2] * v[2]);
}

}  // namespace

PerceptualMetrics perceptual_metrics(const Motion& x, const Motion& x_adv) {
  if (!x.compatible(x_adv)) throw ShapeError("perceptual_metrics: motions do not share topology and shape");
  const std::size_t M = x.frames(), J = x.joints();
  if (M < 4) throw ShapeError("perceptual_metrics: need at least 4 frames, got " + std::to_string(M));
  PerceptualMetrics out;

  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t j = 0; j < J; ++j) {
      double s = 0.0;
      for (std::size_t a = 0; a < 3; ++a) {
        const double d = x_adv.at(m, j, a) - x.at(m, j, a);
        s += d * d;
      }
      out.l += std::sqrt(s);
    }
  out.l /= static_cast<double>(M * J);

  for (std::size_t m = 0; m + 2 < M; ++m)
    for (std::size_t j = 0; j < J; ++j) {
      double s = 0.0;
      for (std::size_t a = 0; a < 3; ++a) {
        const double ax = x.at(m + 2, j, a) - 2.0 * x.at(m + 1, j, a) + x.at(m, j, a);
        const double aa = x_adv.at(m + 2, j, a) - 2.0 * x_adv.at(m + 1, j, a) + x_adv.at(m, j, a);
        s += (aa - ax) * (aa - ax);
      }
      out.accel += std::sqrt(s);
    }
  out.accel /= static_cast<double>((M - 2) * J);

  const auto& bones = x.topology().bones();
  if (!bones.empty()) {
    // Angle sequences have M-1 entries, their second differences M-3.
    std::vector<double> tx(M - 1), ta(M - 1);
    for (const Bone& b : bones) {
      for (std::size_t m = 0; m + 1 < M; ++m) {
        tx[m] = bone_angle(x, b, m);
        ta[m] = bone_angle(x_adv, b, m);
      }
      for (std::size_t m = 0; m + 2 < M - 1; ++m)
        out.angular_accel += std::abs((ta[m + 2] - 2.0 * ta[m + 1] + ta[m]) - (tx[m + 2] - 2.0 * tx[m + 1] + tx[m]));
    }
    out.angular_accel /= static_cast<double>((M - 3) * bones.size());

    const Tensor bx = bone_lengths(x), ba = bone_lengths(x_adv);
    for (std::size_t i = 0; i < bx.size(); ++i) {
      if (bx[i] == 0.0) throw NumericError("perceptual_metrics: zero-length bone in the reference motion");
      out.bone_violation += std::abs(ba[i] - bx[i]) / bx[i];
    }
    out.bone_violation = 100.0 * out.bone_violation / static_cast<double>(bx.size());
  }
  return out;
}

std::vector<AttackOutcome> run_attacks(const Classifier& model, const Dataset& dataset, const AttackConfig& cfg,
                                       const Dataset* pool, std::size_t threads) {
  cfg.validate();
  const auto correct = correctly_classified(model, dataset);
  if (correct.empty()) throw ConfigError("attack evaluation: no correctly classified samples");
  std::vector<std::optional<AttackOutcome>> slots(correct.size());
  auto work = [&](std::size_t k) {
    const std::size_t i = correct[k];
    std::mt19937_64 rng(derive_seed(cfg.seed, i));
    slots[k].emplace(AttackOutcome{i, run_attack(model, dataset.samples[i].motion, dataset.samples[i].label, cfg,
                                                 rng, pool)});
  };
  threads = std::max<std::size_t>(1, std::min(threads, correct.size()));
  if (threads == 1) {
    for (std::size_t k = 0; k < correct.size(); ++k) work(k);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool_threads;
    for (std::size_t w = 0; w < threads; ++w)
      pool_threads.emplace_back([&, w] {
        try {
          for (std::size_t k = w; k < correct.size(); k += threads) work(k);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& t : pool_threads) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  std::vector<AttackOutcome> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

double attack_success_rate(const Classifier& model, const Dataset& dataset, const AttackConfig& cfg,
                           const Dataset* pool, std::size_t threads) {
  const auto outcomes = run_attacks(model, dataset, cfg, pool, threads);
  std::size_t hits = 0;
  for (const auto& o : outcomes) hits += o.result.success ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

MetricsReport summarize(const std::string& model_name, const Classifier& model, const Dataset& dataset,
                        const AttackConfig& cfg, const std::vector<AttackOutcome>& outcomes,
                        const MetricThresholds& thresholds) {
  MetricsReport r;
  r.model = model_name;
  r.attack = to_string(cfg.kind);
  r.clean_accuracy = accuracy(model, dataset);
  r.thresholds = thresholds;
  r.evaluated = outcomes.size();
  std::size_t l_hits = 0, b_hits = 0;
  for (const auto& o : outcomes) {
    if (!o.result.success) continue;
    ++r.successes;
    const PerceptualMetrics p = perceptual_metrics(dataset.samples[o.index].motion, o.result.adversarial);
    r.mean.l += p.l;
    r.mean.accel += p.accel;
    r.mean.angular_accel += p.angular_accel;
    r.mean.bone_violation += p.bone_violation;
    r.max.l = std::max(r.max.l, p.l);
    r.max.accel = std::max(r.max.accel, p.accel);
    r.max.angular_accel = std::max(r.max.angular_accel, p.angular_accel);
    r.max.bone_violation = std::max(r.max.bone_violation, p.bone_violation);
    if (p.l >= thresholds.a1) ++l_hits;
    if (p.bone_violation >= thresholds.a2) ++b_hits;
  }
  if (r.evaluated > 0) r.asr = 100.0 * static_cast<double>(r.successes) / static_cast<double>(r.evaluated);
  if (r.successes > 0) {
    const double n = static_cast<double>(r.successes);
    r.mean.l /= n;
    r.mean.accel /= n;
    r.mean.angular_accel /= n;
    r.mean.bone_violation /= n;
    r.pct_l_ge_a1 = 100.0 * static_cast<double>(l_hits) / n;
    r.pct_bone_ge_a2 = 100.0 * static_cast<double>(b_hits) / n;
  }
  return r;
}

GradientAnalysis gradient_analysis(const Classifier& model, const Dataset& dataset, std::size_t sample_count,
                                   std::uint64_t seed, double threshold) {
  if (dataset.empty()) throw ConfigError("gradient_analysis: dataset is empty");
  if (sample_count == 0) throw ConfigError("gradient_analysis: sample count must be positive");
  GradientAnalysis out;
  out.threshold = threshold;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
  std::uniform_int_distribution<std::size_t> frame(0, dataset.frames - 1);
  for (std::size_t s = 0; s < sample_count; ++s) {
    const auto& sample = dataset.samples[pick(rng)];
    const std::size_t m = frame(rng);
    const Tensor g = model.loss_input_gradient(sample.motion, sample.label);
    const std::size_t stride = sample.motion.joints() * 3;
    out.components.insert(out.components.end(), g.values().begin() + static_cast<std::ptrdiff_t>(m * stride),
                          g.values().begin() + static_cast<std::ptrdiff_t>((m + 1) * stride));
  }
  std::vector<double> mags(out.components.size());
  std::size_t below = 0;
  for (std::size_t i = 0; i < mags.size(); ++i) {
    mags[i] = std::abs(out.components[i]);
    below += mags[i] < threshold ? 1 : 0;
  }
  out.fraction_below = static_cast<double>(below) / static_cast<double>(mags.size());
  const std::size_t mid = mags.size() / 2;
  std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(mid), mags.end());
  out.median_abs = mags[mid];
  if (mags.size() % 2 == 0) {
    const double lower = *std::max_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(mid));
    out.median_abs = 0.5 * (out.median_abs + lower);
  }
  return out;
}

nlohmann::json GradientAnalysis::summary_json() const {
  return {{"threshold", threshold},
          {"components", components.size()},
          {"fraction_below", fraction_below},
          {"median_abs", median_abs}};
}

namespace {

nlohmann::json perceptual_json(const PerceptualMetrics& p) {
  return {{"l", p.l}, {"accel", p.accel}, {"angular_accel", p.angular_accel}, {"bone_violation_pct", p.bone_violation}};
}

// Shortest round-trip text, identical to the JSON output.
std::string num(double v) { return nlohmann::json(v).dump(); }

}  // namespace

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json doc{{"model", model},
                     {"attack", attack},
                     {"clean_accuracy", clean_accuracy},
                     {"evaluated", evaluated},
                     {"successes", successes},
                     {"asr", asr},
                     {"mean", perceptual_json(mean)},
                     {"max", perceptual_json(max)},
                     {"thresholds", {{"a1", thresholds.a1}, {"a2_pct", thresholds.a2}}},
                     {"pct_l_ge_a1", pct_l_ge_a1},
                     {"pct_bone_ge_a2", pct_bone_ge_a2}};
  if (gradients) doc["gradients"] = gradients->summary_json();
  return doc;
}

std::string MetricsReport::csv_header() {
  return "schema,model,attack,clean_accuracy,evaluated,successes,asr,mean_l,mean_accel,mean_angular_accel,"
         "mean_bone_pct,max_l,max_accel,max_angular_accel,max_bone_pct,a1,a2_pct,pct_l_ge_a1,pct_bone_ge_a2,"
         "grad_fraction_below,grad_median_abs";
}

std::string MetricsReport::csv_row() const {
  std::string row = fmt::format("{},{},{},{},{},{},{}", kMetricsCsvSchema, model, attack, num(clean_accuracy),
                                evaluated, successes, num(asr));
  for (const PerceptualMetrics* p : {&mean, &max})
    row += "," + num(p->l) + "," + num(p->accel) + "," + num(p->angular_accel) + "," + num(p->bone_violation);
  row += "," + num(thresholds.a1) + "," + num(thresholds.a2) + "," + num(pct_l_ge_a1) + "," + num(pct_bone_ge_a2);
  row += gradients ? "," + num(gradients->fraction_below) + "," + num(gradients->median_abs) : ",,";
  return row;
}

}  // namespace beat
