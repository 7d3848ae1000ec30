#include "beat/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <thread>

#include <spdlog/spdlog.h>

#include "beat/error.hpp"

namespace beat {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over a stream-offset state.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

using BatchTransform =
    std::function<Tensor(const BaseClassifier& model, const Tensor& inputs, const std::vector<int>& labels)>;

void sgd_epochs(BaseClassifier& model, const Dataset& dataset, const StandardTrainConfig& cfg,
                std::mt19937_64& rng, const BatchTransform& transform, TrainingTrace* trace) {
  if (dataset.empty()) throw ConfigError("training requires a non-empty dataset");
  if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const Motion*> motions;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        motions.push_back(&dataset.samples[order[i]].motion);
        labels.push_back(dataset.samples[order[i]].label);
      }
      Tensor inputs = stack_inputs(motions);
      if (transform) inputs = transform(model, inputs, labels);

      ad::Graph g;
      std::vector<ad::Var> params;
      ad::Var loss = ad::mean(ad::softmax_ce(model.forward(g, g.constant(std::move(inputs)), true, &params), labels));
      g.backward(loss);
      auto& blocks = model.params().blocks();
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        const Tensor& grad = g.grad(params[b]);
        auto& values = blocks[b].value.values();
        for (std::size_t i = 0; i < values.size(); ++i) values[i] -= cfg.learning_rate * grad[i];
      }
      loss_sum += loss.value()[0];
      ++batches;
    }
    if (trace) trace->epoch_loss.push_back(loss_sum / static_cast<double>(batches));
    spdlog::debug("epoch {} loss {:.6f}", epoch, loss_sum / static_cast<double>(batches));
  }
}

void check_arch(const BaseArch& arch, const Dataset& dataset) {
  if (arch.classes != dataset.class_count || arch.frames != dataset.frames ||
      arch.joints != dataset.topology->joint_count())
    throw ArchitectureError("architecture " + arch.to_json().dump() + " does not fit the dataset (C=" +
                            std::to_string(dataset.class_count) + ", M=" + std::to_string(dataset.frames) +
                            ", J=" + std::to_string(dataset.topology->joint_count()) + ")");
}

}  // namespace

BaseClassifier train_standard(const BaseArch& arch, const Dataset& dataset, const StandardTrainConfig& cfg,
                              TrainingTrace* trace) {
  if (dataset.empty()) throw ConfigError("train_standard: dataset is empty");
  check_arch(arch, dataset);
  BaseClassifier model = BaseClassifier::init(arch, derive_seed(cfg.seed, 0));
  std::mt19937_64 rng(derive_seed(cfg.seed, 1));
  sgd_epochs(model, dataset, cfg, rng, nullptr, trace);
  return model;
}

BaseClassifier train_at(const BaseArch& arch, const Dataset& dataset, const AtConfig& cfg, TrainingTrace* trace) {
  if (dataset.empty()) throw ConfigError("train_at: dataset is empty");
  if (!(cfg.epsilon >= 0.0)) throw ConfigError("train_at: epsilon must be non-negative");
  check_arch(arch, dataset);
  BaseClassifier model = BaseClassifier::init(arch, derive_seed(cfg.outer.seed, 0));
  std::mt19937_64 rng(derive_seed(cfg.outer.seed, 1));
  BatchTransform pgd = [&cfg](const BaseClassifier& m, const Tensor& clean, const std::vector<int>& labels) {
    if (cfg.epsilon == 0.0 || cfg.inner_iterations == 0) return clean;
    Tensor adv = clean;
    for (std::size_t it = 0; it < cfg.inner_iterations; ++it) {
      ad::Graph g;
      ad::Var x = g.parameter(adv);
      g.backward(ad::sum(ad::softmax_ce(m.forward(g, x), labels)));
      const Tensor& grad = g.grad(x);
      for (std::size_t i = 0; i < adv.size(); ++i) {
        const double s = grad[i] > 0.0 ? 1.0 : (grad[i] < 0.0 ? -1.0 : 0.0);
        const double moved = adv[i] + cfg.inner_step * s;
        adv[i] = clean[i] + std::clamp(moved - clean[i], -cfg.epsilon, cfg.epsilon);
      }
    }
    return adv;
  };
  sgd_epochs(model, dataset, cfg.outer, rng, pgd, trace);
  return model;
}

// ----- randomized smoothing ----------------------------------------------

Motion smooth_draw(const Motion& motion, double delta, std::mt19937_64& rng) {
  Motion noisy = motion;
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (double& v : noisy.positions().values()) v += delta * gauss(rng);
  return temporal_gaussian_filter(noisy);
}

BaseClassifier train_rs(const BaseClassifier& base, const Dataset& dataset, const RsConfig& cfg,
                        const StandardTrainConfig& optimizer) {
  if (!(cfg.delta >= 0.0)) throw ConfigError("rs: delta must be non-negative");
  if (cfg.draws == 0) throw ConfigError("rs: draws must be at least 1");
  BaseClassifier model = base;
  if (!cfg.train_with_noise || cfg.train_epochs == 0) return model;
  check_arch(model.arch(), dataset);
  StandardTrainConfig opt = optimizer;
  opt.epochs = cfg.train_epochs;
  std::mt19937_64 rng(derive_seed(cfg.seed, 11));
  const Shape motion_shape{model.arch().frames, model.arch().joints, 3};
  auto topo = dataset.topology;
  BatchTransform noisy = [&](const BaseClassifier&, const Tensor& clean, const std::vector<int>&) {
    Tensor out = clean;
    const std::size_t dim = clean.dim(1);
    for (std::size_t r = 0; r < clean.dim(0); ++r) {
      Motion m(topo, Tensor(motion_shape, std::vector<double>(&clean[r * dim], &clean[r * dim] + dim)));
      const Motion s = smooth_draw(m, cfg.delta, rng);
      std::copy(s.positions().values().begin(), s.positions().values().end(), &out[r * dim]);
    }
    return out;
  };
  sgd_epochs(model, dataset, opt, rng, noisy, nullptr);
  return model;
}

std::vector<double> predict_rs(const Classifier& model, const Motion& motion, const RsConfig& cfg,
                               std::mt19937_64& rng) {
  if (!(cfg.delta >= 0.0)) throw ConfigError("rs: delta must be non-negative");
  if (cfg.draws == 0) throw ConfigError("rs: draws must be at least 1");
  if (cfg.delta == 0.0) return model.predict_proba(motion);
  std::vector<double> avg(model.class_count(), 0.0);
  for (std::size_t d = 0; d < cfg.draws; ++d) {
    const auto p = model.predict_proba(smooth_draw(motion, cfg.delta, rng));
    for (std::size_t c = 0; c < avg.size(); ++c) avg[c] += p[c];
  }
  for (double& v : avg) v /= static_cast<double>(cfg.draws);
  return avg;
}

std::vector<double> SmoothedClassifier::predict_proba(const Motion& motion) const {
  std::mt19937_64 rng(derive_seed(cfg_.seed, 12));
  return predict_rs(base_, motion, cfg_, rng);
}

Tensor SmoothedClassifier::loss_input_gradient(const Motion& motion, int label) const {
  if (cfg_.delta == 0.0) return base_.loss_input_gradient(motion, label);
  // Noise is additive and the filter is linear, so the gradient with respect
  // to the clean input is the filter's adjoint applied to each draw's gradient.
  // The 5-tap kernel is symmetric but the boundary reflection is not
  // self-adjoint, so the adjoint is accumulated explicitly.
  std::mt19937_64 rng(derive_seed(cfg_.seed, 12));
  const auto w = temporal_gaussian_kernel();
  const std::size_t M = motion.frames(), stride = motion.joints() * 3;
  auto reflect = [M](long i) {
    const long n = static_cast<long>(M);
    if (i < 0) return static_cast<std::size_t>(-i - 1);
    if (i >= n) return static_cast<std::size_t>(2 * n - i - 1);
    return static_cast<std::size_t>(i);
  };
  Tensor total(motion.positions().shape(), 0.0);
  for (std::size_t d = 0; d < cfg_.draws; ++d) {
    const Motion draw = smooth_draw(motion, cfg_.delta, rng);
    const Tensor g = base_.loss_input_gradient(draw, label);
    for (std::size_t m = 0; m < M; ++m)
      for (int k = -2; k <= 2; ++k) {
        const std::size_t src = reflect(static_cast<long>(m) + k);
        for (std::size_t i = 0; i < stride; ++i) total[src * stride + i] += w[k + 2] * g[m * stride + i];
      }
  }
  for (double& v : total.values()) v /= static_cast<double>(cfg_.draws);
  return total;
}

// ----- BEAT --------------------------------------------------------------

BeatTrainerConfig BeatTrainerConfig::blackbox_preset() {
  BeatTrainerConfig cfg;
  cfg.w1 = 1.0;
  cfg.w2 = 0.1;
  cfg.w3 = 1.0;
  cfg.budget = 0.5;
  cfg.sgahmc.step = 0.02;
  cfg.negative_steps = 2;
  cfg.adversary_steps = 2;
  return cfg;
}

void BeatTrainerConfig::validate() const {
  if (heads == 0) throw ConfigError("beat: at least one head is required");
  if (w1 < 0.0 || w2 < 0.0 || w3 < 0.0) throw ConfigError("beat: gradient weights must be non-negative");
  if (batch_positive == 0 || batch_negative == 0) throw ConfigError("beat: batch sizes must be positive");
  if (!(budget >= 0.0)) throw ConfigError("beat: budget must be non-negative");
  if (!(lambda >= 0.0)) throw ConfigError("beat: lambda must be non-negative");
  if (!(sgld.step >= 0.0) || !(sgld.noise_std >= 0.0)) throw ConfigError("beat: invalid SGLD settings");
  if (!(pcd_reinit >= 0.0 && pcd_reinit <= 1.0)) throw ConfigError("beat: pcd_reinit outside [0,1]");
  if (pcd_capacity == 0) throw ConfigError("beat: pcd_capacity must be positive");
}

namespace {

std::vector<double> flat_grads(const ad::Graph& g, const std::vector<ad::Var>& vars) {
  std::vector<double> out;
  for (const auto& v : vars) {
    const auto& t = g.grad(v).values();
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

AppendedHead train_one_head(const BaseClassifier& base, const Dataset& dataset, const BeatTrainerConfig& cfg,
                            std::size_t head_index, std::vector<double>* losses) {
  std::mt19937_64 rng(derive_seed(cfg.seed, 1000 + head_index));
  const std::size_t C = base.class_count();
  AppendedHead head = AppendedHead::init(C, cfg.head_init_std, rng);
  PcdBuffer buffer(base.arch().input_dim(), cfg.pcd_capacity, cfg.pcd_reinit, rng);
  SgahmcState sampler(head.params().scalar_count(), cfg.sgahmc);

  SgldConfig negative_sgld = cfg.sgld;
  negative_sgld.steps = cfg.negative_steps;
  AdversaryConfig adv_cfg;
  adv_cfg.sgld = cfg.sgld;
  adv_cfg.sgld.steps = cfg.adversary_steps;
  adv_cfg.distance.lambda = cfg.lambda;
  adv_cfg.budget = cfg.budget;
  adv_cfg.steps = cfg.adversary_steps;

  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    std::vector<const Motion*> batch;
    std::vector<int> labels;
    for (std::size_t i = 0; i < cfg.batch_positive; ++i) {
      const auto& s = dataset.samples[pick(rng)];
      batch.push_back(&s.motion);
      labels.push_back(s.label);
    }
    const LogitModel member(base, &head);
    const Tensor z_pos = base.logits_batch(stack_inputs(batch));
    Tensor z_neg({1, C}, 0.0);
    if (cfg.w2 > 0.0)
      z_neg = base.logits_batch(sample_negatives(member, buffer, cfg.batch_negative, cfg.negative_steps,
                                                 negative_sgld, rng));
    Tensor z_adv({1, C}, 0.0);
    if (cfg.w3 > 0.0) z_adv = base.logits_batch(sample_adversaries(member, batch, labels, adv_cfg, rng));

    double last_loss = 0.0;
    for (std::size_t t = 0; t < cfg.sgahmc.steps; ++t) {
      ad::Graph g;
      std::vector<ad::Var> params;
      ad::Var pos = head.member_logits(g, g.constant(z_pos), true, &params);
      // h1: cross-entropy on the clean minibatch.
      ad::Var loss = ad::scale(ad::mean(ad::softmax_ce(pos, labels)), cfg.w1);
      if (cfg.w2 > 0.0) {
        // h2: negated gradient of mean U(positives) - mean U(negatives).
        ad::Var neg = AppendedHead::member_logits_with(g.constant(z_neg), params);
        ad::Var contrast = ad::sub(ad::mean(ad::row_mean(neg)), ad::mean(ad::row_mean(pos)));
        loss = ad::add(loss, ad::scale(contrast, cfg.w2));
      }
      if (cfg.w3 > 0.0) {
        // h3: negated gradient of g(x~)[y] - lambda d(x, x~); d does not depend on the head.
        ad::Var adv_logits = AppendedHead::member_logits_with(g.constant(z_adv), params);
        loss = ad::add(loss, ad::scale(ad::mean(ad::select(adv_logits, labels)), -cfg.w3));
      }
      g.backward(loss);
      last_loss = loss.value()[0];
      std::vector<double> theta = head.params().flatten();
      sampler.step(theta, flat_grads(g, params), rng);
      head.params().assign_flat(theta);
    }
    if (losses) losses->push_back(last_loss);
  }
  return head;
}

}  // namespace

BeatEnsemble train_beat(const BaseClassifier& base, const Dataset& dataset, const BeatTrainerConfig& cfg,
                        BeatTrace* trace) {
  cfg.validate();
  if (dataset.empty()) throw ConfigError("train_beat: dataset is empty");
  check_arch(base.arch(), dataset);
  const std::string before = base.digest();

  std::vector<std::optional<AppendedHead>> heads(cfg.heads);
  std::vector<std::vector<double>> losses(cfg.heads);
  auto run = [&](std::size_t n) {
    heads[n].emplace(train_one_head(base, dataset, cfg, n, trace ? &losses[n] : nullptr));
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(cfg.threads, cfg.heads));
  if (threads == 1) {
    for (std::size_t n = 0; n < cfg.heads; ++n) run(n);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w)
      pool.emplace_back([&, w] {
        try {
          for (std::size_t n = w; n < cfg.heads; n += threads) run(n);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  if (base.digest() != before)
    throw DigestError("frozen-base violation: base parameters changed during BEAT training");
  std::vector<AppendedHead> out;
  for (auto& h : heads) out.push_back(std::move(*h));
  if (trace) trace->head_loss = std::move(losses);
  BeatEnsemble ensemble(base, std::move(out));
  if (ensemble.base_digest() != before) throw DigestError("frozen-base violation: ensemble base digest differs");
  return ensemble;
}

}  // namespace beat
