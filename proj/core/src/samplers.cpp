#include "beat/samplers.hpp"

#include <algorithm>
#include <cmath>

#include "beat/error.hpp"

namespace beat {

namespace {

void clamp_rows(Tensor& t, std::size_t row, std::size_t dim, std::mt19937_64& rng, double init_range) {
  std::uniform_real_distribution<double> u(-init_range, init_range);
  bool finite = true;
  for (std::size_t i = 0; i < dim; ++i) finite = finite && std::isfinite(t[row * dim + i]);
  for (std::size_t i = 0; i < dim; ++i) {
    double& v = t[row * dim + i];
    v = finite ? std::clamp(v, -kMotionClamp, kMotionClamp) : u(rng);
  }
}

void check_sgld(const SgldConfig& cfg) {
  if (!(cfg.step >= 0.0) || !(cfg.noise_std >= 0.0))
    throw ConfigError("sgld: step and noise_std must be non-negative");
}

}  // namespace

Tensor sgld_step(const Tensor& point, const GradientFn& grad_log_density, const SgldConfig& cfg,
                 std::mt19937_64& rng) {
  check_sgld(cfg);
  const Tensor grad = grad_log_density(point);
  if (grad.shape() != point.shape())
    throw ShapeError("sgld: gradient shape " + shape_str(grad.shape()) + " differs from point " +
                     shape_str(point.shape()));
  if (!grad.all_finite()) throw NumericError("sgld: non-finite gradient");
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double drift = 0.5 * cfg.step * cfg.step;
  const double noise = cfg.step * cfg.noise_std;
  Tensor out = point;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double e = gauss(rng);
    out[i] += drift * grad[i] + noise * e;
  }
  return out;
}

// ----- PCD ---------------------------------------------------------------

PcdBuffer::PcdBuffer(std::size_t input_dim, std::size_t capacity, double reinit_prob, std::mt19937_64& rng,
                     double init_range)
    : items_({capacity, input_dim}, 0.0), reinit_prob_(reinit_prob), init_range_(init_range) {
  if (capacity == 0) throw ConfigError("pcd buffer: capacity must be positive");
  if (!(reinit_prob >= 0.0 && reinit_prob <= 1.0)) throw ConfigError("pcd buffer: reinit probability outside [0,1]");
  std::uniform_real_distribution<double> u(-init_range, init_range);
  for (double& v : items_.values()) v = u(rng);
}

Tensor sample_negatives(const LogitModel& model, PcdBuffer& buffer, std::size_t batch, std::size_t steps,
                        const SgldConfig& cfg, std::mt19937_64& rng) {
  if (batch == 0) throw ConfigError("sample_negatives: batch must be positive");
  const std::size_t dim = buffer.input_dim();
  std::uniform_int_distribution<std::size_t> pick(0, buffer.capacity() - 1);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_real_distribution<double> u(-buffer.init_range(), buffer.init_range());

  std::vector<std::size_t> slots(batch);
  Tensor chains({batch, dim}, 0.0);
  for (std::size_t r = 0; r < batch; ++r) {
    slots[r] = pick(rng);
    const bool fresh = coin(rng) < buffer.reinit_prob();
    for (std::size_t i = 0; i < dim; ++i)
      chains[r * dim + i] = fresh ? u(rng) : buffer.items()[slots[r] * dim + i];
  }
  auto grad = [&model](const Tensor& x) { return grad_log_px_batch(model, x); };
  for (std::size_t t = 0; t < steps; ++t) {
    chains = sgld_step(chains, grad, cfg, rng);
    for (std::size_t r = 0; r < batch; ++r) clamp_rows(chains, r, dim, rng, buffer.init_range());
  }
  for (std::size_t r = 0; r < batch; ++r)
    std::copy_n(&chains[r * dim], dim, &buffer.items()[slots[r] * dim]);
  return chains;
}

// ----- adversaries -------------------------------------------------------

Tensor sample_adversaries(const LogitModel& model, const std::vector<const Motion*>& clean,
                          const std::vector<int>& labels, const AdversaryConfig& cfg, std::mt19937_64& rng) {
  if (clean.size() != labels.size()) throw ShapeError("sample_adversaries: motions and labels differ in length");
  if (!(cfg.budget >= 0.0)) throw ConfigError("sample_adversaries: budget must be non-negative");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= model.classes())
      throw ConfigError("sample_adversaries: label " + std::to_string(y) + " out of range");
  const Tensor x = stack_inputs(clean);
  const std::size_t B = x.dim(0), dim = x.dim(1);
  Tensor adv = x;
  if (cfg.budget > 0.0) {
    std::uniform_real_distribution<double> u(-cfg.budget, cfg.budget);
    for (double& v : adv.values()) v += u(rng);
  }
  const Shape motion_shape = clean.front()->positions().shape();
  auto grad = [&](const Tensor& cur) {
    Tensor g = grad_class_logit_batch(model, cur, labels);
    if (cfg.distance.lambda != 0.0) {
      for (std::size_t r = 0; r < B; ++r) {
        Motion candidate(clean[r]->topology_ptr(),
                         Tensor(motion_shape, std::vector<double>(&cur[r * dim], &cur[r * dim] + dim)));
        const Tensor dd = manifold_distance_grad(*clean[r], candidate);
        for (std::size_t i = 0; i < dim; ++i) g[r * dim + i] -= cfg.distance.lambda * dd[i];
      }
    }
    return g;
  };
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    adv = sgld_step(adv, grad, cfg.sgld, rng);
    for (std::size_t r = 0; r < B; ++r) clamp_rows(adv, r, dim, rng, 1.0);
  }
  return adv;
}

Motion sample_adversary(const LogitModel& model, const Motion& x, int label, const AdversaryConfig& cfg,
                        std::mt19937_64& rng) {
  Tensor rows = sample_adversaries(model, {&x}, {label}, cfg, rng);
  return Motion(x.topology_ptr(), rows.reshaped(x.positions().shape()));
}

// ----- SG-AHMC -----------------------------------------------------------

SgahmcState::SgahmcState(std::size_t dim, SgahmcConfig cfg)
    : cfg_(cfg), c_(dim, 1.0), g_avg_(dim, 0.0), tau_(dim, 1.0) {
  if (!(cfg_.friction >= 0.0)) throw ConfigError("sgahmc: friction must be non-negative");
  if (!(cfg_.step > 0.0)) throw ConfigError("sgahmc: step must be positive");
  if (!(cfg_.c_floor > 0.0)) throw ConfigError("sgahmc: preconditioner floor must be positive");
}

void SgahmcState::step(std::vector<double>& theta, const std::vector<double>& h, std::mt19937_64& rng) {
  if (theta.size() != c_.size() || h.size() != c_.size())
    throw ShapeError("sgahmc: parameter/gradient size does not match state (" + std::to_string(c_.size()) + ")");
  for (double v : h)
    if (!std::isfinite(v)) throw NumericError("sgahmc: non-finite gradient");
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double s = cfg_.step;
  const double s2 = s * s, s3 = s2 * s, s4 = s2 * s2;
  const bool adapt = t_ < cfg_.burn_in;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double e = gauss(rng);
    theta[i] -= s2 * h[i] / std::sqrt(c_[i]);
    const double var = 2.0 * cfg_.friction * s3 / c_[i] - s4;
    if (var > 0.0) theta[i] += std::sqrt(var) * e;

    const double r = 1.0 / tau_[i];
    g_avg_[i] += r * (h[i] - g_avg_[i]);
    c_[i] = std::max(cfg_.c_floor, (1.0 - r) * c_[i] + r * h[i] * h[i]);
    if (adapt) tau_[i] = std::max(1.0, tau_[i] * (1.0 - g_avg_[i] * g_avg_[i] / c_[i]) + 1.0);
  }
  ++t_;
}

}  // namespace beat
