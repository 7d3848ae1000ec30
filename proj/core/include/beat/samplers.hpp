#pragma once

#include <functional>
#include <random>
#include <vector>

#include "beat/energy.hpp"

namespace beat {

// Langevin step x + (step^2/2) grad + step * noise_std * N(0, I).
struct SgldConfig {
  double step = 0.01;
  double noise_std = 0.005;
  std::size_t steps = 10;
};

using GradientFn = std::function<Tensor(const Tensor&)>;

Tensor sgld_step(const Tensor& point, const GradientFn& grad_log_density, const SgldConfig& cfg,
                 std::mt19937_64& rng);

// Sampled motions are clamped to this box after every Langevin step.
inline constexpr double kMotionClamp = 5.0;

// Persistent negative chains, stored row-wise as [capacity, M*J*3].
class PcdBuffer {
 public:
  PcdBuffer(std::size_t input_dim, std::size_t capacity, double reinit_prob, std::mt19937_64& rng,
            double init_range = 1.0);

  std::size_t capacity() const noexcept { return items_.dim(0); }
  std::size_t input_dim() const noexcept { return items_.dim(1); }
  double reinit_prob() const noexcept { return reinit_prob_; }
  double init_range() const noexcept { return init_range_; }
  const Tensor& items() const noexcept { return items_; }
  Tensor& items() noexcept { return items_; }

 private:
  Tensor items_;
  double reinit_prob_;
  double init_range_;
};

// Draws `batch` chains from the buffer (or fresh uniform noise with the
// buffer's reinit probability), runs `steps` Langevin steps ascending the
// model's log-sum-exp, writes the chains back and returns them [batch, D].
Tensor sample_negatives(const LogitModel& model, PcdBuffer& buffer, std::size_t batch, std::size_t steps,
                        const SgldConfig& cfg, std::mt19937_64& rng);

struct AdversaryConfig {
  SgldConfig sgld;
  ManifoldDistanceConfig distance;
  double budget = 0.05;  // half-width b of the uniform start perturbation
  std::size_t steps = 10;
};

// x~_0 = x + U(-b, b) per coordinate, then `steps` Langevin steps ascending
// g(x~)[y] - lambda d(x, x~). Returns row-stacked adversaries [B, D].
Tensor sample_adversaries(const LogitModel& model, const std::vector<const Motion*>& clean,
                          const std::vector<int>& labels, const AdversaryConfig& cfg, std::mt19937_64& rng);
Motion sample_adversary(const LogitModel& model, const Motion& x, int label, const AdversaryConfig& cfg,
                        std::mt19937_64& rng);

struct SgahmcConfig {
  double step = 0.01;        // sigma
  double friction = 1e-5;    // F
  std::size_t steps = 30;    // updates per outer iteration
  std::size_t burn_in = 200; // updates during which tau adapts
  double c_floor = 1e-8;
};

// Per-parameter preconditioner and adaptive averaging horizon.
class SgahmcState {
 public:
  SgahmcState(std::size_t dim, SgahmcConfig cfg);

  const SgahmcConfig& config() const noexcept { return cfg_; }
  const std::vector<double>& preconditioner() const noexcept { return c_; }
  const std::vector<double>& horizon() const noexcept { return tau_; }
  std::size_t updates() const noexcept { return t_; }

  // theta <- theta - sigma^2 C^{-1/2} h + N(0, max(0, 2 F sigma^3 / C - sigma^4)),
  // then C <- (1 - 1/tau) C + h^2 / tau. `h` is a loss gradient.
  void step(std::vector<double>& theta, const std::vector<double>& h, std::mt19937_64& rng);

 private:
  SgahmcConfig cfg_;
  std::vector<double> c_;
  std::vector<double> g_avg_;
  std::vector<double> tau_;
  std::size_t t_ = 0;
};

}  // namespace beat
