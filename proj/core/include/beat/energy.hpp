#pragma once

#include "beat/autodiff.hpp"
#include "beat/models.hpp"
#include "beat/skeleton.hpp"

namespace beat {

struct ManifoldDistanceConfig {
  double lambda = 1e-3;
};

// Bone-length plus motion-dynamics discrepancy between a clean motion and a
// candidate adversary:
//   d = 1/(M B) sum_{m,b} (BL(x) - BL(x~))^2
//     + sum_{k=0..2} 1/((M-k) J) sum_{m,j} |q^k(x) - q^k(x~)|^2
// where q^k are forward differences of order k. The bone term is 0 when B = 0.
double manifold_distance(const Motion& x, const Motion& x_adv);
// d(d)/d(x_adv), shape [M,J,3]. A zero-length bone contributes a zero subgradient.
Tensor manifold_distance_grad(const Motion& x, const Motion& x_adv);

// The logit function of one model: the base network alone, or a base plus one
// appended head (member logits z + f(z)).
class LogitModel {
 public:
  explicit LogitModel(const BaseClassifier& base, const AppendedHead* head = nullptr)
      : base_(&base), head_(head) {}
  static LogitModel member(const BeatEnsemble& ensemble, std::size_t i);

  std::size_t classes() const { return base_->class_count(); }
  ad::Var logits(ad::Graph& g, ad::Var inputs) const;
  std::vector<double> logits(const Motion& motion) const;

 private:
  const BaseClassifier* base_;
  const AppendedHead* head_;
};

// log sum_y exp(g(x)[y]); the log-density of x up to log Z.
double log_px_unnorm(const LogitModel& model, const Motion& motion);
// Mean of the C logits.
double logit_mean_U(const LogitModel& model, const Motion& motion);
// g(x~)[y] - lambda d(x, x~), the unnormalized log-density of an adversary.
double log_cond_adv(const LogitModel& model, const Motion& x_adv, const Motion& x, int label,
                    const ManifoldDistanceConfig& cfg);

Tensor grad_log_px_wrt_input(const LogitModel& model, const Motion& motion);
Tensor grad_log_cond_adv_wrt_input(const LogitModel& model, const Motion& x_adv, const Motion& x, int label,
                                   const ManifoldDistanceConfig& cfg);

// Batched forms over row-stacked inputs [B, M*J*3]; each row's gradient is
// the gradient of that row's own quantity.
Tensor grad_log_px_batch(const LogitModel& model, const Tensor& inputs);
Tensor grad_class_logit_batch(const LogitModel& model, const Tensor& inputs, const std::vector<int>& labels);

}  // namespace beat
