#include "beat/energy.hpp"

#include <cmath>

#include "beat/error.hpp"

namespace beat {

namespace {

void require_pair(const Motion& x, const Motion& x_adv) {
  if (!x.compatible(x_adv))
    throw ShapeError("manifold distance: motions differ in topology or frame count (" +
                     std::to_string(x.frames()) + " vs " + std::to_string(x_adv.frames()) + " frames)");
}

}  // namespace

double manifold_distance(const Motion& x, const Motion& x_adv) {
  require_pair(x, x_adv);
  const std::size_t M = x.frames(), J = x.joints(), B = x.topology().bone_count();
  double d = 0.0;
  if (B > 0) {
    const Tensor bl = bone_lengths(x), bl_adv = bone_lengths(x_adv);
    double s = 0.0;
    for (std::size_t i = 0; i < bl.size(); ++i) s += (bl[i] - bl_adv[i]) * (bl[i] - bl_adv[i]);
    d += s / static_cast<double>(M * B);
  }
  for (int k = 0; k <= 2; ++k) {
    if (M < static_cast<std::size_t>(k) + 1) break;
    const Tensor q = derivative(x, k), q_adv = derivative(x_adv, k);
    double s = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) s += (q[i] - q_adv[i]) * (q[i] - q_adv[i]);
    d += s / static_cast<double>((M - static_cast<std::size_t>(k)) * J);
  }
  return d;
}

Tensor manifold_distance_grad(const Motion& x, const Motion& x_adv) {
  require_pair(x, x_adv);
  const std::size_t M = x.frames(), J = x.joints(), B = x.topology().bone_count();
  const std::size_t stride = J * 3;
  Tensor grad(x.positions().shape(), 0.0);

  if (B > 0) {
    const Tensor bl = bone_lengths(x), bl_adv = bone_lengths(x_adv);
    const double scale = 2.0 / static_cast<double>(M * B);
    const auto& bones = x.topology().bones();
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t b = 0; b < B; ++b) {
        const double len = bl_adv.at(m, b);
        if (len == 0.0) continue;
        const double coef = scale * (len - bl.at(m, b)) / len;
        for (std::size_t a = 0; a < 3; ++a) {
          const double diff = x_adv.at(m, bones[b].child, a) - x_adv.at(m, bones[b].parent, a);
          grad[m * stride + bones[b].child * 3 + a] += coef * diff;
          grad[m * stride + bones[b].parent * 3 + a] -= coef * diff;
        }
      }
  }

  // For order k, sum |D^k e|^2 has gradient 2 (D^k)^T D^k e with e = x_adv - x.
  std::vector<double> e(x.positions().size());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = x_adv.positions()[i] - x.positions()[i];
  for (int k = 0; k <= 2; ++k) {
    const std::size_t frames_k = M - static_cast<std::size_t>(k);
    if (M < static_cast<std::size_t>(k) + 1) break;
    std::vector<double> cur = e;
    std::size_t frames = M;
    for (int s = 0; s < k; ++s, --frames)
      for (std::size_t m = 0; m + 1 < frames; ++m)
        for (std::size_t i = 0; i < stride; ++i) cur[m * stride + i] = cur[(m + 1) * stride + i] - cur[m * stride + i];
    cur.resize(frames_k * stride);
    // Apply (D^T) k times; D^T maps [F-1] -> [F] with (D^T v)_m = v_{m-1} - v_m.
    for (int s = 0; s < k; ++s, ++frames) {
      std::vector<double> up((frames + 1) * stride, 0.0);
      for (std::size_t m = 0; m < frames; ++m)
        for (std::size_t i = 0; i < stride; ++i) {
          up[(m + 1) * stride + i] += cur[m * stride + i];
          up[m * stride + i] -= cur[m * stride + i];
        }
      cur = std::move(up);
    }
    const double scale = 2.0 / static_cast<double>(frames_k * J);
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += scale * cur[i];
  }
  return grad;
}

// ----- logit model -------------------------------------------------------

LogitModel LogitModel::member(const BeatEnsemble& ensemble, std::size_t i) {
  if (i >= ensemble.size())
    throw ConfigError("member index " + std::to_string(i) + " out of range for " +
                      std::to_string(ensemble.size()) + " heads");
  return LogitModel(ensemble.base(), &ensemble.heads()[i]);
}

ad::Var LogitModel::logits(ad::Graph& g, ad::Var inputs) const {
  ad::Var z = base_->forward(g, inputs);
  return head_ ? head_->member_logits(g, z) : z;
}

std::vector<double> LogitModel::logits(const Motion& motion) const {
  ad::Graph g;
  return logits(g, g.constant(stack_inputs(motion))).value().values();
}

double log_px_unnorm(const LogitModel& model, const Motion& motion) {
  ad::Graph g;
  return ad::logsumexp(model.logits(g, g.constant(stack_inputs(motion)))).value()[0];
}

double logit_mean_U(const LogitModel& model, const Motion& motion) {
  ad::Graph g;
  return ad::row_mean(model.logits(g, g.constant(stack_inputs(motion)))).value()[0];
}

double log_cond_adv(const LogitModel& model, const Motion& x_adv, const Motion& x, int label,
                    const ManifoldDistanceConfig& cfg) {
  if (label < 0 || static_cast<std::size_t>(label) >= model.classes())
    throw ConfigError("label " + std::to_string(label) + " out of range");
  const double logit = model.logits(x_adv)[static_cast<std::size_t>(label)];
  return cfg.lambda == 0.0 ? logit : logit - cfg.lambda * manifold_distance(x, x_adv);
}

Tensor grad_log_px_batch(const LogitModel& model, const Tensor& inputs) {
  ad::Graph g;
  ad::Var x = g.parameter(inputs);
  g.backward(ad::sum(ad::logsumexp(model.logits(g, x))));
  return g.grad(x);
}

Tensor grad_class_logit_batch(const LogitModel& model, const Tensor& inputs, const std::vector<int>& labels) {
  ad::Graph g;
  ad::Var x = g.parameter(inputs);
  g.backward(ad::sum(ad::select(model.logits(g, x), labels)));
  return g.grad(x);
}

Tensor grad_log_px_wrt_input(const LogitModel& model, const Motion& motion) {
  return grad_log_px_batch(model, stack_inputs(motion)).reshaped(motion.positions().shape());
}

Tensor grad_log_cond_adv_wrt_input(const LogitModel& model, const Motion& x_adv, const Motion& x, int label,
                                   const ManifoldDistanceConfig& cfg) {
  Tensor grad = grad_class_logit_batch(model, stack_inputs(x_adv), {label}).reshaped(x_adv.positions().shape());
  if (cfg.lambda != 0.0) {
    const Tensor dd = manifold_distance_grad(x, x_adv);
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] -= cfg.lambda * dd[i];
  }
  return grad;
}

}  // namespace beat
