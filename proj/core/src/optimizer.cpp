#include "progrow/optimizer.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "progrow/errors.hpp"

namespace progrow {

void OptimizerConfig::validate() const {
  const auto fail = [](const std::string& msg) { throw ValidationError(msg); };
  if (!(peak_lr > 0.0)) fail("optimizer.peak_lr: must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("optimizer.betas[0]: must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("optimizer.betas[1]: must be in [0, 1)");
  if (!(eps > 0.0)) fail("optimizer.eps: must be positive");
  if (!(weight_decay >= 0.0)) fail("optimizer.wd: must be non-negative");
  if (!(grad_clip >= 0.0)) fail("optimizer.grad_clip: must be non-negative");
}

double lr_at(std::size_t step_in_stage, std::size_t stage_steps, std::size_t warmup, double peak) {
  if (warmup >= stage_steps && stage_steps > 0) {
    throw ParameterError("lr_at: warmup " + std::to_string(warmup) +
                         " must be shorter than the stage (" + std::to_string(stage_steps) + ")");
  }
  if (step_in_stage >= stage_steps) return 0.0;
  if (step_in_stage < warmup) {
    return peak * (static_cast<double>(step_in_stage) / static_cast<double>(warmup));
  }
  // Ratio first so the peak vertex is exact.
  return peak * (static_cast<double>(stage_steps - step_in_stage) /
                 static_cast<double>(stage_steps - warmup));
}

std::size_t stage_warmup(std::size_t stage_steps, std::size_t configured) {
  return std::min(stage_steps / 10, configured);
}

OptimizerState make_optimizer_state(const Params& params) {
  return {zeros_like(params), zeros_like(params), 0};
}

void audit_optimizer_state(const OptimizerState& state, const Params& params) {
  std::vector<std::pair<std::string, Shape>> want;
  params.for_each([&](const std::string& n, const Tensor& t) { want.emplace_back(n, t.shape()); });
  for (const Params* moments : {&state.m, &state.v}) {
    std::size_t i = 0;
    moments->for_each([&](const std::string& n, const Tensor& t) {
      if (i >= want.size() || want[i].first != n || want[i].second != t.shape()) {
        throw StateError("optimizer state: moment tensor '" + n + "' " +
                         shape_string(t.shape()) + " does not match parameters");
      }
      ++i;
    });
    if (i != want.size()) {
      throw StateError("optimizer state: " + std::to_string(i) + " moment tensors for " +
                       std::to_string(want.size()) + " parameters");
    }
  }
}

void adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                  std::span<double> v, std::uint64_t t, double lr, const OptimizerConfig& config,
                  bool apply_decay) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
    throw StateError("adamw_update: slice lengths differ");
  }
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  const double decay = apply_decay ? lr * config.weight_decay : 0.0;
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
    v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    param[i] -= decay * param[i] + lr * m_hat / (std::sqrt(v_hat) + config.eps);
  }
}

bool decays(std::string_view tensor_name) {
  return !(tensor_name.ends_with(".gain") || tensor_name.ends_with(".bias") ||
           tensor_name.ends_with(".b"));
}

void optimizer_step(Params& params, const Params& grads, OptimizerState& state, double lr,
                    const OptimizerConfig& config) {
  audit_optimizer_state(state, params);
  std::vector<const Tensor*> g;
  std::vector<Tensor*> m, v;
  grads.for_each([&](const std::string&, const Tensor& t) { g.push_back(&t); });
  state.m.for_each([&](const std::string&, Tensor& t) { m.push_back(&t); });
  state.v.for_each([&](const std::string&, Tensor& t) { v.push_back(&t); });
  ++state.step;
  std::size_t i = 0;
  params.for_each([&](const std::string& name, Tensor& p) {
    if (i >= g.size() || !g[i]->same_shape(p)) {
      throw StateError("optimizer_step: gradient for '" + name + "' does not match parameter " +
                       shape_string(p.shape()));
    }
    adamw_update(p.data(), g[i]->data(), m[i]->data(), v[i]->data(), state.step, lr, config,
                 decays(name));
    ++i;
  });
  if (i != g.size()) throw StateError("optimizer_step: gradient tensor count mismatch");
}

double clip_gradients(Params& grads, double max_norm) {
  double sq = 0.0;
  grads.for_each([&](const std::string&, const Tensor& t) {
    for (double x : t.data()) sq += x * x;
  });
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    grads.for_each([&](const std::string&, Tensor& t) {
      for (double& x : t.data()) x *= s;
    });
  }
  return norm;
}

}  // namespace progrow
