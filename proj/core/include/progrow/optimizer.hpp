#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

#include "progrow/model.hpp"

namespace progrow {

struct OptimizerConfig {
  double peak_lr = 1e-4;
  std::size_t warmup = 10000;  // absolute cap; per stage min(10% of steps, warmup)
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-6;
  double weight_decay = 0.01;
  double grad_clip = 0.0;       // global L2 norm; 0 disables
  bool carry_moments = false;   // keep moments across shape-preserving growth

  void validate() const;
  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

// Linear warmup 0 -> peak over `warmup` steps, then linear decay to 0 at
// `stage_steps`. Every stage restarts this schedule.
double lr_at(std::size_t step_in_stage, std::size_t stage_steps, std::size_t warmup, double peak);

// Warmup used for a stage: min(stage_steps / 10, configured). May be 0.
std::size_t stage_warmup(std::size_t stage_steps, std::size_t configured);

// Per-parameter AdamW moments aligned with Params::for_each order.
struct OptimizerState {
  Params m;
  Params v;
  std::uint64_t step = 0;
};

OptimizerState make_optimizer_state(const Params& params);

// Throws StateError unless the moments match `params` tensor for tensor.
void audit_optimizer_state(const OptimizerState& state, const Params& params);

// One decoupled-weight-decay Adam update with bias correction at step t
// (1-based) on a flat slice.
void adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                  std::span<double> v, std::uint64_t t, double lr, const OptimizerConfig& config,
                  bool apply_decay);

// Layer-norm parameters and biases are exempt from weight decay.
bool decays(std::string_view tensor_name);

// Advances state.step and updates every tensor of `params`.
void optimizer_step(Params& params, const Params& grads, OptimizerState& state, double lr,
                    const OptimizerConfig& config);

// Scales `grads` so their global L2 norm is at most max_norm; returns the
// norm before clipping.
double clip_gradients(Params& grads, double max_norm);

}  // namespace progrow
