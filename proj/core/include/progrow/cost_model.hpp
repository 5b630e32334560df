#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "progrow/model.hpp"
#include "progrow/schedule.hpp"

namespace progrow {

// Forward-pass Mult-Add accounting. One Mult-Add is one multiply-accumulate;
// FLOPs are twice that.

// 2 N D H_eff. Pass H/k as h_eff for shared(k).
std::uint64_t ffn_mult_adds(std::uint64_t n, std::uint64_t d, std::uint64_t h_eff);
// Mode-aware: full 2NDH, shared(k) 2ND(H/k), factorized(h) 2Nh(D+H).
std::uint64_t ffn_mult_adds(std::uint64_t n, std::uint64_t d, std::uint64_t h, const FfnMode& mode);

// Projections 2 N_kv D^2 (K, V1) + 2 N_q D^2 (Q, V2) plus scores and
// context 2 N_q N_kv D. Equals 4ND^2 + 2N^2D when N_q = N_kv = N.
std::uint64_t attn_mult_adds(std::uint64_t n_q, std::uint64_t n_kv, std::uint64_t d);

struct StepCost {
  std::uint64_t layers = 0;        // sum of attention + FFN over all layers
  std::uint64_t overhead = 0;      // MLM head: 2 * masks * D * V
  std::uint64_t per_sequence = 0;  // layers + overhead
  std::uint64_t batch_size = 1;
  std::uint64_t per_batch = 0;     // per_sequence * batch_size
};

// Per-step cost of one training sequence of `train_len` tokens. With
// pool_k > 1 the first layer attends ceil(N/k) queries over N keys and all
// later layers run at ceil(N/k); the masked-row exemption is ignored.
StepCost model_mult_adds_per_step(const ModelConfig& config, std::uint64_t train_len,
                                  std::uint64_t masks_per_seq, bool count_overhead = true,
                                  std::uint64_t batch_size = 1);

struct CostOptions {
  bool count_overhead = true;
  bool flops_x2 = false;  // display only
};

struct StageCost {
  std::size_t index = 0;
  std::uint64_t steps = 0;
  std::string model_summary;
  std::uint64_t train_len = 0;
  std::uint64_t masks_per_seq = 0;
  StepCost step;
  std::uint64_t params = 0;
  std::uint64_t total = 0;  // steps * step.per_sequence
};

struct CostReport {
  std::vector<StageCost> stages;
  std::uint64_t total = 0;
  std::uint64_t baseline_total = 0;
  // baseline_total / total - 1; 1.071 means +107.1%.
  double speedup = 0.0;
  bool flops_x2 = false;
};

// Per-stage costs of `schedule` compared against `baseline`. Both must end
// at the same final model; totals are per training sequence (batch size is
// reported per stage and does not enter the ratio).
CostReport schedule_cost(const Schedule& schedule, const Schedule& baseline,
                         const CostOptions& options = {});

// Text table for display; values scaled by 2 when report.flops_x2.
std::string format_cost_table(const CostReport& report, bool with_baseline);

}  // namespace progrow
