#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "progrow/cost_model.hpp"
#include "progrow/optimizer.hpp"
#include "progrow/schedule.hpp"

namespace progrow {

// A run configuration document (JSON) with sections:
//   model     {L, D, H, M, N_max, V, dropout, attn_scale, ffn, pool_k}
//   data      {seed, corpus_size, heldout_size, seq_len_full, train_len,
//              masks, markov_order, mask_token}
//   schedule  [{steps, ops, train_len, masks, batch}, ...]
//   optimizer {peak_lr, warmup, betas, eps, wd, grad_clip, carry_moments}
//   cost      {count_overhead, flops_x2}
//   train     {seed, log_interval}
// Unknown keys are rejected.
struct RunConfig {
  Schedule schedule;
  OptimizerConfig optimizer;
  CostOptions cost;
  std::uint64_t seed = 1;
  std::size_t log_interval = 10;
};

// Throws ValidationError with a path such as "schedule[1].ops: ...".
RunConfig parse_run_config(std::string_view json_text);

// `source` is a file path or "preset:<name>".
RunConfig load_run_config(const std::string& source);

// Built-in presets: stack_base and compound_base at BERT-base dimensions,
// stack_base_desk and compound_base_desk at desk scale.
std::vector<std::string> preset_names();
std::string preset_document(std::string_view name);

}  // namespace progrow
