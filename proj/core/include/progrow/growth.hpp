#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "progrow/encoder.hpp"
#include "progrow/mlm_data.hpp"
#include "progrow/model.hpp"

namespace progrow {

struct StackDepth {
  std::size_t target_layers = 0;
  friend bool operator==(const StackDepth&, const StackDepth&) = default;
};
struct UnshareFfn {
  friend bool operator==(const UnshareFfn&, const UnshareFfn&) = default;
};
struct DefactorizeFfn {
  friend bool operator==(const DefactorizeFfn&, const DefactorizeFfn&) = default;
};
struct Unpool {
  friend bool operator==(const Unpool&, const Unpool&) = default;
};
struct ExtendLength {
  std::size_t train_len = 0;
  std::size_t masks_per_seq = 0;
  friend bool operator==(const ExtendLength&, const ExtendLength&) = default;
};

using GrowthOp = std::variant<StackDepth, UnshareFfn, DefactorizeFfn, Unpool, ExtendLength>;

// Op-spec grammar shared by config files and the CLI:
//   stack:<L> | unshare | defactorize | unpool | extend:<len>:<masks>
// joined by commas. An empty string is the empty op list. Throws UsageError.
std::vector<GrowthOp> parse_growth_ops(std::string_view spec);
std::string to_string(const GrowthOp& op);
std::string to_string(std::span<const GrowthOp> ops);

// True for ops whose grown network computes the same function
// (UnshareFfn, DefactorizeFfn). ExtendLength leaves the model untouched and
// is also preserving.
bool is_function_preserving(const GrowthOp& op);

struct ModelState {
  ModelConfig config;
  Params params;
};

// Layer l of the grown model is a copy of source layer l mod L.
ModelState grow_depth_stack(const Params& params, const ModelConfig& config,
                            std::size_t target_layers);

// W1 = [W1', ..., W1'] (k copies side by side), W2 = [W2'/k; ...; W2'/k].
// `noise` > 0 adds uniform(-noise, noise) perturbations drawn from `rng`
// (off by default; the training-time dropout breaks the symmetry).
ModelState grow_ffn_unshare(const Params& params, const ModelConfig& config, double noise = 0.0,
                            Rng* rng = nullptr);

// W1 = W11 W12, W2 = W21 W22.
ModelState grow_ffn_defactorize(const Params& params, const ModelConfig& config);

// pool_k -> 1; parameters are returned unchanged.
ModelState grow_remove_pooling(const Params& params, const ModelConfig& config);

// Longer truncation and more masks; the model is untouched.
DataConfig extend_length(const DataConfig& data, std::size_t max_len, std::size_t new_train_len,
                         std::size_t new_masks_per_seq);

struct GrowthState {
  ModelConfig model;
  Params params;
  DataConfig data;
};

// Applies ops in the fixed order depth, width, length regardless of list
// order. Inputs are not modified.
GrowthState apply_growth(std::span<const GrowthOp> ops, const GrowthState& state);

// Config-only counterpart used for schedule validation and cost planning.
void apply_growth_to_config(std::span<const GrowthOp> ops, ModelConfig& model, DataConfig& data);

struct PreservationReport {
  double max_abs_diff = 0.0;
  bool preservation_class = false;  // every op is function-preserving
  bool pass = true;                 // always true for report-only ops
};

// Runs the encoder on `probe` before and after the ops (dropout off) and
// compares masked-position logits, plus hidden states when their shapes
// agree.
PreservationReport verify_function_preserving(const Params& params, const ModelConfig& config,
                                              std::span<const GrowthOp> ops, const MlmBatch& probe,
                                              double tol = 1e-9);

}  // namespace progrow
