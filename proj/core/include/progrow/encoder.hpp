#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "progrow/layers.hpp"
#include "progrow/model.hpp"
#include "progrow/ops.hpp"

namespace progrow {

// One masked-LM training example: corrupted input ids, the strictly
// increasing masked positions, and the original tokens at those positions.
struct MlmExample {
  std::vector<TokenId> input_ids;
  std::vector<std::size_t> masked_positions;
  std::vector<TokenId> targets;

  friend bool operator==(const MlmExample&, const MlmExample&) = default;
};
using MlmBatch = std::vector<MlmExample>;

// Row groups for first-layer query pooling. Masked positions are never
// pooled: each becomes its own group. Runs of unmasked positions between
// them are cut into windows of k starting at the run's first position.
std::vector<RowGroup> pooling_groups(std::size_t n, std::span<const std::size_t> masked,
                                     std::size_t k);

struct EncoderOutput {
  Tensor logits;  // |masked| x V
  Tensor hidden;  // n' x D, n' = pooled length
  std::vector<std::size_t> pooled_masked;  // masked rows in pooled coordinates
};

struct EncoderLayerCache {
  Tensor x_in;      // residual stream entering the layer
  Tensor attn_norm; // LN(x_in)
  Tensor x_mid;     // after the attention residual
  AttentionCache attn;
  FfnCache ffn;
};

struct EncoderCache {
  std::vector<TokenId> ids;
  std::vector<RowGroup> groups;  // empty unless the first layer pools
  std::vector<EncoderLayerCache> layers;
  Tensor final_hidden;
  std::vector<std::size_t> pooled_masked;
};

// Pre-norm encoder: x <- x + Att(LN(x)); x <- x + FFN(LN(x)). With
// pool_k > 1 the first layer's queries and residual are pooled, so every
// later layer runs at the pooled length.
EncoderOutput encoder_forward(std::span<const TokenId> ids, std::span<const std::size_t> masked,
                              const Params& params, const ModelConfig& config, Rng& rng,
                              bool training, EncoderCache* cache = nullptr);

// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(logits).
void encoder_backward(const Tensor& dlogits, const Params& params, const ModelConfig& config,
                      const EncoderCache& cache, Params& grads);

struct LossAndGrads {
  double loss = 0.0;
  Params grads;
};

// Mean cross-entropy over every masked position in the batch, with
// gradients shaped exactly like `params`.
LossAndGrads mlm_loss(const MlmBatch& batch, const Params& params, const ModelConfig& config,
                      Rng& rng, bool training);

// Loss only, dropout off.
double mlm_eval_loss(const MlmBatch& batch, const Params& params, const ModelConfig& config);

}  // namespace progrow
