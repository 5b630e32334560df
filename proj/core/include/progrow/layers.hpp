#pragma once

#include <vector>

#include "progrow/model.hpp"
#include "progrow/rng.hpp"
#include "progrow/tensor.hpp"

namespace progrow {

inline constexpr double kLayerNormEps = 1e-12;

// Activation used inside the FFN. kIdentity exists so tests can check the
// linear structure of the block by hand.
enum class Activation { kGelu, kIdentity };

struct FfnCache {
  Tensor x;         // block input
  Tensor x_inner;   // factorized only: x * W11
  Tensor pre;       // pre-activation
  Tensor drop_mask; // empty when dropout was not applied
  Tensor act;       // activation after dropout
  Tensor out_inner; // factorized only: act * W21
  Activation activation = Activation::kGelu;
};

// phi(x W1) W2 for full and shared(k) (with W1', W2'), and
// phi(x W11 W12) W21 W22 for factorized(h). Dropout is applied to the
// activation. Residual and layer norm belong to the caller.
Tensor ffn_forward(const Tensor& x, const LayerParams& layer, const ModelConfig& config, Rng& rng,
                   bool training, FfnCache* cache = nullptr,
                   Activation activation = Activation::kGelu);

// Accumulates weight gradients into `grads` and returns d(loss)/dx.
Tensor ffn_backward(const Tensor& g, const LayerParams& layer, const FfnCache& cache,
                    LayerParams& grads);

struct AttentionCache {
  Tensor x_q, x_kv;
  Tensor q, k, v;             // projected, all heads side by side
  std::vector<Tensor> probs;  // per head, softmax output before dropout
  std::vector<Tensor> masks;  // per head dropout masks (empty if unused)
  Tensor context;             // n_q x D, heads side by side
  double score_scale = 1.0;
};

// sum_m f_s(x_q W_Q[m] (x_kv W_K_t[m])^T) x_kv W_V1[m] W_V2[m]
// with optional 1/sqrt(D/M) score scaling and dropout on the probabilities.
// n_q may differ from n_kv (pooled first layer).
Tensor attention_forward(const Tensor& x_q, const Tensor& x_kv, const LayerParams& layer,
                         const ModelConfig& config, Rng& rng, bool training,
                         AttentionCache* cache = nullptr);

struct AttentionInputGrads {
  Tensor dx_q;
  Tensor dx_kv;
};
AttentionInputGrads attention_backward(const Tensor& g, const LayerParams& layer,
                                       const ModelConfig& config, const AttentionCache& cache,
                                       LayerParams& grads);

}  // namespace progrow
