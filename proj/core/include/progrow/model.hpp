#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "progrow/rng.hpp"
#include "progrow/tensor.hpp"

namespace progrow {

enum class FfnKind { kFull, kShared, kFactorized };

// Width treatment of the feed-forward blocks. `factor` is k for shared(k)
// and the rank h for factorized(h); it is unused for full.
struct FfnMode {
  FfnKind kind = FfnKind::kFull;
  std::size_t factor = 1;

  static FfnMode full() { return {FfnKind::kFull, 1}; }
  static FfnMode shared(std::size_t k) { return {FfnKind::kShared, k}; }
  static FfnMode factorized(std::size_t h) { return {FfnKind::kFactorized, h}; }

  // "full", "shared:<k>", "factorized:<h>".
  std::string to_string() const;
  static FfnMode parse(std::string_view text);

  friend bool operator==(const FfnMode&, const FfnMode&) = default;
};

struct ModelConfig {
  std::size_t layers = 4;    // L
  std::size_t dim = 32;      // D
  std::size_t hidden = 64;   // H
  std::size_t heads = 2;     // M
  std::size_t max_len = 128; // N_max, rows of the position table
  std::size_t vocab = 64;    // V
  double dropout = 0.1;
  FfnMode ffn;
  std::size_t pool_k = 1;    // 1 disables embedding pooling
  bool attn_scale = true;    // multiply scores by 1/sqrt(D/M)

  std::size_t head_dim() const { return dim / heads; }
  // Hidden width actually materialized: H/k under shared(k), else H.
  std::size_t ffn_width() const;

  // Throws ValidationError describing the first violated invariant.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Weights of one Transformer layer. The four attention matrices are D x D
// column-concatenations of the M per-head blocks; head m occupies columns
// [m D/M, (m+1) D/M). The key and second value projections are stored
// transposed so that every attention weight is D x D.
//
// Only the FFN tensors of the active mode are populated: w1/w2 for full and
// shared(k) (shared uses D x H/k and H/k x D), w11/w12/w21/w22 for
// factorized(h). Inactive tensors stay empty.
struct LayerParams {
  Tensor w_q, w_k_t, w_v1, w_v2_t;
  Tensor attn_ln_gain, attn_ln_bias;
  Tensor ffn_ln_gain, ffn_ln_bias;
  Tensor w1, w2;
  Tensor w11, w12, w21, w22;

  template <typename Self, typename Fn>
  static void visit(Self& self, const std::string& prefix, Fn&& fn) {
    const auto emit = [&](const char* name, auto& t) {
      if (!t.empty()) fn(prefix + name, t);
    };
    emit("attn.w_q", self.w_q);
    emit("attn.w_k_t", self.w_k_t);
    emit("attn.w_v1", self.w_v1);
    emit("attn.w_v2_t", self.w_v2_t);
    emit("attn_ln.gain", self.attn_ln_gain);
    emit("attn_ln.bias", self.attn_ln_bias);
    emit("ffn_ln.gain", self.ffn_ln_gain);
    emit("ffn_ln.bias", self.ffn_ln_bias);
    emit("ffn.w1", self.w1);
    emit("ffn.w2", self.w2);
    emit("ffn.w11", self.w11);
    emit("ffn.w12", self.w12);
    emit("ffn.w21", self.w21);
    emit("ffn.w22", self.w22);
  }
};

struct Params {
  Tensor token_emb;  // V x D
  Tensor pos_emb;    // N_max x D
  std::vector<LayerParams> layers;
  Tensor head_w;     // D x V, untied from token_emb
  Tensor head_b;     // V

  // Visits every populated tensor in canonical order with its dotted name.
  // This order defines checkpoint layout and optimizer-state alignment.
  template <typename Fn>
  void for_each(Fn&& fn) {
    visit_all(*this, fn);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    visit_all(*this, fn);
  }

  std::size_t tensor_count() const;
  std::size_t element_count() const;

 private:
  template <typename Self, typename Fn>
  static void visit_all(Self& self, Fn& fn) {
    fn(std::string("token_emb"), self.token_emb);
    fn(std::string("pos_emb"), self.pos_emb);
    for (std::size_t l = 0; l < self.layers.size(); ++l)
      LayerParams::visit(self.layers[l], "layers." + std::to_string(l) + ".", fn);
    fn(std::string("mlm_head.w"), self.head_w);
    fn(std::string("mlm_head.b"), self.head_b);
  }
};

// Zero-filled parameters with every tensor shaped for `config`.
Params shaped_params(const ModelConfig& config);
// Same tensor set and shapes as `like`, all zeros.
Params zeros_like(const Params& like);

// Truncated-normal(0, 0.02) weights, zero biases, unit layer-norm gains.
Params init_params(const ModelConfig& config, Rng& rng);

// Throws ValidationError naming the first tensor whose presence or shape
// disagrees with `config`.
void audit_shapes(const Params& params, const ModelConfig& config);

// Parameter counts by component. Per-layer entries are for a single layer.
struct ParamCount {
  std::uint64_t attention_per_layer = 0;   // 4 D^2
  std::uint64_t ffn_per_layer = 0;         // 2DH, 2DH/k or 2h(D+H)
  std::uint64_t layer_norm_per_layer = 0;  // 4D
  std::uint64_t embeddings = 0;            // (V + N_max) D
  std::uint64_t mlm_head = 0;              // DV + V
  std::uint64_t total = 0;
};
ParamCount param_count(const ModelConfig& config);

// One-line summary such as "L=12 D=768 H=3072 M=12 ffn=shared:2 pool=2".
std::string describe_model(const ModelConfig& config);

}  // namespace progrow
