#include "progrow/layers.hpp"

#include <cmath>

#include "progrow/errors.hpp"
#include "progrow/ops.hpp"

namespace progrow {
namespace {

void require_width(const Tensor& x, std::size_t d, const char* what) {
  if (x.rank() != 2 || x.cols() != d) {
    throw DimensionError(std::string(what) + ": input " + shape_string(x.shape()) +
                         " does not have width D=" + std::to_string(d));
  }
}

Tensor activate(const Tensor& pre, Activation activation) {
  return activation == Activation::kGelu ? gelu(pre) : pre;
}

Tensor activate_backward(const Tensor& pre, const Tensor& g, Activation activation) {
  return activation == Activation::kGelu ? gelu_backward(pre, g) : g;
}

}  // namespace

Tensor ffn_forward(const Tensor& x, const LayerParams& layer, const ModelConfig& config, Rng& rng,
                   bool training, FfnCache* cache, Activation activation) {
  require_width(x, config.dim, "ffn_forward");
  const bool factorized = config.ffn.kind == FfnKind::kFactorized;
  Tensor x_inner;
  Tensor pre;
  if (factorized) {
    x_inner = matmul(x, layer.w11);
    pre = matmul(x_inner, layer.w12);
  } else {
    pre = matmul(x, layer.w1);
  }
  Tensor act = activate(pre, activation);
  Tensor mask;
  if (training && config.dropout > 0.0) {
    mask = dropout_mask(act.shape(), config.dropout, rng);
    act = hadamard(act, mask);
  }
  Tensor out_inner;
  Tensor out;
  if (factorized) {
    out_inner = matmul(act, layer.w21);
    out = matmul(out_inner, layer.w22);
  } else {
    out = matmul(act, layer.w2);
  }
  if (cache) {
    *cache = FfnCache{x, std::move(x_inner), std::move(pre), std::move(mask), std::move(act),
                      std::move(out_inner), activation};
  }
  return out;
}

Tensor ffn_backward(const Tensor& g, const LayerParams& layer, const FfnCache& cache,
                    LayerParams& grads) {
  const bool factorized = !layer.w11.empty();
  Tensor dact;
  if (factorized) {
    auto outer = matmul_backward(cache.out_inner, layer.w22, g);
    add_inplace(grads.w22, outer.db);
    auto inner = matmul_backward(cache.act, layer.w21, outer.da);
    add_inplace(grads.w21, inner.db);
    dact = std::move(inner.da);
  } else {
    auto mm = matmul_backward(cache.act, layer.w2, g);
    add_inplace(grads.w2, mm.db);
    dact = std::move(mm.da);
  }
  if (!cache.drop_mask.empty()) dact = hadamard(dact, cache.drop_mask);
  const Tensor dpre = activate_backward(cache.pre, dact, cache.activation);
  if (factorized) {
    auto outer = matmul_backward(cache.x_inner, layer.w12, dpre);
    add_inplace(grads.w12, outer.db);
    auto inner = matmul_backward(cache.x, layer.w11, outer.da);
    add_inplace(grads.w11, inner.db);
    return std::move(inner.da);
  }
  auto mm = matmul_backward(cache.x, layer.w1, dpre);
  add_inplace(grads.w1, mm.db);
  return std::move(mm.da);
}

Tensor attention_forward(const Tensor& x_q, const Tensor& x_kv, const LayerParams& layer,
                         const ModelConfig& config, Rng& rng, bool training,
                         AttentionCache* cache) {
  require_width(x_q, config.dim, "attention_forward (query)");
  require_width(x_kv, config.dim, "attention_forward (key/value)");
  const std::size_t heads = config.heads;
  const std::size_t dh = config.head_dim();
  const double score_scale = config.attn_scale ? 1.0 / std::sqrt(static_cast<double>(dh)) : 1.0;
  const bool use_dropout = training && config.dropout > 0.0;

  Tensor q = matmul(x_q, layer.w_q);
  Tensor k = matmul(x_kv, layer.w_k_t);
  Tensor v = matmul(x_kv, layer.w_v1);
  Tensor context({x_q.rows(), config.dim});
  std::vector<Tensor> probs, masks;
  probs.reserve(heads);
  masks.reserve(heads);
  for (std::size_t m = 0; m < heads; ++m) {
    const Tensor qm = column_block(q, m * dh, dh);
    const Tensor km = column_block(k, m * dh, dh);
    const Tensor vm = column_block(v, m * dh, dh);
    Tensor scores = matmul_a_bt(qm, km);
    if (score_scale != 1.0) scores = scale(scores, score_scale);
    Tensor p = softmax_rows(scores);
    Tensor mask;
    Tensor p_used = p;
    if (use_dropout) {
      mask = dropout_mask(p.shape(), config.dropout, rng);
      p_used = hadamard(p, mask);
    }
    set_column_block(context, m * dh, matmul(p_used, vm));
    probs.push_back(std::move(p));
    masks.push_back(std::move(mask));
  }
  // out = sum_m context_m W_V2[m], with W_V2[m] = (W_V2_t[:, m])^T.
  Tensor out = matmul_a_bt(context, layer.w_v2_t);
  if (cache) {
    *cache = AttentionCache{x_q,
                            x_kv,
                            std::move(q),
                            std::move(k),
                            std::move(v),
                            std::move(probs),
                            std::move(masks),
                            std::move(context),
                            score_scale};
  }
  return out;
}

AttentionInputGrads attention_backward(const Tensor& g, const LayerParams& layer,
                                       const ModelConfig& config, const AttentionCache& cache,
                                       LayerParams& grads) {
  const std::size_t dh = config.head_dim();
  // out = C W^T  =>  dC = g W,  dW = g^T C.
  const Tensor dcontext = matmul(g, layer.w_v2_t);
  add_inplace(grads.w_v2_t, matmul_at_b(g, cache.context));

  Tensor dq(cache.q.shape()), dk(cache.k.shape()), dv(cache.v.shape());
  for (std::size_t m = 0; m < config.heads; ++m) {
    const Tensor qm = column_block(cache.q, m * dh, dh);
    const Tensor km = column_block(cache.k, m * dh, dh);
    const Tensor vm = column_block(cache.v, m * dh, dh);
    const Tensor dcm = column_block(dcontext, m * dh, dh);
    const Tensor& p = cache.probs[m];
    const Tensor& mask = cache.masks[m];
    const Tensor p_used = mask.empty() ? p : hadamard(p, mask);

    add_column_block(dv, m * dh, matmul_at_b(p_used, dcm));
    Tensor dp = matmul_a_bt(dcm, vm);
    if (!mask.empty()) dp = hadamard(dp, mask);
    Tensor dscores = softmax_rows_backward(p, dp);
    if (cache.score_scale != 1.0) dscores = scale(dscores, cache.score_scale);
    add_column_block(dq, m * dh, matmul(dscores, km));
    add_column_block(dk, m * dh, matmul_at_b(dscores, qm));
  }

  auto q_mm = matmul_backward(cache.x_q, layer.w_q, dq);
  auto k_mm = matmul_backward(cache.x_kv, layer.w_k_t, dk);
  auto v_mm = matmul_backward(cache.x_kv, layer.w_v1, dv);
  add_inplace(grads.w_q, q_mm.db);
  add_inplace(grads.w_k_t, k_mm.db);
  add_inplace(grads.w_v1, v_mm.db);
  add_inplace(k_mm.da, v_mm.da);
  return {std::move(q_mm.da), std::move(k_mm.da)};
}

}  // namespace progrow
