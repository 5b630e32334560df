#include "progrow/encoder.hpp"

#include <string>

#include "progrow/errors.hpp"

namespace progrow {
namespace {

void validate_inputs(std::span<const TokenId> ids, std::span<const std::size_t> masked,
                     const ModelConfig& config) {
  if (ids.empty()) throw InputError("encoder_forward: empty sequence");
  if (ids.size() > config.max_len) {
    throw InputError("encoder_forward: sequence length " + std::to_string(ids.size()) +
                     " exceeds N_max=" + std::to_string(config.max_len));
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= config.vocab) {
      throw InputError("encoder_forward: token " + std::to_string(ids[i]) + " at position " +
                       std::to_string(i) + " outside vocabulary of " +
                       std::to_string(config.vocab));
    }
  }
  for (std::size_t i = 0; i < masked.size(); ++i) {
    if (masked[i] >= ids.size()) {
      throw InputError("encoder_forward: masked position " + std::to_string(masked[i]) +
                       " outside sequence of length " + std::to_string(ids.size()));
    }
    if (i > 0 && masked[i] <= masked[i - 1]) {
      throw InputError("encoder_forward: masked positions must be strictly increasing");
    }
  }
}

Tensor embed(std::span<const TokenId> ids, const Params& params) {
  const std::size_t d = params.token_emb.cols();
  Tensor x({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto tok = params.token_emb.row(static_cast<std::size_t>(ids[i]));
    auto pos = params.pos_emb.row(i);
    auto out = x.row(i);
    for (std::size_t j = 0; j < d; ++j) out[j] = tok[j] + pos[j];
  }
  return x;
}

}  // namespace

std::vector<RowGroup> pooling_groups(std::size_t n, std::span<const std::size_t> masked,
                                     std::size_t k) {
  if (k == 0) throw ParameterError("pooling_groups: k must be at least 1");
  std::vector<RowGroup> groups;
  std::size_t pos = 0;
  std::size_t next_mask = 0;
  while (pos < n) {
    if (next_mask < masked.size() && masked[next_mask] == pos) {
      groups.push_back({pos, pos + 1});
      ++pos;
      ++next_mask;
      continue;
    }
    const std::size_t run_end = next_mask < masked.size() ? masked[next_mask] : n;
    for (std::size_t b = pos; b < run_end; b += k) groups.push_back({b, std::min(b + k, run_end)});
    pos = run_end;
  }
  return groups;
}

EncoderOutput encoder_forward(std::span<const TokenId> ids, std::span<const std::size_t> masked,
                              const Params& params, const ModelConfig& config, Rng& rng,
                              bool training, EncoderCache* cache) {
  validate_inputs(ids, masked, config);
  if (params.layers.size() != config.layers) {
    throw DimensionError("encoder_forward: params have " + std::to_string(params.layers.size()) +
                         " layers, config has " + std::to_string(config.layers));
  }
  const bool pooled = config.pool_k > 1;
  std::vector<RowGroup> groups;
  std::vector<std::size_t> pooled_masked(masked.begin(), masked.end());
  if (pooled) {
    groups = pooling_groups(ids.size(), masked, config.pool_k);
    std::size_t g = 0;
    for (auto& pos : pooled_masked) {
      while (groups[g].begin != pos) ++g;
      pos = g;
    }
  }

  if (cache) {
    cache->ids.assign(ids.begin(), ids.end());
    cache->groups = groups;
    cache->layers.assign(config.layers, {});
  }

  Tensor x = embed(ids, params);
  for (std::size_t l = 0; l < config.layers; ++l) {
    const LayerParams& layer = params.layers[l];
    EncoderLayerCache* lc = cache ? &cache->layers[l] : nullptr;
    const Tensor u = layer_norm(x, layer.attn_ln_gain, layer.attn_ln_bias, kLayerNormEps);
    const bool pool_here = pooled && l == 0;
    Tensor attn = pool_here ? attention_forward(pool_rows(u, groups), u, layer, config, rng,
                                                training, lc ? &lc->attn : nullptr)
                            : attention_forward(u, u, layer, config, rng, training,
                                                lc ? &lc->attn : nullptr);
    Tensor mid = pool_here ? pool_rows(x, groups) : x;
    add_inplace(mid, attn);
    const Tensor w = layer_norm(mid, layer.ffn_ln_gain, layer.ffn_ln_bias, kLayerNormEps);
    Tensor next = ffn_forward(w, layer, config, rng, training, lc ? &lc->ffn : nullptr);
    add_inplace(next, mid);
    if (lc) {
      lc->x_in = std::move(x);
      lc->attn_norm = u;
      lc->x_mid = std::move(mid);
    }
    x = std::move(next);
  }

  EncoderOutput out;
  out.logits = matmul(gather_rows(x, pooled_masked), params.head_w);
  for (std::size_t i = 0; i < out.logits.rows(); ++i) {
    auto r = out.logits.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += params.head_b[j];
  }
  if (cache) {
    cache->final_hidden = x;
    cache->pooled_masked = pooled_masked;
  }
  out.hidden = std::move(x);
  out.pooled_masked = std::move(pooled_masked);
  return out;
}

void encoder_backward(const Tensor& dlogits, const Params& params, const ModelConfig& config,
                      const EncoderCache& cache, Params& grads) {
  const Tensor z = gather_rows(cache.final_hidden, cache.pooled_masked);
  auto head = matmul_backward(z, params.head_w, dlogits);
  add_inplace(grads.head_w, head.db);
  for (std::size_t i = 0; i < dlogits.rows(); ++i) {
    auto r = dlogits.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) grads.head_b[j] += r[j];
  }

  Tensor dx(cache.final_hidden.shape());
  for (std::size_t i = 0; i < cache.pooled_masked.size(); ++i) {
    auto src = head.da.row(i);
    auto dst = dx.row(cache.pooled_masked[i]);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
  }

  for (std::size_t l = config.layers; l-- > 0;) {
    const LayerParams& layer = params.layers[l];
    LayerParams& lg = grads.layers[l];
    const EncoderLayerCache& lc = cache.layers[l];

    // x_out = x_mid + FFN(LN(x_mid))
    const Tensor dw = ffn_backward(dx, layer, lc.ffn, lg);
    auto ln_f = layer_norm_backward(lc.x_mid, layer.ffn_ln_gain, kLayerNormEps, dw);
    add_inplace(lg.ffn_ln_gain, ln_f.dgain);
    add_inplace(lg.ffn_ln_bias, ln_f.dbias);
    Tensor dmid = std::move(dx);
    add_inplace(dmid, ln_f.dx);

    // x_mid = pool(x_in) + Att(pool(LN(x_in)), LN(x_in)); pool is identity
    // outside the first layer of a pooled model.
    auto att = attention_backward(dmid, layer, config, lc.attn, lg);
    const bool pooled = l == 0 && !cache.groups.empty();
    const std::size_t n_in = lc.x_in.rows();
    Tensor du = pooled ? pool_rows_backward(att.dx_q, cache.groups, n_in) : std::move(att.dx_q);
    add_inplace(du, att.dx_kv);
    auto ln_a = layer_norm_backward(lc.x_in, layer.attn_ln_gain, kLayerNormEps, du);
    add_inplace(lg.attn_ln_gain, ln_a.dgain);
    add_inplace(lg.attn_ln_bias, ln_a.dbias);
    dx = pooled ? pool_rows_backward(dmid, cache.groups, n_in) : std::move(dmid);
    add_inplace(dx, ln_a.dx);
  }

  for (std::size_t i = 0; i < cache.ids.size(); ++i) {
    auto src = dx.row(i);
    auto tok = grads.token_emb.row(static_cast<std::size_t>(cache.ids[i]));
    auto pos = grads.pos_emb.row(i);
    for (std::size_t j = 0; j < src.size(); ++j) {
      tok[j] += src[j];
      pos[j] += src[j];
    }
  }
}

LossAndGrads mlm_loss(const MlmBatch& batch, const Params& params, const ModelConfig& config,
                      Rng& rng, bool training) {
  std::size_t total_masked = 0;
  for (const auto& ex : batch) {
    if (ex.masked_positions.size() != ex.targets.size()) {
      throw InputError("mlm_loss: masked positions and targets differ in length");
    }
    total_masked += ex.masked_positions.size();
  }
  if (total_masked == 0) throw InputError("mlm_loss: batch has no masked positions");

  LossAndGrads result{0.0, zeros_like(params)};
  EncoderCache cache;
  for (const auto& ex : batch) {
    if (ex.masked_positions.empty()) continue;
    const auto out =
        encoder_forward(ex.input_ids, ex.masked_positions, params, config, rng, training, &cache);
    auto ce = cross_entropy_logits(out.logits, ex.targets);
    // Per-example means are reweighted into one mean over all masked rows.
    const double weight =
        static_cast<double>(ex.masked_positions.size()) / static_cast<double>(total_masked);
    result.loss += ce.loss * weight;
    encoder_backward(scale(ce.grad, weight), params, config, cache, result.grads);
  }
  return result;
}

double mlm_eval_loss(const MlmBatch& batch, const Params& params, const ModelConfig& config) {
  std::size_t total_masked = 0;
  for (const auto& ex : batch) total_masked += ex.masked_positions.size();
  if (total_masked == 0) throw InputError("mlm_eval_loss: batch has no masked positions");
  Rng unused(0);
  double loss = 0.0;
  for (const auto& ex : batch) {
    if (ex.masked_positions.empty()) continue;
    const auto out =
        encoder_forward(ex.input_ids, ex.masked_positions, params, config, unused, false);
    const double weight =
        static_cast<double>(ex.masked_positions.size()) / static_cast<double>(total_masked);
    loss += cross_entropy_logits(out.logits, ex.targets).loss * weight;
  }
  return loss;
}

}  // namespace progrow
