#pragma once

// Reference computations used as independent test oracles. Nothing here
// calls into the library's math beyond Tensor storage.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "progrow/model.hpp"
#include "progrow/rng.hpp"
#include "progrow/tensor.hpp"

namespace progrow::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
  Tensor t(shape);
  for (double& v : t.data()) v = lo + (hi - lo) * rng.uniform();
  return t;
}

// Literal per-head sum
//   sum_m softmax(x_q Wq_m Wk_m x_kv^T * scale) x_kv Wv1_m Wv2_m
// with every product evaluated by explicit index loops.
inline Tensor brute_force_attention(const Tensor& xq, const Tensor& xkv, const LayerParams& p,
                                    std::size_t heads, double scale) {
  const std::size_t nq = xq.rows(), nkv = xkv.rows(), d = xq.cols(), dh = d / heads;
  Tensor out({nq, d});
  for (std::size_t m = 0; m < heads; ++m) {
    const std::size_t c0 = m * dh;
    // q = xq Wq_m, k = xkv Wk_m^T (Wk_m stored transposed), v = xkv Wv1_m.
    std::vector<double> q(nq * dh, 0.0), k(nkv * dh, 0.0), v(nkv * dh, 0.0);
    for (std::size_t i = 0; i < nq; ++i)
      for (std::size_t a = 0; a < dh; ++a)
        for (std::size_t j = 0; j < d; ++j) q[i * dh + a] += xq(i, j) * p.w_q(j, c0 + a);
    for (std::size_t i = 0; i < nkv; ++i)
      for (std::size_t a = 0; a < dh; ++a)
        for (std::size_t j = 0; j < d; ++j) {
          k[i * dh + a] += xkv(i, j) * p.w_k_t(j, c0 + a);
          v[i * dh + a] += xkv(i, j) * p.w_v1(j, c0 + a);
        }
    for (std::size_t i = 0; i < nq; ++i) {
      std::vector<double> s(nkv, 0.0);
      double mx = -INFINITY;
      for (std::size_t t = 0; t < nkv; ++t) {
        for (std::size_t a = 0; a < dh; ++a) s[t] += q[i * dh + a] * k[t * dh + a];
        s[t] *= scale;
        mx = std::max(mx, s[t]);
      }
      double z = 0.0;
      for (double& e : s) {
        e = std::exp(e - mx);
        z += e;
      }
      std::vector<double> ctx(dh, 0.0);
      for (std::size_t t = 0; t < nkv; ++t)
        for (std::size_t a = 0; a < dh; ++a) ctx[a] += s[t] / z * v[t * dh + a];
      // Wv2_m[a][j] = w_v2_t(j, c0 + a)
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t a = 0; a < dh; ++a) out(i, j) += ctx[a] * p.w_v2_t(j, c0 + a);
    }
  }
  return out;
}

using Rows = std::vector<std::vector<double>>;

inline Rows to_rows(const Tensor& t) {
  Rows r(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) r[i][j] = t(i, j);
  return r;
}

inline Tensor from_rows(const Rows& r) {
  Tensor t({r.size(), r.empty() ? 0 : r[0].size()});
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = 0; j < r[i].size(); ++j) t(i, j) = r[i][j];
  return t;
}

inline Rows naive_matmul(const Rows& a, const Tensor& b) {
  Rows out(a.size(), std::vector<double>(b.cols(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j)
      for (std::size_t p = 0; p < b.rows(); ++p) out[i][j] += a[i][p] * b(p, j);
  return out;
}

inline double gelu_scalar(double x) {
  return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / std::acos(-1.0)) * (x + 0.044715 * x * x * x)));
}

inline Rows naive_layer_norm(const Rows& x, const Tensor& gain, const Tensor& bias, double eps) {
  Rows out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double n = static_cast<double>(x[i].size());
    double mean = 0.0, var = 0.0;
    for (double v : x[i]) mean += v / n;
    for (double v : x[i]) var += (v - mean) * (v - mean) / n;
    for (std::size_t j = 0; j < x[i].size(); ++j)
      out[i][j] = (x[i][j] - mean) / std::sqrt(var + eps) * gain[j] + bias[j];
  }
  return out;
}

// Groups for query pooling, written independently of the library: each
// masked position alone, unmasked runs cut into windows of k.
inline std::vector<std::vector<std::size_t>> naive_pool_groups(std::size_t n,
                                                                const std::vector<std::size_t>& masked,
                                                                std::size_t k) {
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::size_t> run;
  const auto flush = [&] {
    for (std::size_t b = 0; b < run.size(); b += k)
      groups.emplace_back(run.begin() + b, run.begin() + std::min(run.size(), b + k));
    run.clear();
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (std::find(masked.begin(), masked.end(), i) != masked.end()) {
      flush();
      groups.push_back({i});
    } else {
      run.push_back(i);
    }
  }
  flush();
  return groups;
}

// Dropout-free forward pass of the whole encoder, returning logits at the
// masked positions. Supports every FFN mode and first-layer pooling.
inline Tensor reference_encoder_logits(const std::vector<TokenId>& ids,
                                       const std::vector<std::size_t>& masked, const Params& p,
                                       const ModelConfig& c, double eps) {
  const std::size_t n = ids.size(), d = c.dim;
  Rows x(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) x[i][j] = p.token_emb(ids[i], j) + p.pos_emb(i, j);

  const auto groups = naive_pool_groups(n, masked, c.pool_k);
  std::vector<std::size_t> rows_of_masked;
  for (std::size_t g = 0; g < groups.size(); ++g)
    if (std::find(masked.begin(), masked.end(), groups[g][0]) != masked.end())
      rows_of_masked.push_back(g);

  const auto pool = [&](const Rows& r) {
    Rows out;
    for (const auto& g : groups) {
      std::vector<double> mean(d, 0.0);
      for (std::size_t i : g)
        for (std::size_t j = 0; j < d; ++j) mean[j] += r[i][j] / static_cast<double>(g.size());
      out.push_back(mean);
    }
    return out;
  };

  const double scale = c.attn_scale ? 1.0 / std::sqrt(static_cast<double>(c.head_dim())) : 1.0;
  for (std::size_t l = 0; l < c.layers; ++l) {
    const LayerParams& lp = p.layers[l];
    const Rows kv = naive_layer_norm(x, lp.attn_ln_gain, lp.attn_ln_bias, eps);
    Rows q = kv;
    if (l == 0 && c.pool_k > 1) {
      q = pool(kv);
      x = pool(x);
    }
    const Rows att = to_rows(brute_force_attention(from_rows(q), from_rows(kv), lp, c.heads, scale));
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) x[i][j] += att[i][j];

    const Rows h = naive_layer_norm(x, lp.ffn_ln_gain, lp.ffn_ln_bias, eps);
    Rows pre = lp.w11.empty() ? naive_matmul(h, lp.w1) : naive_matmul(naive_matmul(h, lp.w11), lp.w12);
    for (auto& row : pre)
      for (double& v : row) v = gelu_scalar(v);
    const Rows out =
        lp.w11.empty() ? naive_matmul(pre, lp.w2) : naive_matmul(naive_matmul(pre, lp.w21), lp.w22);
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) x[i][j] += out[i][j];
  }

  Rows picked;
  for (std::size_t r : rows_of_masked) picked.push_back(x[r]);
  Rows logits = naive_matmul(picked, p.head_w);
  for (auto& row : logits)
    for (std::size_t v = 0; v < row.size(); ++v) row[v] += p.head_b[v];
  return from_rows(logits);
}

// Scalar AdamW written out directly from the update rule.
struct ScalarAdamW {
  double m = 0.0, v = 0.0;
  int t = 0;
  double step(double param, double grad, double lr, double b1, double b2, double eps, double wd) {
    ++t;
    m = b1 * m + (1 - b1) * grad;
    v = b2 * v + (1 - b2) * grad * grad;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    return param - lr * wd * param - lr * mh / (std::sqrt(vh) + eps);
  }
};

}  // namespace progrow::testing
