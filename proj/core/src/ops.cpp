#include "progrow/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "progrow/errors.hpp"

namespace progrow {
namespace {

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " +
                         shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

[[noreturn]] void throw_inner_mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": cannot multiply " + shape_string(a.shape()) +
                       " by " + shape_string(b.shape()));
}

constexpr double kGeluCoeff = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);

// c (m x n) = sum over p of A(i, p) * b(p, j), with A(i, p) read at
// pa[i * si + p * sp]. Every c(i, j) accumulates from 0 in ascending p, so
// blocking changes speed only, never the bits.
void gemm_kernel(std::size_t m, std::size_t k, std::size_t n, const double* pa, std::size_t si,
                 std::size_t sp, const double* __restrict pb, double* __restrict pc) {
  constexpr std::size_t kRows = 4, kCols = 4;
  std::size_t i = 0;
  for (; i + kRows <= m; i += kRows) {
    std::size_t j = 0;
    for (; j + kCols <= n; j += kCols) {
      double acc[kRows][kCols] = {};
      for (std::size_t p = 0; p < k; ++p) {
        const double* brow = pb + p * n + j;
        for (std::size_t r = 0; r < kRows; ++r) {
          const double a = pa[(i + r) * si + p * sp];
          for (std::size_t c = 0; c < kCols; ++c) acc[r][c] += a * brow[c];
        }
      }
      for (std::size_t r = 0; r < kRows; ++r)
        for (std::size_t c = 0; c < kCols; ++c) pc[(i + r) * n + j + c] = acc[r][c];
    }
    for (; j < n; ++j) {
      for (std::size_t r = 0; r < kRows; ++r) {
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += pa[(i + r) * si + p * sp] * pb[p * n + j];
        pc[(i + r) * n + j] = acc;
      }
    }
  }
  for (; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double a = pa[i * si + p * sp];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) throw_inner_mismatch("matmul", a, b);
  Tensor c({m, n});
  gemm_kernel(m, k, n, a.data().data(), k, 1, b.data().data(), c.data().data());
  return c;
}

Tensor matmul_at_b(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_at_b");
  require_rank2(b, "matmul_at_b");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != m) throw_inner_mismatch("matmul_at_b", a, b);
  Tensor c({k, n});
  gemm_kernel(k, m, n, a.data().data(), 1, k, b.data().data(), c.data().data());
  return c;
}

Tensor matmul_a_bt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_a_bt");
  require_rank2(b, "matmul_a_bt");
  if (a.cols() != b.cols()) throw_inner_mismatch("matmul_a_bt", a, b);
  return matmul(a, transpose(b));
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor t({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t(j, i) = a(i, j);
  return t;
}

MatmulGrads matmul_backward(const Tensor& a, const Tensor& b, const Tensor& g) {
  if (g.rank() != 2 || g.rows() != a.rows() || g.cols() != b.cols()) {
    throw DimensionError("matmul_backward: upstream gradient " + shape_string(g.shape()) +
                         " does not match product of " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  return {matmul_a_bt(g, b), matmul_at_b(a, g)};
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  add_inplace(out, b);
  return out;
}

void add_inplace(Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) da[i] += db[i];
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = a;
  for (double& v : out.data()) v *= s;
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out = a;
  auto db = b.data();
  auto dout = out.data();
  for (std::size_t i = 0; i < dout.size(); ++i) dout[i] *= db[i];
  return out;
}

double sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return s;
}

Tensor column_block(const Tensor& a, std::size_t begin, std::size_t width) {
  require_rank2(a, "column_block");
  if (begin + width > a.cols()) {
    throw DimensionError("column_block: columns [" + std::to_string(begin) + ", " +
                         std::to_string(begin + width) + ") outside " + shape_string(a.shape()));
  }
  Tensor out({a.rows(), width});
  for (std::size_t i = 0; i < a.rows(); ++i)
    std::copy_n(a.row(i).begin() + static_cast<std::ptrdiff_t>(begin), width, out.row(i).begin());
  return out;
}

void set_column_block(Tensor& dst, std::size_t begin, const Tensor& block) {
  require_rank2(dst, "set_column_block");
  require_rank2(block, "set_column_block");
  if (block.rows() != dst.rows() || begin + block.cols() > dst.cols()) {
    throw DimensionError("set_column_block: block " + shape_string(block.shape()) +
                         " does not fit " + shape_string(dst.shape()));
  }
  for (std::size_t i = 0; i < dst.rows(); ++i)
    std::copy(block.row(i).begin(), block.row(i).end(),
              dst.row(i).begin() + static_cast<std::ptrdiff_t>(begin));
}

void add_column_block(Tensor& dst, std::size_t begin, const Tensor& block) {
  require_rank2(dst, "add_column_block");
  require_rank2(block, "add_column_block");
  if (block.rows() != dst.rows() || begin + block.cols() > dst.cols()) {
    throw DimensionError("add_column_block: block " + shape_string(block.shape()) +
                         " does not fit " + shape_string(dst.shape()));
  }
  for (std::size_t i = 0; i < dst.rows(); ++i) {
    auto src = block.row(i);
    auto out = dst.row(i);
    for (std::size_t j = 0; j < src.size(); ++j) out[begin + j] += src[j];
  }
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  require_rank2(a, "gather_rows");
  Tensor out({rows.size(), a.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= a.rows()) {
      throw IndexError("gather_rows: row " + std::to_string(rows[i]) + " outside " +
                       shape_string(a.shape()));
    }
    std::copy(a.row(rows[i]).begin(), a.row(rows[i]).end(), out.row(i).begin());
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  require_rank2(x, "softmax_rows");
  Tensor y = x;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto r = y.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double total = 0.0;
    for (double& v : r) {
      v = std::exp(v - mx);
      total += v;
    }
    for (double& v : r) v /= total;
  }
  return y;
}

Tensor softmax_rows_backward(const Tensor& y, const Tensor& g) {
  require_same_shape(y, g, "softmax_rows_backward");
  Tensor dx({y.rows(), y.cols()});
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto yr = y.row(i);
    auto gr = g.row(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < yr.size(); ++j) dot += yr[j] * gr[j];
    auto out = dx.row(i);
    for (std::size_t j = 0; j < yr.size(); ++j) out[j] = yr[j] * (gr[j] - dot);
  }
  return dx;
}

Tensor gelu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data()) {
    const double u = kSqrt2OverPi * (v + kGeluCoeff * v * v * v);
    v = 0.5 * v * (1.0 + std::tanh(u));
  }
  return y;
}

Tensor gelu_backward(const Tensor& x, const Tensor& g) {
  require_same_shape(x, g, "gelu_backward");
  Tensor dx = g;
  auto xs = x.data();
  auto out = dx.data();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double v = xs[i];
    const double t = std::tanh(kSqrt2OverPi * (v + kGeluCoeff * v * v * v));
    const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluCoeff * v * v);
    out[i] *= 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
  }
  return dx;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_rank2(x, "layer_norm");
  const std::size_t n = x.cols();
  if (gain.size() != n || bias.size() != n) {
    throw DimensionError("layer_norm: gain " + shape_string(gain.shape()) + " / bias " +
                         shape_string(bias.shape()) + " do not match width " + std::to_string(n));
  }
  if (!(eps > 0.0)) throw ParameterError("layer_norm: eps must be positive");
  Tensor y({x.rows(), n});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto xr = x.row(i);
    double mean = 0.0;
    for (double v : xr) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    auto yr = y.row(i);
    for (std::size_t j = 0; j < n; ++j) yr[j] = (xr[j] - mean) * inv * gain[j] + bias[j];
  }
  return y;
}

LayerNormGrads layer_norm_backward(const Tensor& x, const Tensor& gain, double eps,
                                   const Tensor& g) {
  require_same_shape(x, g, "layer_norm_backward");
  const std::size_t n = x.cols();
  const double nn = static_cast<double>(n);
  LayerNormGrads out{Tensor({x.rows(), n}), Tensor({n}), Tensor({n})};
  std::vector<double> xhat(n), dxhat(n);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto xr = x.row(i);
    auto gr = g.row(i);
    double mean = 0.0;
    for (double v : xr) mean += v;
    mean /= nn;
    double var = 0.0;
    for (double v : xr) var += (v - mean) * (v - mean);
    var /= nn;
    const double inv = 1.0 / std::sqrt(var + eps);
    double sum_d = 0.0, sum_dx = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      xhat[j] = (xr[j] - mean) * inv;
      dxhat[j] = gr[j] * gain[j];
      out.dgain[j] += gr[j] * xhat[j];
      out.dbias[j] += gr[j];
      sum_d += dxhat[j];
      sum_dx += dxhat[j] * xhat[j];
    }
    auto dr = out.dx.row(i);
    for (std::size_t j = 0; j < n; ++j)
      dr[j] = inv * (dxhat[j] - sum_d / nn - xhat[j] * sum_dx / nn);
  }
  return out;
}

Tensor mean_pool_rows(const Tensor& x, std::size_t k) {
  require_rank2(x, "mean_pool_rows");
  if (k == 0) throw ParameterError("mean_pool_rows: k must be at least 1");
  if (k == 1) return x;
  std::vector<RowGroup> groups;
  for (std::size_t b = 0; b < x.rows(); b += k) groups.push_back({b, std::min(b + k, x.rows())});
  return pool_rows(x, groups);
}

Tensor pool_rows(const Tensor& x, std::span<const RowGroup> groups) {
  require_rank2(x, "pool_rows");
  Tensor out({groups.size(), x.cols()});
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto [b, e] = groups[i];
    if (b >= e || e > x.rows()) throw DimensionError("pool_rows: invalid row group");
    auto o = out.row(i);
    for (std::size_t r = b; r < e; ++r) {
      auto xr = x.row(r);
      for (std::size_t j = 0; j < o.size(); ++j) o[j] += xr[j];
    }
    const double inv = 1.0 / static_cast<double>(e - b);
    for (double& v : o) v *= inv;
  }
  return out;
}

Tensor pool_rows_backward(const Tensor& g, std::span<const RowGroup> groups,
                          std::size_t input_rows) {
  require_rank2(g, "pool_rows_backward");
  if (g.rows() != groups.size()) throw DimensionError("pool_rows_backward: group count mismatch");
  Tensor dx({input_rows, g.cols()});
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto [b, e] = groups[i];
    const double inv = 1.0 / static_cast<double>(e - b);
    auto gr = g.row(i);
    for (std::size_t r = b; r < e; ++r) {
      auto d = dx.row(r);
      for (std::size_t j = 0; j < d.size(); ++j) d[j] += gr[j] * inv;
    }
  }
  return dx;
}

Tensor dropout_mask(const Shape& shape, double p, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ParameterError("dropout: probability " + std::to_string(p) + " not in [0, 1)");
  }
  Tensor mask(shape, 1.0);
  if (p == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& v : mask.data()) v = rng.uniform() < p ? 0.0 : keep_scale;
  return mask;
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool training) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ParameterError("dropout: probability " + std::to_string(p) + " not in [0, 1)");
  }
  if (!training || p == 0.0) return x;
  return hadamard(x, dropout_mask(x.shape(), p, rng));
}

CrossEntropyResult cross_entropy_logits(const Tensor& logits, std::span<const TokenId> targets) {
  require_rank2(logits, "cross_entropy_logits");
  const std::size_t m = logits.rows(), v = logits.cols();
  if (targets.size() != m) {
    throw DimensionError("cross_entropy_logits: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(m) + " rows");
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v) {
      throw IndexError("cross_entropy_logits: target " + std::to_string(targets[i]) +
                       " outside [0, " + std::to_string(v) + ")");
    }
  }
  CrossEntropyResult result{0.0, softmax_rows(logits)};
  if (m == 0) return result;
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    auto r = logits.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double total = 0.0;
    for (double z : r) total += std::exp(z - mx);
    const auto t = static_cast<std::size_t>(targets[i]);
    result.loss += (mx + std::log(total) - r[t]) * inv_m;
    auto gr = result.grad.row(i);
    gr[t] -= 1.0;
    for (double& gv : gr) gv *= inv_m;
  }
  return result;
}

}  // namespace progrow
