#include "progrow/model.hpp"

#include <charconv>

#include "progrow/errors.hpp"

namespace progrow {
namespace {

constexpr double kInitStddev = 0.02;

std::size_t parse_count(std::string_view text, std::string_view what) {
  std::size_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw UsageError("invalid " + std::string(what) + " '" + std::string(text) + "'");
  }
  return value;
}

void fill_normal(Tensor& t, Rng& rng) {
  for (double& v : t.data()) v = rng.truncated_normal(kInitStddev);
}

}  // namespace

std::string FfnMode::to_string() const {
  switch (kind) {
    case FfnKind::kFull:
      return "full";
    case FfnKind::kShared:
      return "shared:" + std::to_string(factor);
    case FfnKind::kFactorized:
      return "factorized:" + std::to_string(factor);
  }
  return "?";
}

FfnMode FfnMode::parse(std::string_view text) {
  if (text == "full") return full();
  const auto colon = text.find(':');
  if (colon != std::string_view::npos) {
    const auto head = text.substr(0, colon);
    const auto arg = text.substr(colon + 1);
    if (head == "shared") return shared(parse_count(arg, "sharing factor"));
    if (head == "factorized") return factorized(parse_count(arg, "factorization rank"));
  }
  throw UsageError("unknown ffn mode '" + std::string(text) +
                   "' (expected full, shared:<k> or factorized:<h>)");
}

std::size_t ModelConfig::ffn_width() const {
  return ffn.kind == FfnKind::kShared ? hidden / ffn.factor : hidden;
}

void ModelConfig::validate() const {
  const auto fail = [](const std::string& msg) { throw ValidationError(msg); };
  if (layers == 0) fail("model.L: must be at least 1");
  if (dim == 0) fail("model.D: must be at least 1");
  if (hidden == 0) fail("model.H: must be at least 1");
  if (heads == 0) fail("model.M: must be at least 1");
  if (max_len == 0) fail("model.N_max: must be at least 1");
  if (vocab < 2) fail("model.V: must be at least 2");
  if (dim % heads != 0) {
    fail("model.M: D=" + std::to_string(dim) + " is not divisible by M=" + std::to_string(heads));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("model.dropout: must be in [0, 1)");
  if (pool_k == 0) fail("model.pool_k: must be at least 1");
  switch (ffn.kind) {
    case FfnKind::kFull:
      break;
    case FfnKind::kShared:
      if (ffn.factor == 0 || hidden % ffn.factor != 0) {
        fail("model.ffn: shared(k) needs k >= 1 dividing H=" + std::to_string(hidden));
      }
      break;
    case FfnKind::kFactorized:
      if (ffn.factor == 0 || ffn.factor > std::min(dim, hidden)) {
        fail("model.ffn: factorized(h) needs 1 <= h <= min(D, H)=" +
             std::to_string(std::min(dim, hidden)));
      }
      break;
  }
}

std::size_t Params::tensor_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Tensor&) { ++n; });
  return n;
}

std::size_t Params::element_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

Params shaped_params(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.dim, h = config.hidden, v = config.vocab;
  Params p;
  p.token_emb = Tensor({v, d});
  p.pos_emb = Tensor({config.max_len, d});
  p.layers.resize(config.layers);
  for (auto& layer : p.layers) {
    layer.w_q = Tensor({d, d});
    layer.w_k_t = Tensor({d, d});
    layer.w_v1 = Tensor({d, d});
    layer.w_v2_t = Tensor({d, d});
    layer.attn_ln_gain = Tensor({d});
    layer.attn_ln_bias = Tensor({d});
    layer.ffn_ln_gain = Tensor({d});
    layer.ffn_ln_bias = Tensor({d});
    if (config.ffn.kind == FfnKind::kFactorized) {
      const std::size_t r = config.ffn.factor;
      layer.w11 = Tensor({d, r});
      layer.w12 = Tensor({r, h});
      layer.w21 = Tensor({h, r});
      layer.w22 = Tensor({r, d});
    } else {
      const std::size_t w = config.ffn_width();
      layer.w1 = Tensor({d, w});
      layer.w2 = Tensor({w, d});
    }
  }
  p.head_w = Tensor({d, v});
  p.head_b = Tensor({v});
  return p;
}

Params zeros_like(const Params& like) {
  Params z = like;
  z.for_each([](const std::string&, Tensor& t) {
    for (double& x : t.data()) x = 0.0;
  });
  return z;
}

Params init_params(const ModelConfig& config, Rng& rng) {
  Params p = shaped_params(config);
  p.for_each([&](const std::string& name, Tensor& t) {
    if (name.ends_with(".gain")) {
      for (double& x : t.data()) x = 1.0;
    } else if (!name.ends_with(".bias") && !name.ends_with(".b")) {
      fill_normal(t, rng);
    }
  });
  return p;
}

void audit_shapes(const Params& params, const ModelConfig& config) {
  const Params expected = shaped_params(config);
  if (params.layers.size() != expected.layers.size()) {
    throw ValidationError("params: " + std::to_string(params.layers.size()) +
                          " layers but config has L=" + std::to_string(config.layers));
  }
  std::vector<std::pair<std::string, Shape>> want, have;
  expected.for_each([&](const std::string& n, const Tensor& t) { want.emplace_back(n, t.shape()); });
  params.for_each([&](const std::string& n, const Tensor& t) { have.emplace_back(n, t.shape()); });
  const std::size_t common = std::min(want.size(), have.size());
  for (std::size_t i = 0; i < common; ++i) {
    if (want[i].first != have[i].first) {
      throw ValidationError("params: found tensor '" + have[i].first + "' where '" +
                            want[i].first + "' was expected for ffn mode " +
                            config.ffn.to_string());
    }
    if (want[i].second != have[i].second) {
      throw ValidationError("params: tensor '" + want[i].first + "' has shape " +
                            shape_string(have[i].second) + ", expected " +
                            shape_string(want[i].second));
    }
  }
  if (have.size() > common) {
    throw ValidationError("params: unexpected tensor '" + have[common].first + "'");
  }
  if (want.size() > common) {
    throw ValidationError("params: missing tensor '" + want[common].first + "'");
  }
}

ParamCount param_count(const ModelConfig& config) {
  config.validate();
  const std::uint64_t d = config.dim, h = config.hidden, v = config.vocab;
  ParamCount c;
  c.attention_per_layer = 4 * d * d;
  switch (config.ffn.kind) {
    case FfnKind::kFull:
      c.ffn_per_layer = 2 * d * h;
      break;
    case FfnKind::kShared:
      c.ffn_per_layer = 2 * d * (h / config.ffn.factor);
      break;
    case FfnKind::kFactorized:
      c.ffn_per_layer = 2 * config.ffn.factor * (d + h);
      break;
  }
  c.layer_norm_per_layer = 4 * d;
  c.embeddings = (v + config.max_len) * d;
  c.mlm_head = d * v + v;
  c.total = config.layers * (c.attention_per_layer + c.ffn_per_layer + c.layer_norm_per_layer) +
            c.embeddings + c.mlm_head;
  return c;
}

std::string describe_model(const ModelConfig& config) {
  std::string out = "L=" + std::to_string(config.layers) + " D=" + std::to_string(config.dim) +
                    " H=" + std::to_string(config.hidden) + " M=" + std::to_string(config.heads) +
                    " ffn=" + config.ffn.to_string();
  if (config.pool_k > 1) out += " pool=" + std::to_string(config.pool_k);
  return out;
}

}  // namespace progrow
