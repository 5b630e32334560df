#include "progrow/growth.hpp"

#include <algorithm>
#include <charconv>

#include "progrow/errors.hpp"
#include "progrow/ops.hpp"

namespace progrow {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::size_t parse_positive(std::string_view text, std::string_view token) {
  std::size_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end || value == 0) {
    throw UsageError("growth op '" + std::string(token) + "': '" + std::string(text) +
                     "' is not a positive integer");
  }
  return value;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

GrowthOp parse_one(std::string_view token) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto colon = token.find(':', start);
    parts.push_back(token.substr(start, colon - start));
    if (colon == std::string_view::npos) break;
    start = colon + 1;
  }
  const auto& kind = parts[0];
  if (kind == "stack" && parts.size() == 2) return StackDepth{parse_positive(parts[1], token)};
  if (kind == "unshare" && parts.size() == 1) return UnshareFfn{};
  if (kind == "defactorize" && parts.size() == 1) return DefactorizeFfn{};
  if (kind == "unpool" && parts.size() == 1) return Unpool{};
  if (kind == "extend" && parts.size() == 3) {
    std::size_t masks = 0;
    const auto* end = parts[2].data() + parts[2].size();
    const auto [ptr, ec] = std::from_chars(parts[2].data(), end, masks);
    if (parts[2].empty() || ec != std::errc() || ptr != end) {
      throw UsageError("growth op '" + std::string(token) + "': bad mask count");
    }
    return ExtendLength{parse_positive(parts[1], token), masks};
  }
  throw UsageError("unknown growth op '" + std::string(token) +
                   "' (expected stack:<L>, unshare, defactorize, unpool, extend:<len>:<masks>)");
}

// Depth first, then width, then length.
int op_rank(const GrowthOp& op) {
  return std::visit(Overloaded{[](const StackDepth&) { return 0; },
                               [](const UnshareFfn&) { return 1; },
                               [](const DefactorizeFfn&) { return 1; },
                               [](const Unpool&) { return 2; },
                               [](const ExtendLength&) { return 2; }},
                    op);
}

std::vector<GrowthOp> ordered(std::span<const GrowthOp> ops) {
  std::vector<GrowthOp> sorted(ops.begin(), ops.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const GrowthOp& a, const GrowthOp& b) { return op_rank(a) < op_rank(b); });
  return sorted;
}

Tensor tile_columns(const Tensor& block, std::size_t copies) {
  Tensor out({block.rows(), block.cols() * copies});
  for (std::size_t c = 0; c < copies; ++c) set_column_block(out, c * block.cols(), block);
  return out;
}

Tensor tile_rows_scaled(const Tensor& block, std::size_t copies, double factor) {
  const std::size_t r = block.rows(), c = block.cols();
  Tensor out({r * copies, c});
  for (std::size_t k = 0; k < copies; ++k)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out(k * r + i, j) = block(i, j) * factor;
  return out;
}

ModelState apply_model_op(const GrowthOp& op, const ModelState& state) {
  return std::visit(
      Overloaded{
          [&](const StackDepth& s) {
            return grow_depth_stack(state.params, state.config, s.target_layers);
          },
          [&](const UnshareFfn&) { return grow_ffn_unshare(state.params, state.config); },
          [&](const DefactorizeFfn&) { return grow_ffn_defactorize(state.params, state.config); },
          [&](const Unpool&) { return grow_remove_pooling(state.params, state.config); },
          [&](const ExtendLength&) { return state; }},
      op);
}

}  // namespace

std::vector<GrowthOp> parse_growth_ops(std::string_view spec) {
  std::vector<GrowthOp> ops;
  spec = trim(spec);
  if (spec.empty()) return ops;
  std::size_t start = 0;
  while (true) {
    const auto comma = spec.find(',', start);
    const auto token = trim(spec.substr(start, comma - start));
    if (token.empty()) throw UsageError("empty growth op in '" + std::string(spec) + "'");
    ops.push_back(parse_one(token));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return ops;
}

std::string to_string(const GrowthOp& op) {
  return std::visit(
      Overloaded{[](const StackDepth& s) { return "stack:" + std::to_string(s.target_layers); },
                 [](const UnshareFfn&) { return std::string("unshare"); },
                 [](const DefactorizeFfn&) { return std::string("defactorize"); },
                 [](const Unpool&) { return std::string("unpool"); },
                 [](const ExtendLength& e) {
                   return "extend:" + std::to_string(e.train_len) + ":" +
                          std::to_string(e.masks_per_seq);
                 }},
      op);
}

std::string to_string(std::span<const GrowthOp> ops) {
  std::string out;
  for (const auto& op : ops) {
    if (!out.empty()) out += ',';
    out += to_string(op);
  }
  return out;
}

bool is_function_preserving(const GrowthOp& op) {
  return std::holds_alternative<UnshareFfn>(op) || std::holds_alternative<DefactorizeFfn>(op) ||
         std::holds_alternative<ExtendLength>(op);
}

ModelState grow_depth_stack(const Params& params, const ModelConfig& config,
                            std::size_t target_layers) {
  if (target_layers == 0 || target_layers % config.layers != 0) {
    throw ParameterError("stack: target depth " + std::to_string(target_layers) +
                         " is not a positive multiple of L=" + std::to_string(config.layers));
  }
  ModelState out{config, params};
  out.config.layers = target_layers;
  out.params.layers.resize(target_layers);
  for (std::size_t l = config.layers; l < target_layers; ++l)
    out.params.layers[l] = params.layers[l % config.layers];
  return out;
}

ModelState grow_ffn_unshare(const Params& params, const ModelConfig& config, double noise,
                            Rng* rng) {
  if (config.ffn.kind != FfnKind::kShared) {
    throw StateError("unshare: FFN mode is " + config.ffn.to_string() + ", expected shared:<k>");
  }
  if (noise > 0.0 && rng == nullptr) throw ParameterError("unshare: noise requires an rng");
  const std::size_t k = config.ffn.factor;
  ModelState out{config, params};
  out.config.ffn = FfnMode::full();
  for (auto& layer : out.params.layers) {
    layer.w1 = tile_columns(layer.w1, k);
    layer.w2 = tile_rows_scaled(layer.w2, k, 1.0 / static_cast<double>(k));
    if (noise > 0.0) {
      for (Tensor* t : {&layer.w1, &layer.w2})
        for (double& v : t->data()) v += noise * (2.0 * rng->uniform() - 1.0);
    }
  }
  return out;
}

ModelState grow_ffn_defactorize(const Params& params, const ModelConfig& config) {
  if (config.ffn.kind != FfnKind::kFactorized) {
    throw StateError("defactorize: FFN mode is " + config.ffn.to_string() +
                     ", expected factorized:<h>");
  }
  ModelState out{config, params};
  out.config.ffn = FfnMode::full();
  for (auto& layer : out.params.layers) {
    layer.w1 = matmul(layer.w11, layer.w12);
    layer.w2 = matmul(layer.w21, layer.w22);
    layer.w11 = layer.w12 = layer.w21 = layer.w22 = Tensor();
  }
  return out;
}

ModelState grow_remove_pooling(const Params& params, const ModelConfig& config) {
  if (config.pool_k <= 1) {
    throw StateError("unpool: model has no embedding pooling (pool_k=" +
                     std::to_string(config.pool_k) + ")");
  }
  ModelState out{config, params};
  out.config.pool_k = 1;
  return out;
}

DataConfig extend_length(const DataConfig& data, std::size_t max_len, std::size_t new_train_len,
                         std::size_t new_masks_per_seq) {
  if (new_train_len > max_len) {
    throw ParameterError("extend: length " + std::to_string(new_train_len) + " exceeds N_max=" +
                         std::to_string(max_len));
  }
  if (new_train_len > data.seq_len_full) {
    throw ParameterError("extend: length " + std::to_string(new_train_len) +
                         " exceeds the corpus sequence length " +
                         std::to_string(data.seq_len_full));
  }
  if (new_train_len < data.train_len) {
    throw ParameterError("extend: length " + std::to_string(new_train_len) +
                         " is shorter than the current " + std::to_string(data.train_len));
  }
  if (new_masks_per_seq >= new_train_len) {
    throw ParameterError("extend: " + std::to_string(new_masks_per_seq) +
                         " masks must be fewer than length " + std::to_string(new_train_len));
  }
  DataConfig out = data;
  out.train_len = new_train_len;
  out.masks_per_seq = new_masks_per_seq;
  return out;
}

GrowthState apply_growth(std::span<const GrowthOp> ops, const GrowthState& state) {
  GrowthState out = state;
  for (const auto& op : ordered(ops)) {
    if (const auto* e = std::get_if<ExtendLength>(&op)) {
      out.data = extend_length(out.data, out.model.max_len, e->train_len, e->masks_per_seq);
      continue;
    }
    auto grown = apply_model_op(op, {out.model, out.params});
    out.model = std::move(grown.config);
    out.params = std::move(grown.params);
  }
  return out;
}

void apply_growth_to_config(std::span<const GrowthOp> ops, ModelConfig& model, DataConfig& data) {
  for (const auto& op : ordered(ops)) {
    std::visit(Overloaded{[&](const StackDepth& s) {
                            if (s.target_layers == 0 || s.target_layers % model.layers != 0) {
                              throw ParameterError("stack: target depth " +
                                                   std::to_string(s.target_layers) +
                                                   " is not a positive multiple of L=" +
                                                   std::to_string(model.layers));
                            }
                            model.layers = s.target_layers;
                          },
                          [&](const UnshareFfn&) {
                            if (model.ffn.kind != FfnKind::kShared) {
                              throw StateError("unshare: FFN mode is " + model.ffn.to_string() +
                                               ", expected shared:<k>");
                            }
                            model.ffn = FfnMode::full();
                          },
                          [&](const DefactorizeFfn&) {
                            if (model.ffn.kind != FfnKind::kFactorized) {
                              throw StateError("defactorize: FFN mode is " +
                                               model.ffn.to_string() +
                                               ", expected factorized:<h>");
                            }
                            model.ffn = FfnMode::full();
                          },
                          [&](const Unpool&) {
                            if (model.pool_k <= 1) {
                              throw StateError("unpool: model has no embedding pooling");
                            }
                            model.pool_k = 1;
                          },
                          [&](const ExtendLength& e) {
                            data = extend_length(data, model.max_len, e.train_len,
                                                 e.masks_per_seq);
                          }},
               op);
  }
}

PreservationReport verify_function_preserving(const Params& params, const ModelConfig& config,
                                              std::span<const GrowthOp> ops, const MlmBatch& probe,
                                              double tol) {
  ModelState grown{config, params};
  for (const auto& op : ordered(ops)) grown = apply_model_op(op, grown);

  PreservationReport report;
  report.preservation_class = std::all_of(ops.begin(), ops.end(), is_function_preserving);
  Rng unused(0);
  for (const auto& ex : probe) {
    const auto before =
        encoder_forward(ex.input_ids, ex.masked_positions, params, config, unused, false);
    const auto after = encoder_forward(ex.input_ids, ex.masked_positions, grown.params,
                                       grown.config, unused, false);
    report.max_abs_diff = std::max(report.max_abs_diff, max_abs_diff(before.logits, after.logits));
    if (before.hidden.same_shape(after.hidden)) {
      report.max_abs_diff =
          std::max(report.max_abs_diff, max_abs_diff(before.hidden, after.hidden));
    }
  }
  report.pass = !report.preservation_class || report.max_abs_diff <= tol;
  return report;
}

}  // namespace progrow
