#pragma once

// JSON field access with path-qualified validation errors. Private to the
// library; the public headers stay free of the JSON dependency.

#include <cstdint>
#include <initializer_list>
#include <string>

#include "json.hpp"
#include "progrow/errors.hpp"
#include "progrow/mlm_data.hpp"
#include "progrow/model.hpp"

namespace progrow::detail {

using json = nlohmann::json;

[[noreturn]] inline void fail_at(const std::string& path, const std::string& msg) {
  throw ValidationError(path + ": " + msg);
}

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline const json& require_object(const json& j, const std::string& path) {
  if (!j.is_object()) fail_at(path, "expected an object");
  return j;
}

inline void reject_unknown(const json& obj, const std::string& path,
                           std::initializer_list<const char*> allowed) {
  for (const auto& [key, _] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) fail_at(join(path, key), "unknown key");
  }
}

inline std::uint64_t get_uint(const json& obj, const std::string& path, const char* key,
                              std::uint64_t fallback, bool required = false,
                              std::uint64_t min = 0) {
  const auto it = obj.find(key);
  if (it == obj.end()) {
    if (required) fail_at(join(path, key), "missing required field");
    return fallback;
  }
  if (!it->is_number_integer() || (it->is_number_integer() && !it->is_number_unsigned() &&
                                   it->get<std::int64_t>() < 0)) {
    fail_at(join(path, key), "expected a non-negative integer");
  }
  const auto v = it->get<std::uint64_t>();
  if (v < min) fail_at(join(path, key), "must be at least " + std::to_string(min));
  return v;
}

inline double get_real(const json& obj, const std::string& path, const char* key, double fallback) {
  const auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_number()) fail_at(join(path, key), "expected a number");
  return it->get<double>();
}

inline bool get_bool(const json& obj, const std::string& path, const char* key, bool fallback) {
  const auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_boolean()) fail_at(join(path, key), "expected true or false");
  return it->get<bool>();
}

inline std::string get_string(const json& obj, const std::string& path, const char* key,
                              const std::string& fallback) {
  const auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_string()) fail_at(join(path, key), "expected a string");
  return it->get<std::string>();
}

inline json model_to_json(const ModelConfig& m) {
  return json{{"L", m.layers},        {"D", m.dim},         {"H", m.hidden},
              {"M", m.heads},         {"N_max", m.max_len}, {"V", m.vocab},
              {"dropout", m.dropout}, {"attn_scale", m.attn_scale},
              {"ffn", m.ffn.to_string()}, {"pool_k", m.pool_k}};
}

inline ModelConfig model_from_json(const json& j, const std::string& path) {
  require_object(j, path);
  reject_unknown(j, path,
                 {"L", "D", "H", "M", "N_max", "V", "dropout", "attn_scale", "ffn", "pool_k"});
  ModelConfig m;
  m.layers = get_uint(j, path, "L", 0, true, 1);
  m.dim = get_uint(j, path, "D", 0, true, 1);
  m.hidden = get_uint(j, path, "H", 0, true, 1);
  m.heads = get_uint(j, path, "M", 0, true, 1);
  m.max_len = get_uint(j, path, "N_max", 0, true, 1);
  m.vocab = get_uint(j, path, "V", 0, true, 2);
  m.dropout = get_real(j, path, "dropout", m.dropout);
  m.attn_scale = get_bool(j, path, "attn_scale", m.attn_scale);
  try {
    m.ffn = FfnMode::parse(get_string(j, path, "ffn", "full"));
  } catch (const UsageError& e) {
    fail_at(join(path, "ffn"), e.what());
  }
  m.pool_k = get_uint(j, path, "pool_k", 1, false, 1);
  try {
    m.validate();
  } catch (const ValidationError& e) {
    // validate() reports "model.<field>: ..."; re-root it under `path`.
    std::string msg = e.what();
    if (msg.rfind("model.", 0) == 0) msg = msg.substr(6);
    throw ValidationError(join(path, msg));
  }
  return m;
}

inline json data_to_json(const DataConfig& d) {
  return json{{"V", d.vocab},
              {"corpus_size", d.corpus_size},
              {"heldout_size", d.heldout_size},
              {"seq_len_full", d.seq_len_full},
              {"train_len", d.train_len},
              {"masks", d.masks_per_seq},
              {"mask_token", d.mask_token},
              {"markov_order", d.markov_order},
              {"seed", d.seed}};
}

// `vocab` comes from the model section when the data section omits "V".
inline DataConfig data_from_json(const json& j, const std::string& path, std::size_t vocab) {
  require_object(j, path);
  reject_unknown(j, path,
                 {"V", "corpus_size", "heldout_size", "seq_len_full", "train_len", "masks",
                  "mask_token", "markov_order", "seed"});
  DataConfig d;
  d.vocab = get_uint(j, path, "V", vocab, false, 3);
  d.corpus_size = get_uint(j, path, "corpus_size", d.corpus_size, false, 1);
  d.heldout_size = get_uint(j, path, "heldout_size", d.heldout_size, false, 1);
  d.seq_len_full = get_uint(j, path, "seq_len_full", d.seq_len_full, false, 1);
  d.train_len = get_uint(j, path, "train_len", d.seq_len_full, false, 1);
  d.masks_per_seq = get_uint(j, path, "masks", default_mask_count(d.train_len));
  d.mask_token = static_cast<TokenId>(get_uint(j, path, "mask_token", d.vocab - 1));
  d.markov_order = static_cast<int>(get_uint(j, path, "markov_order", 1));
  d.seed = get_uint(j, path, "seed", d.seed);
  try {
    d.validate();
  } catch (const ValidationError& e) {
    std::string msg = e.what();
    if (msg.rfind("data.", 0) == 0) msg = msg.substr(5);
    throw ValidationError(join(path, msg));
  }
  return d;
}

}  // namespace progrow::detail
