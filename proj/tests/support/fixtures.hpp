#pragma once

// Shared test fixtures: small configs, randomized parameters, batches.

#include <string>

#include "progrow/encoder.hpp"
#include "progrow/model.hpp"
#include "progrow/rng.hpp"

namespace progrow::testing {

inline ModelConfig tiny_config() {
  ModelConfig c;
  c.layers = 1;
  c.dim = 4;
  c.hidden = 8;
  c.heads = 2;
  c.max_len = 8;
  c.vocab = 5;
  c.dropout = 0.0;
  return c;
}

// Replaces every weight with uniform noise so gradients and growth checks
// are well away from zero; layer-norm gains stay near one.
inline Params random_params(const ModelConfig& c, std::uint64_t seed, double spread = 0.5) {
  Rng rng(seed);
  Params p = shaped_params(c);
  p.for_each([&](const std::string& name, Tensor& t) {
    for (double& v : t.data()) v = spread * (2.0 * rng.uniform() - 1.0);
    if (name.ends_with(".gain"))
      for (double& v : t.data()) v += 1.0;
  });
  return p;
}

// `count` sequences of length n with every third position masked.
inline MlmBatch random_batch(std::size_t count, std::size_t n, std::size_t vocab, Rng& rng) {
  MlmBatch batch;
  for (std::size_t b = 0; b < count; ++b) {
    MlmExample ex;
    for (std::size_t i = 0; i < n; ++i)
      ex.input_ids.push_back(static_cast<TokenId>(rng.uniform_index(vocab)));
    for (std::size_t pos = b % 3; pos < n; pos += 3) {
      ex.masked_positions.push_back(pos);
      ex.targets.push_back(static_cast<TokenId>(rng.uniform_index(vocab)));
    }
    batch.push_back(ex);
  }
  return batch;
}

}  // namespace progrow::testing
