#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "progrow/encoder.hpp"
#include "progrow/rng.hpp"
#include "progrow/tensor.hpp"

namespace progrow {

struct DataConfig {
  std::size_t vocab = 64;
  std::size_t corpus_size = 2048;
  std::size_t seq_len_full = 128;
  std::size_t train_len = 128;     // current truncation length
  std::size_t masks_per_seq = 19;
  TokenId mask_token = 63;         // never emitted by the generator
  int markov_order = 1;            // 0: i.i.d. tokens, 1: first-order chain
  std::uint64_t seed = 1;          // keys the transition matrix and the corpora
  std::size_t heldout_size = 128;

  // Throws ValidationError naming the offending "data.*" field.
  void validate() const;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

// Masked-token count keeping the ~14.8% rate of the 76-of-512 recipe:
// round(0.148 * len).
std::size_t default_mask_count(std::size_t train_len);

// Fixed-length token sequences stored contiguously.
class Corpus {
 public:
  Corpus(std::size_t seq_len, std::vector<TokenId> tokens);

  std::size_t size() const { return seq_len_ ? tokens_.size() / seq_len_ : 0; }
  std::size_t seq_len() const { return seq_len_; }
  std::span<const TokenId> sequence(std::size_t i) const;
  std::span<const TokenId> tokens() const { return tokens_; }

  friend bool operator==(const Corpus&, const Corpus&) = default;

 private:
  std::size_t seq_len_;
  std::vector<TokenId> tokens_;
};

// Generating distribution keyed by config.seed. Row a of the V x V matrix is
// P(next | a); for markov_order 0 every row equals the unigram
// distribution. Otherwise content tokens fall into seeded clusters of 8 and
// each token has at most 8 successors: members of its own cluster, plus one
// token of another cluster reached with probability 0.01. Sequences thus
// drift slowly between clusters. The mask token's row and column are zero.
Tensor transition_matrix(const DataConfig& config);
// Distribution of the first token of every sequence (uniform over content).
std::vector<double> initial_distribution(const DataConfig& config);

// config.corpus_size sequences of seq_len_full tokens drawn from `rng`.
Corpus gen_corpus(const DataConfig& config, Rng& rng, std::size_t count = 0);

// Fractions of masked positions replaced by the mask token and by a random
// token; the remainder keep the original token.
struct MaskSplit {
  double mask = 0.8;
  double random = 0.1;
};

// Chooses masks_per_seq distinct positions uniformly, corrupts them per
// `split`, and records the original tokens as targets.
MlmExample mask_tokens(std::span<const TokenId> sequence, std::size_t masks_per_seq,
                       const DataConfig& config, Rng& rng, MaskSplit split = {});

// First train_len tokens.
std::vector<TokenId> truncate(std::span<const TokenId> sequence, std::size_t train_len);

// Epoch-based sampler: each epoch is a fresh permutation of the corpus and
// batches are consecutive slices of the permutation stream, so every
// sequence is seen exactly once per epoch.
class BatchStream {
 public:
  BatchStream(const Corpus& corpus, Rng rng);

  // Draws the next batch_size sequences, truncates each to config.train_len
  // and masks config.masks_per_seq positions.
  MlmBatch make_batch(std::size_t batch_size, const DataConfig& config);
  std::vector<std::size_t> next_indices(std::size_t batch_size);

  std::size_t epoch() const { return epoch_; }
  RngState order_state() const { return order_rng_.state(); }
  RngState mask_state() const { return mask_rng_.state(); }

 private:
  void reshuffle();

  const Corpus* corpus_;
  Rng order_rng_;
  Rng mask_rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

// Deterministic probe batch: the first `count` sequences of `corpus`, masked
// with an Rng keyed by `seed`.
MlmBatch probe_batch(const Corpus& corpus, const DataConfig& config, std::size_t count,
                     std::uint64_t seed);

}  // namespace progrow
