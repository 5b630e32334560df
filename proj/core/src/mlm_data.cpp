#include "progrow/mlm_data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "progrow/errors.hpp"

namespace progrow {
namespace {

constexpr std::size_t kMaxSuccessors = 8;
// Probability of leaving the current cluster at each step.
constexpr double kBridgeMass = 0.01;

std::vector<TokenId> content_tokens(const DataConfig& config) {
  std::vector<TokenId> tokens;
  for (std::size_t t = 0; t < config.vocab; ++t) {
    if (static_cast<TokenId>(t) != config.mask_token) tokens.push_back(static_cast<TokenId>(t));
  }
  return tokens;
}

std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t last_nonzero = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last_nonzero = i;
    if (u < acc) return i;
  }
  return last_nonzero;
}

}  // namespace

void DataConfig::validate() const {
  const auto fail = [](const std::string& msg) { throw ValidationError(msg); };
  if (vocab < 3) fail("data.V: vocabulary needs at least 3 tokens");
  if (corpus_size == 0) fail("data.corpus_size: must be at least 1");
  if (seq_len_full == 0) fail("data.seq_len_full: must be at least 1");
  if (train_len == 0 || train_len > seq_len_full) {
    fail("data.train_len: must be in [1, seq_len_full=" + std::to_string(seq_len_full) + "]");
  }
  if (masks_per_seq >= train_len) {
    fail("data.masks: " + std::to_string(masks_per_seq) + " masks must be fewer than train_len=" +
         std::to_string(train_len));
  }
  if (mask_token < 0 || static_cast<std::size_t>(mask_token) >= vocab) {
    fail("data.mask_token: must be in [0, V)");
  }
  if (markov_order != 0 && markov_order != 1) fail("data.markov_order: must be 0 or 1");
}

std::size_t default_mask_count(std::size_t train_len) {
  return static_cast<std::size_t>(std::lround(0.148 * static_cast<double>(train_len)));
}

Corpus::Corpus(std::size_t seq_len, std::vector<TokenId> tokens)
    : seq_len_(seq_len), tokens_(std::move(tokens)) {
  if (seq_len_ == 0 || tokens_.size() % seq_len_ != 0) {
    throw InputError("Corpus: token count " + std::to_string(tokens_.size()) +
                     " is not a multiple of sequence length " + std::to_string(seq_len_));
  }
}

std::span<const TokenId> Corpus::sequence(std::size_t i) const {
  if (i >= size()) throw IndexError("Corpus: sequence " + std::to_string(i) + " out of range");
  return std::span<const TokenId>(tokens_).subspan(i * seq_len_, seq_len_);
}

Tensor transition_matrix(const DataConfig& config) {
  config.validate();
  const auto content = content_tokens(config);
  Rng rng = Rng(config.seed).fork("transitions");
  Tensor t({config.vocab, config.vocab});

  if (config.markov_order == 0) {
    std::vector<double> unigram(config.vocab, 0.0);
    double total = 0.0;
    for (TokenId tok : content) {
      unigram[static_cast<std::size_t>(tok)] = 0.1 + rng.uniform();
      total += unigram[static_cast<std::size_t>(tok)];
    }
    for (TokenId from : content)
      for (TokenId to : content)
        t(static_cast<std::size_t>(from), static_cast<std::size_t>(to)) =
            unigram[static_cast<std::size_t>(to)] / total;
    return t;
  }

  // Seeded clusters of kMaxSuccessors tokens. A token's successors are up to
  // kMaxSuccessors - 1 members of its own cluster plus one bridge token
  // elsewhere, so every row keeps at most kMaxSuccessors entries.
  std::vector<TokenId> shuffled = content;
  for (std::size_t i = 0; i + 1 < shuffled.size(); ++i) {
    std::swap(shuffled[i], shuffled[i + rng.uniform_index(shuffled.size() - i)]);
  }
  const std::size_t clusters = (shuffled.size() + kMaxSuccessors - 1) / kMaxSuccessors;
  const auto cluster_of = [&](std::size_t rank) { return rank % clusters; };

  for (std::size_t rank = 0; rank < shuffled.size(); ++rank) {
    const TokenId from = shuffled[rank];
    std::vector<TokenId> own, other;
    for (std::size_t j = 0; j < shuffled.size(); ++j)
      (cluster_of(j) == cluster_of(rank) ? own : other).push_back(shuffled[j]);
    const std::size_t fan_in = std::min(own.size(), other.empty() ? kMaxSuccessors : kMaxSuccessors - 1);
    for (std::size_t i = 0; i < fan_in; ++i) {
      std::swap(own[i], own[i + rng.uniform_index(own.size() - i)]);
    }
    std::vector<double> weights(fan_in);
    double total = 0.0;
    for (auto& w : weights) {
      w = 0.1 + rng.uniform();
      total += w;
    }
    const double stay = other.empty() ? 1.0 : 1.0 - kBridgeMass;
    const auto row = static_cast<std::size_t>(from);
    for (std::size_t i = 0; i < fan_in; ++i)
      t(row, static_cast<std::size_t>(own[i])) = stay * weights[i] / total;
    if (!other.empty()) {
      t(row, static_cast<std::size_t>(other[rng.uniform_index(other.size())])) = kBridgeMass;
    }
  }
  return t;
}

std::vector<double> initial_distribution(const DataConfig& config) {
  const auto content = content_tokens(config);
  std::vector<double> p(config.vocab, 0.0);
  for (TokenId tok : content) p[static_cast<std::size_t>(tok)] = 1.0 / static_cast<double>(content.size());
  return p;
}

Corpus gen_corpus(const DataConfig& config, Rng& rng, std::size_t count) {
  config.validate();
  if (count == 0) count = config.corpus_size;
  const Tensor trans = transition_matrix(config);
  const auto start = initial_distribution(config);
  std::vector<TokenId> tokens;
  tokens.reserve(count * config.seq_len_full);
  for (std::size_t s = 0; s < count; ++s) {
    std::size_t prev = sample_categorical(start, rng);
    tokens.push_back(static_cast<TokenId>(prev));
    for (std::size_t i = 1; i < config.seq_len_full; ++i) {
      prev = sample_categorical(trans.row(prev), rng);
      tokens.push_back(static_cast<TokenId>(prev));
    }
  }
  return Corpus(config.seq_len_full, std::move(tokens));
}

MlmExample mask_tokens(std::span<const TokenId> sequence, std::size_t masks_per_seq,
                       const DataConfig& config, Rng& rng, MaskSplit split) {
  const std::size_t n = sequence.size();
  if (masks_per_seq > n) {
    throw InputError("mask_tokens: " + std::to_string(masks_per_seq) +
                     " masks requested for a sequence of length " + std::to_string(n));
  }
  std::vector<std::size_t> positions(n);
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  for (std::size_t i = 0; i < masks_per_seq; ++i) {
    std::swap(positions[i], positions[i + rng.uniform_index(n - i)]);
  }
  positions.resize(masks_per_seq);
  std::sort(positions.begin(), positions.end());

  const auto content = content_tokens(config);
  MlmExample ex;
  ex.input_ids.assign(sequence.begin(), sequence.end());
  ex.masked_positions = positions;
  ex.targets.reserve(masks_per_seq);
  for (std::size_t pos : positions) {
    ex.targets.push_back(sequence[pos]);
    const double r = rng.uniform();
    if (r < split.mask) {
      ex.input_ids[pos] = config.mask_token;
    } else if (r < split.mask + split.random) {
      ex.input_ids[pos] = content[rng.uniform_index(content.size())];
    }
  }
  return ex;
}

std::vector<TokenId> truncate(std::span<const TokenId> sequence, std::size_t train_len) {
  const std::size_t n = std::min(train_len, sequence.size());
  return {sequence.begin(), sequence.begin() + static_cast<std::ptrdiff_t>(n)};
}

BatchStream::BatchStream(const Corpus& corpus, Rng rng)
    : corpus_(&corpus), order_rng_(rng.fork("order")), mask_rng_(rng.fork("mask")) {
  if (corpus.size() == 0) throw InputError("BatchStream: empty corpus");
  reshuffle();
}

void BatchStream::reshuffle() {
  order_.resize(corpus_->size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  for (std::size_t i = order_.size(); i > 1; --i) {
    std::swap(order_[i - 1], order_[order_rng_.uniform_index(i)]);
  }
  cursor_ = 0;
}

std::vector<std::size_t> BatchStream::next_indices(std::size_t batch_size) {
  if (batch_size == 0) throw ParameterError("make_batch: batch_size must be at least 1");
  std::vector<std::size_t> indices;
  indices.reserve(batch_size);
  while (indices.size() < batch_size) {
    if (cursor_ == order_.size()) {
      ++epoch_;
      reshuffle();
    }
    indices.push_back(order_[cursor_++]);
  }
  return indices;
}

MlmBatch BatchStream::make_batch(std::size_t batch_size, const DataConfig& config) {
  MlmBatch batch;
  for (std::size_t idx : next_indices(batch_size)) {
    const auto seq = truncate(corpus_->sequence(idx), config.train_len);
    batch.push_back(mask_tokens(seq, config.masks_per_seq, config, mask_rng_));
  }
  return batch;
}

MlmBatch probe_batch(const Corpus& corpus, const DataConfig& config, std::size_t count,
                     std::uint64_t seed) {
  if (corpus.size() == 0) throw InputError("probe_batch: empty corpus");
  Rng rng = Rng(seed).fork("probe");
  MlmBatch batch;
  for (std::size_t i = 0; i < count; ++i) {
    const auto seq = truncate(corpus.sequence(i % corpus.size()), config.train_len);
    batch.push_back(mask_tokens(seq, config.masks_per_seq, config, rng));
  }
  return batch;
}

}  // namespace progrow
