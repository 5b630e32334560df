#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "progrow/errors.hpp"
#include "progrow/mlm_data.hpp"

namespace progrow {
namespace {

DataConfig small_data() {
  DataConfig d;
  d.vocab = 16;
  d.mask_token = 15;
  d.corpus_size = 40;
  d.seq_len_full = 24;
  d.train_len = 12;
  d.masks_per_seq = 3;
  d.heldout_size = 8;
  return d;
}

double three_sigma(double n, double p) { return 3.0 * std::sqrt(n * p * (1.0 - p)); }

TEST(Corpus, SameSeedSameCorpus) {
  const DataConfig d = small_data();
  Rng a(5), b(5), c(6);
  const Corpus x = gen_corpus(d, a), y = gen_corpus(d, b), z = gen_corpus(d, c);
  EXPECT_EQ(x, y);
  EXPECT_NE(x, z);
  EXPECT_EQ(x.size(), d.corpus_size);
  EXPECT_EQ(x.seq_len(), d.seq_len_full);
  for (TokenId t : x.tokens()) {
    EXPECT_GE(t, 0);
    EXPECT_LT(t, static_cast<TokenId>(d.vocab));
    EXPECT_NE(t, d.mask_token);
  }
}

TEST(Corpus, TransitionMatrixSparseAndStochastic) {
  const DataConfig d = small_data();
  const Tensor p = transition_matrix(d);
  ASSERT_EQ(p.shape(), (Shape{16, 16}));
  for (std::size_t a = 0; a < 16; ++a) {
    double row = 0.0;
    std::size_t support = 0;
    for (std::size_t b = 0; b < 16; ++b) {
      row += p(a, b);
      if (p(a, b) > 0.0) ++support;
      if (static_cast<TokenId>(b) == d.mask_token) EXPECT_EQ(p(a, b), 0.0);
    }
    if (static_cast<TokenId>(a) == d.mask_token) {
      EXPECT_EQ(row, 0.0);
    } else {
      EXPECT_NEAR(row, 1.0, 1e-12);
      EXPECT_LE(support, 8u);
      EXPECT_GE(support, 1u);
    }
  }
}

// Empirical bigram counts against the generating matrix at >= 1e5 tokens.
TEST(Corpus, BigramStatisticsMatchGenerator) {
  DataConfig d;
  d.vocab = 4;
  d.mask_token = 3;
  d.seq_len_full = 1000;
  d.train_len = 1000;
  d.masks_per_seq = 10;
  d.corpus_size = 100;
  Rng rng(11);
  const Corpus corpus = gen_corpus(d, rng);
  const Tensor p = transition_matrix(d);

  std::vector<std::vector<double>> counts(4, std::vector<double>(4, 0.0));
  std::vector<double> from(4, 0.0);
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    const auto seq = corpus.sequence(s);
    for (std::size_t i = 1; i < seq.size(); ++i) {
      counts[seq[i - 1]][seq[i]] += 1.0;
      from[seq[i - 1]] += 1.0;
    }
  }
  for (std::size_t a = 0; a < 3; ++a) {
    ASSERT_GT(from[a], 1000.0);
    for (std::size_t b = 0; b < 4; ++b) {
      const double expected = from[a] * p(a, b);
      EXPECT_NEAR(counts[a][b], expected, three_sigma(from[a], p(a, b)) + 1e-9)
          << a << "->" << b;
    }
  }
}

TEST(Corpus, OrderZeroIsIid) {
  DataConfig d = small_data();
  d.markov_order = 0;
  d.seq_len_full = 1000;
  d.train_len = 100;
  d.corpus_size = 100;
  const Tensor p = transition_matrix(d);
  for (std::size_t a = 1; a < 15; ++a)
    for (std::size_t b = 0; b < 16; ++b) EXPECT_EQ(p(a, b), p(0, b));

  Rng rng(12);
  const Corpus corpus = gen_corpus(d, rng);
  std::vector<double> hits(16, 0.0);
  for (TokenId t : corpus.tokens()) hits[t] += 1.0;
  const double n = static_cast<double>(corpus.tokens().size());
  // The first token of each sequence is uniform, the rest follow the
  // unigram row; 1% of tokens do not move the 3-sigma band noticeably.
  for (std::size_t b = 0; b < 16; ++b)
    EXPECT_NEAR(hits[b], n * p(0, b), three_sigma(n, p(0, b)) + 0.01 * n / 16.0) << b;
}

TEST(MaskTokens, ZeroMasksLeavesInput) {
  const DataConfig d = small_data();
  const std::vector<TokenId> seq{1, 2, 3, 4};
  Rng rng(1);
  const auto ex = mask_tokens(seq, 0, d, rng);
  EXPECT_EQ(ex.input_ids, seq);
  EXPECT_TRUE(ex.targets.empty());
  EXPECT_TRUE(ex.masked_positions.empty());
}

TEST(MaskTokens, ForcedMaskBranchMasksEverything) {
  const DataConfig d = small_data();
  const std::vector<TokenId> seq{1, 2, 3, 4, 5};
  Rng rng(2);
  const auto ex = mask_tokens(seq, 5, d, rng, MaskSplit{1.0, 0.0});
  EXPECT_EQ(ex.input_ids, std::vector<TokenId>(5, d.mask_token));
  EXPECT_EQ(ex.targets, seq);
  EXPECT_EQ(ex.masked_positions, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(MaskTokens, TooManyMasksIsInputError) {
  const DataConfig d = small_data();
  const std::vector<TokenId> seq{1, 2};
  Rng rng(3);
  EXPECT_THROW(mask_tokens(seq, 3, d, rng), InputError);
}

TEST(MaskTokens, ReplacementFractionsWithinThreeSigma) {
  DataConfig d;  // V = 64, mask token 63, 63 content tokens
  const std::vector<TokenId> seq(10, 7);
  Rng rng(4);
  double masked = 0, swapped = 0, kept = 0, total = 0;
  for (int draw = 0; draw < 10000; ++draw) {
    const auto ex = mask_tokens(seq, 1, d, rng);
    const TokenId got = ex.input_ids[ex.masked_positions[0]];
    total += 1;
    if (got == d.mask_token) masked += 1;
    else if (got != 7) swapped += 1;
    else kept += 1;
  }
  // A random replacement equals the original with probability 1/63.
  const double p_mask = 0.8, p_swap = 0.1 * 62.0 / 63.0, p_keep = 1.0 - p_mask - p_swap;
  EXPECT_NEAR(masked, total * p_mask, three_sigma(total, p_mask));
  EXPECT_NEAR(swapped, total * p_swap, three_sigma(total, p_swap));
  EXPECT_NEAR(kept, total * p_keep, three_sigma(total, p_keep));
}

TEST(MaskTokens, TargetsArePreMaskTokensAndPositionsUniform) {
  const DataConfig d = small_data();
  Rng rng(5);
  std::vector<double> hits(12, 0.0);
  const int draws = 6000;
  for (int i = 0; i < draws; ++i) {
    std::vector<TokenId> seq(12);
    for (auto& t : seq) t = static_cast<TokenId>(rng.uniform_index(15));
    const auto ex = mask_tokens(seq, 3, d, rng);
    ASSERT_EQ(ex.masked_positions.size(), 3u);
    EXPECT_TRUE(std::is_sorted(ex.masked_positions.begin(), ex.masked_positions.end()));
    EXPECT_EQ(std::set<std::size_t>(ex.masked_positions.begin(), ex.masked_positions.end()).size(), 3u);
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_EQ(ex.targets[j], seq[ex.masked_positions[j]]);
      hits[ex.masked_positions[j]] += 1.0;
    }
    for (std::size_t pos = 0; pos < 12; ++pos) {
      if (std::find(ex.masked_positions.begin(), ex.masked_positions.end(), pos) ==
          ex.masked_positions.end()) {
        EXPECT_EQ(ex.input_ids[pos], seq[pos]);
      }
    }
  }
  for (double h : hits) EXPECT_NEAR(h, draws * 0.25, three_sigma(draws, 0.25));
}

TEST(Truncate, Examples) {
  std::vector<TokenId> seq(512);
  for (std::size_t i = 0; i < seq.size(); ++i) seq[i] = static_cast<TokenId>(i % 50);
  const auto t = truncate(seq, 128);
  ASSERT_EQ(t.size(), 128u);
  EXPECT_TRUE(std::equal(t.begin(), t.end(), seq.begin()));
  EXPECT_EQ(truncate(seq, 600), seq);
  EXPECT_EQ(truncate(truncate(seq, 100), 100), truncate(seq, 100));
}

TEST(MaskRate, PresetPairsNearFifteenPercent) {
  EXPECT_EQ(default_mask_count(512), 76u);
  EXPECT_EQ(default_mask_count(128), 19u);
  EXPECT_EQ(default_mask_count(32), 5u);
  // A 20-of-128 count is within one token of the scaled rate.
  EXPECT_LE(std::abs(static_cast<double>(default_mask_count(128)) - 20.0), 1.0);
}

TEST(BatchStream, SameSeedSameBatches) {
  const DataConfig d = small_data();
  Rng rng(6);
  const Corpus corpus = gen_corpus(d, rng);
  BatchStream a(corpus, Rng(9)), b(corpus, Rng(9));
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.make_batch(7, d), b.make_batch(7, d));
  EXPECT_EQ(a.order_state(), b.order_state());
  EXPECT_EQ(a.mask_state(), b.mask_state());
}

TEST(BatchStream, EachEpochPartitionsCorpus) {
  const DataConfig d = small_data();
  Rng rng(7);
  const Corpus corpus = gen_corpus(d, rng);
  BatchStream stream(corpus, Rng(10));
  for (int epoch = 0; epoch < 3; ++epoch) {
    std::multiset<std::size_t> seen;
    for (int b = 0; b < 5; ++b) {
      const auto idx = stream.next_indices(8);  // 5 x 8 = 40 = corpus size
      seen.insert(idx.begin(), idx.end());
    }
    std::multiset<std::size_t> all;
    for (std::size_t i = 0; i < corpus.size(); ++i) all.insert(i);
    EXPECT_EQ(seen, all) << "epoch " << epoch;
  }
}

TEST(BatchStream, BatchShapeFollowsConfig) {
  DataConfig d = small_data();
  Rng rng(8);
  const Corpus corpus = gen_corpus(d, rng);
  BatchStream stream(corpus, Rng(11));
  for (const auto& ex : stream.make_batch(6, d)) {
    EXPECT_EQ(ex.input_ids.size(), d.train_len);
    EXPECT_EQ(ex.masked_positions.size(), d.masks_per_seq);
    EXPECT_EQ(ex.targets.size(), d.masks_per_seq);
  }
  EXPECT_THROW(stream.make_batch(0, d), ParameterError);
}

TEST(ProbeBatch, DeterministicPerSeed) {
  const DataConfig d = small_data();
  Rng rng(9);
  const Corpus corpus = gen_corpus(d, rng);
  EXPECT_EQ(probe_batch(corpus, d, 4, 1), probe_batch(corpus, d, 4, 1));
  EXPECT_NE(probe_batch(corpus, d, 4, 1), probe_batch(corpus, d, 4, 2));
  EXPECT_EQ(probe_batch(corpus, d, 4, 1).size(), 4u);
}

TEST(DataConfig, ValidationNamesField) {
  DataConfig d = small_data();
  d.train_len = 30;
  try {
    d.validate();
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("data.train_len"), std::string::npos) << e.what();
  }
  d = small_data();
  d.masks_per_seq = d.train_len;
  EXPECT_THROW(d.validate(), ValidationError);
  d = small_data();
  d.mask_token = 16;
  EXPECT_THROW(d.validate(), ValidationError);
}

}  // namespace
}  // namespace progrow
