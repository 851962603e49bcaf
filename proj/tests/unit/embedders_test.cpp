#include <algorithm>

#include <gtest/gtest.h>

#include "embcurate/embedders.hpp"
#include "embcurate/error.hpp"
#include "embcurate/parallel.hpp"
#include "test_util.hpp"

using namespace embcurate;

namespace {
TokenEmbeddingTable table(std::size_t vocab, std::size_t dim, std::uint64_t seed) {
  return TokenEmbeddingTable(test_util::gaussian_matrix(vocab, dim, seed));
}
}  // namespace

TEST(BagOfTokens, SingleTokenIsItsRow) {
  const auto t = table(20, 5, 1);
  const std::vector<TokenId> tokens{7};
  const auto v = embed_bag_of_tokens(tokens, t);
  EXPECT_TRUE(std::equal(v.begin(), v.end(), t.row(7).begin()));
}

TEST(BagOfTokens, TwoTokenMean) {
  const auto t = table(20, 5, 2);
  const std::vector<TokenId> tokens{3, 11};
  const auto v = embed_bag_of_tokens(tokens, t);
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_FLOAT_EQ(v[j], static_cast<float>((static_cast<double>(t.row(3)[j]) + t.row(11)[j]) / 2.0));
  }
}

TEST(BagOfTokens, PermutationInvarianceIsExact) {
  const auto t = table(100, 16, 3);
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TokenId> tokens(1 + rng.index(200));
    for (auto& x : tokens) x = static_cast<TokenId>(rng.index(100));
    auto shuffled = tokens;
    for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.index(i)]);
    EXPECT_EQ(embed_bag_of_tokens(tokens, t), embed_bag_of_tokens(shuffled, t));
  }
  EXPECT_EQ(embed_bag_of_tokens(std::vector<TokenId>{4, 5, 4}, t), embed_bag_of_tokens(std::vector<TokenId>{4, 4, 5}, t));
}

TEST(BagOfTokens, OutputInsideBoundingBoxOfRows) {
  const auto t = table(30, 8, 4);
  const std::vector<TokenId> tokens{1, 5, 5, 9, 29};
  const auto v = embed_bag_of_tokens(tokens, t);
  for (std::size_t j = 0; j < 8; ++j) {
    float lo = 1e30f, hi = -1e30f;
    for (auto tok : tokens) {
      lo = std::min(lo, t.row(tok)[j]);
      hi = std::max(hi, t.row(tok)[j]);
    }
    EXPECT_GE(v[j], lo);
    EXPECT_LE(v[j], hi);
  }
}

TEST(BagOfTokens, MaskAndErrors) {
  const auto t = table(10, 3, 5);
  EXPECT_THROW(embed_bag_of_tokens(std::vector<TokenId>{}, t), ValidationError);
  EXPECT_THROW(embed_bag_of_tokens(std::vector<TokenId>{10}, t), ValidationError);
  EXPECT_THROW(embed_bag_of_tokens(std::vector<TokenId>{1, 1}, t, TokenMask{{1}}), ValidationError);
  EXPECT_EQ(embed_bag_of_tokens(std::vector<TokenId>{1, 4, 0}, t, TokenMask{{0, 1}}),
            embed_bag_of_tokens(std::vector<TokenId>{4}, t));
}

TEST(PoolActivations, Examples) {
  EXPECT_EQ(pool_activations(EmbeddingMatrix(1, 2, {3.0f, -1.0f})), (std::vector<float>{3.0f, -1.0f}));
  EXPECT_EQ(pool_activations(EmbeddingMatrix(2, 2, {3.0f, -1.0f, 3.0f, -1.0f})), (std::vector<float>{3.0f, -1.0f}));
  EXPECT_EQ(pool_activations(EmbeddingMatrix(2, 2, {0.0f, 0.0f, 2.0f, 4.0f})), (std::vector<float>{1.0f, 2.0f}));
  const std::vector<std::uint8_t> mask{0, 1};
  EXPECT_EQ(pool_activations(EmbeddingMatrix(2, 2, {0.0f, 0.0f, 2.0f, 4.0f}), mask), (std::vector<float>{0.0f, 0.0f}));
  const std::vector<std::uint8_t> all{1, 1};
  EXPECT_THROW(pool_activations(EmbeddingMatrix(2, 2, {0.0f, 0.0f, 2.0f, 4.0f}), all), ValidationError);
}

TEST(EmbedCorpus, RowsMatchIndependentCallsAndThreadCounts) {
  const auto t = table(64, 12, 6);
  Rng rng(1);
  std::vector<TokenSequence> seqs(700);
  for (auto& s : seqs) {
    s.resize(1 + rng.index(40));
    for (auto& x : s) x = static_cast<TokenId>(rng.index(64));
  }
  seqs[5] = seqs[600];
  const unsigned saved = thread_count();
  set_thread_count(1);
  const auto one = embed_corpus(seqs, t);
  set_thread_count(4);
  const auto four = embed_corpus(seqs, t);
  set_thread_count(saved);
  EXPECT_EQ(one, four);
  ASSERT_EQ(one.rows(), seqs.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const auto v = embed_bag_of_tokens(seqs[i], t);
    ASSERT_TRUE(std::equal(v.begin(), v.end(), one.row(i).begin()));
  }
  EXPECT_EQ(squared_distance(one.row(5), one.row(600)), 0.0);
}

TEST(EmbedCorpus, ErrorNamesSequence) {
  const auto t = table(8, 2, 7);
  const std::vector<TokenSequence> seqs{{1}, {2}, {99}};
  try {
    embed_corpus(seqs, t);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("sequence 2"), std::string::npos);
  }
}
