#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "embcurate/corpus_io.hpp"
#include "embcurate/matrix.hpp"

namespace embcurate {

/// vocab_size x dim token-embedding table (stored as an EMB1 matrix).
class TokenEmbeddingTable {
 public:
  explicit TokenEmbeddingTable(EmbeddingMatrix rows) : rows_(std::move(rows)) {}
  std::size_t vocab_size() const { return rows_.rows(); }
  std::size_t dim() const { return rows_.dim(); }
  std::span<const float> row(TokenId token) const { return rows_.row(token); }
  const EmbeddingMatrix& matrix() const { return rows_; }

 private:
  EmbeddingMatrix rows_;
};

/// Token ids left out of bag-of-tokens averages (e.g. eod and pad). Empty by
/// default: every token of the sequence is averaged.
struct TokenMask {
  std::vector<TokenId> excluded;
};

/// Mean of the table rows of `tokens`. Ids are sorted before summation so the
/// result is bit-identical under any permutation of the input.
std::vector<float> embed_bag_of_tokens(std::span<const TokenId> tokens, const TokenEmbeddingTable& table,
                                       const TokenMask& mask = {});

/// Mean of the activation rows whose `masked` flag is zero. An empty mask
/// averages every row.
std::vector<float> pool_activations(const EmbeddingMatrix& activations, std::span<const std::uint8_t> masked = {});

/// Row i = embed_bag_of_tokens(sequences[i]); errors name the sequence index.
EmbeddingMatrix embed_corpus(std::span<const TokenSequence> sequences, const TokenEmbeddingTable& table,
                             const TokenMask& mask = {});

}  // namespace embcurate
