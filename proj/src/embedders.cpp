#include "embcurate/embedders.hpp"

#include <algorithm>
#include <string>

#include "embcurate/error.hpp"
#include "embcurate/parallel.hpp"

namespace embcurate {

std::vector<float> embed_bag_of_tokens(std::span<const TokenId> tokens, const TokenEmbeddingTable& table,
                                       const TokenMask& mask) {
  if (tokens.empty()) throw ValidationError("empty token list");
  std::vector<TokenId> sorted;
  sorted.reserve(tokens.size());
  for (TokenId t : tokens) {
    if (t >= table.vocab_size()) {
      throw ValidationError("token id " + std::to_string(t) + " out of vocabulary (size " +
                            std::to_string(table.vocab_size()) + ")");
    }
    if (std::find(mask.excluded.begin(), mask.excluded.end(), t) == mask.excluded.end()) sorted.push_back(t);
  }
  if (sorted.empty()) throw ValidationError("every token is masked");
  std::sort(sorted.begin(), sorted.end());

  std::vector<double> acc(table.dim(), 0.0);
  for (TokenId t : sorted) {
    const auto r = table.row(t);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += r[j];
  }
  std::vector<float> out(acc.size());
  const double inv = 1.0 / static_cast<double>(sorted.size());
  for (std::size_t j = 0; j < acc.size(); ++j) out[j] = static_cast<float>(acc[j] * inv);
  return out;
}

std::vector<float> pool_activations(const EmbeddingMatrix& activations, std::span<const std::uint8_t> masked) {
  if (!masked.empty() && masked.size() != activations.rows()) {
    throw ValidationError("mask has " + std::to_string(masked.size()) + " entries for " +
                          std::to_string(activations.rows()) + " tokens");
  }
  std::vector<double> acc(activations.dim(), 0.0);
  std::size_t used = 0;
  for (std::size_t i = 0; i < activations.rows(); ++i) {
    if (!masked.empty() && masked[i]) continue;
    const auto r = activations.row(i);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += r[j];
    ++used;
  }
  if (used == 0) throw ValidationError("all tokens masked");
  std::vector<float> out(acc.size());
  for (std::size_t j = 0; j < acc.size(); ++j) out[j] = static_cast<float>(acc[j] / static_cast<double>(used));
  return out;
}

EmbeddingMatrix embed_corpus(std::span<const TokenSequence> sequences, const TokenEmbeddingTable& table,
                             const TokenMask& mask) {
  if (sequences.empty()) throw ValidationError("no sequences to embed");
  EmbeddingMatrix out(sequences.size(), table.dim());
  parallel_for(0, sequences.size(), 256, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      std::vector<float> v;
      try {
        v = embed_bag_of_tokens(sequences[i], table, mask);
      } catch (const ValidationError& e) {
        throw ValidationError("sequence " + std::to_string(i) + ": " + e.what());
      }
      std::copy(v.begin(), v.end(), out.row(i).begin());
    }
  });
  return out;
}

}  // namespace embcurate
