#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "embcurate/matrix.hpp"

namespace embcurate {

/// Per-example metadata. Losses are keyed by checkpoint step.
struct ExampleRecord {
  std::uint64_t id = 0;
  std::uint32_t source = 0;
  std::uint64_t token_count = 0;
  std::map<std::int64_t, double> losses;

  bool operator==(const ExampleRecord&) const = default;
};

struct Corpus {
  std::vector<ExampleRecord> records;
  std::map<std::string, EmbeddingMatrix> embeddings;  // keyed by model tag
  std::vector<std::int64_t> checkpoint_steps;         // ascending

  /// Checks id uniqueness, embedding row counts, and that every record
  /// carrying losses has exactly `checkpoint_steps`.
  void validate() const;

  std::vector<std::uint64_t> ids() const;
  std::vector<std::uint32_t> sources() const;
  std::vector<std::uint64_t> token_counts() const;
  std::uint64_t total_tokens() const;
  /// Loss of every record at `step`; throws if any record lacks it.
  std::vector<double> losses_at(std::int64_t step) const;
};

/// Steps shared by all records that carry losses (ascending); throws when
/// records disagree.
std::vector<std::int64_t> collect_checkpoint_steps(std::span<const ExampleRecord> records);

// EMB1: "EMB1", u32 n, u32 d, n*d f32, all little-endian.
EmbeddingMatrix load_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& matrix);

// One JSON object per line: {"id", "source", "token_count", "losses": {"step": loss}}.
std::vector<ExampleRecord> load_metadata(const std::filesystem::path& path);
void save_metadata(const std::filesystem::path& path, std::span<const ExampleRecord> records);

/// Parses metadata from a string (one record per line); `origin` prefixes
/// error messages.
std::vector<ExampleRecord> parse_metadata(const std::string& text, const std::string& origin = "metadata");

using TokenId = std::uint32_t;
using TokenSequence = std::vector<TokenId>;

// Token documents: one JSON object per line, {"id": int, "tokens": [int, ...]}.
std::vector<TokenSequence> load_token_documents(const std::filesystem::path& path,
                                                std::vector<std::uint64_t>* ids = nullptr);
void save_token_documents(const std::filesystem::path& path, std::span<const TokenSequence> docs,
                          std::span<const std::uint64_t> ids = {});

/// Token range [start, end) of `doc` inside one packed sequence.
struct DocSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t doc = 0;
  bool operator==(const DocSpan&) const = default;
};

struct PackedSequence {
  TokenSequence tokens;
  std::vector<DocSpan> doc_spans;
};

struct PackingConfig {
  std::size_t seq_len = 1280;
  TokenId eod_token = 1;
  TokenId pad_token = 0;
};

/// Greedy in-order packing: each document is followed by one eod token, the
/// stream is cut every `seq_len` tokens (documents may straddle sequences),
/// and the last sequence is right-padded.
std::vector<PackedSequence> pack_documents(std::span<const TokenSequence> docs, const PackingConfig& config);

}  // namespace embcurate
