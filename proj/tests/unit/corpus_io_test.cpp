#include <cmath>
#include <fstream>
#include <limits>

#include <gtest/gtest.h>

#include "embcurate/corpus_io.hpp"
#include "embcurate/error.hpp"
#include "test_util.hpp"

using namespace embcurate;

namespace {

void write_raw(const std::filesystem::path& p, std::uint32_t n, std::uint32_t d, std::size_t values, float fill = 1.0f) {
  std::ofstream out(p, std::ios::binary);
  out.write("EMB1", 4);
  out.write(reinterpret_cast<const char*>(&n), 4);
  out.write(reinterpret_cast<const char*>(&d), 4);
  for (std::size_t i = 0; i < values; ++i) out.write(reinterpret_cast<const char*>(&fill), 4);
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Embeddings, RoundTrip) {
  test_util::TempDir dir;
  const auto m = test_util::gaussian_matrix(2, 3, 1);
  save_embeddings(dir / "m.emb", m);
  EXPECT_EQ(load_embeddings(dir / "m.emb"), m);
  EXPECT_EQ(std::filesystem::file_size(dir / "m.emb"), 12u + 6 * 4);
}

TEST(Embeddings, RandomRoundTrips) {
  test_util::TempDir dir;
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng rng(s);
    const auto m = test_util::gaussian_matrix(1 + rng.index(40), 1 + rng.index(20), s, 100.0);
    save_embeddings(dir / "m.emb", m);
    EXPECT_EQ(load_embeddings(dir / "m.emb"), m);
  }
}

TEST(Embeddings, TruncatedPayload) {
  test_util::TempDir dir;
  write_raw(dir / "t.emb", 2, 3, 5);
  EXPECT_NE(error_of([&] { load_embeddings(dir / "t.emb"); }).find("truncated payload"), std::string::npos);
}

TEST(Embeddings, TrailingBytesAreASizeMismatch) {
  test_util::TempDir dir;
  write_raw(dir / "t.emb", 2, 3, 7);
  EXPECT_NE(error_of([&] { load_embeddings(dir / "t.emb"); }).find("size mismatch"), std::string::npos);
}

TEST(Embeddings, BadMagicAndShortHeader) {
  test_util::TempDir dir;
  {
    std::ofstream out(dir / "bad.emb", std::ios::binary);
    out << "EMB2xxxxxxxx";
  }
  EXPECT_NE(error_of([&] { load_embeddings(dir / "bad.emb"); }).find("malformed header"), std::string::npos);
  {
    std::ofstream out(dir / "short.emb", std::ios::binary);
    out << "EMB1\x01";
  }
  EXPECT_NE(error_of([&] { load_embeddings(dir / "short.emb"); }).find("malformed header"), std::string::npos);
  write_raw(dir / "zero.emb", 0, 3, 0);
  EXPECT_THROW(load_embeddings(dir / "zero.emb"), FormatError);
}

TEST(Embeddings, NonFiniteValueNamesRow) {
  test_util::TempDir dir;
  auto m = test_util::gaussian_matrix(10, 4, 2);
  std::vector<float> v(m.values().begin(), m.values().end());
  v[7 * 4 + 2] = std::numeric_limits<float>::quiet_NaN();
  {
    std::ofstream out(dir / "nan.emb", std::ios::binary);
    out.write("EMB1", 4);
    std::uint32_t n = 10, d = 4;
    out.write(reinterpret_cast<const char*>(&n), 4);
    out.write(reinterpret_cast<const char*>(&d), 4);
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 4));
  }
  EXPECT_NE(error_of([&] { load_embeddings(dir / "nan.emb"); }).find("row 7"), std::string::npos);
  EXPECT_THROW(EmbeddingMatrix(10, 4, v), ValidationError);
}

TEST(Metadata, ParsesRecordsInOrder) {
  const auto recs = parse_metadata(
      "{\"id\": 0, \"source\": 1, \"token_count\": 5, \"losses\": {\"100\": 2.5, \"200\": 2.0}}\n"
      "{\"id\": 1, \"source\": 0, \"token_count\": 7}\n");
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].id, 0u);
  EXPECT_EQ(recs[0].losses.at(200), 2.0);
  EXPECT_EQ(recs[1].token_count, 7u);
  EXPECT_TRUE(recs[1].losses.empty());
}

TEST(Metadata, Errors) {
  EXPECT_NE(error_of([] {
              parse_metadata("{\"id\":0,\"source\":0,\"token_count\":1}\n{\"id\":0,\"source\":0,\"token_count\":1}\n");
            }).find("duplicate id 0"),
            std::string::npos);
  EXPECT_THROW(parse_metadata("{\"id\":0,\"source\":0,\"token_count\":0}\n"), FormatError);
  EXPECT_NE(error_of([] { parse_metadata("{\"id\":0,\"token_count\":3}\n"); }).find("source"), std::string::npos);
  EXPECT_THROW(parse_metadata("{\"id\":0,\"source\":0,\"token_count\":3,\"losses\":{\"x\":1}}\n"), FormatError);
  EXPECT_THROW(parse_metadata("{\"id\":0,\"source\":0,\"token_count\":3,\"losses\":{\"5\":\"a\"}}\n"), FormatError);
  EXPECT_THROW(parse_metadata("not json\n"), FormatError);
}

TEST(Metadata, RoundTrip) {
  test_util::TempDir dir;
  std::vector<ExampleRecord> recs;
  Rng rng(3);
  for (std::uint64_t i = 0; i < 50; ++i) {
    ExampleRecord r{i * 3 + 1, static_cast<std::uint32_t>(rng.index(5)), 1 + rng.index(1000), {}};
    r.losses[2000] = rng.normal() * 1e3;
    r.losses[26000] = rng.uniform() / 7.0;
    recs.push_back(r);
  }
  save_metadata(dir / "m.jsonl", recs);
  EXPECT_EQ(load_metadata(dir / "m.jsonl"), recs);
}

TEST(CorpusTest, ValidateChecksCheckpointConsistency) {
  Corpus c;
  c.records = {{0, 0, 1, {{1, 1.0}}}, {1, 0, 1, {{2, 1.0}}}};
  EXPECT_THROW(collect_checkpoint_steps(c.records), ValidationError);
  c.checkpoint_steps = {1};
  EXPECT_THROW(c.validate(), ValidationError);
  c.records[1].losses = {{1, 3.0}};
  c.checkpoint_steps = collect_checkpoint_steps(c.records);
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.losses_at(1), (std::vector<double>{1.0, 3.0}));
  c.embeddings.emplace("m", EmbeddingMatrix(3, 2));
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Packing, SingleShortDocIsPadded) {
  const TokenId a = 7;
  PackingConfig cfg{4, 1, 0};
  const std::vector<TokenSequence> docs{{a}};
  const auto seqs = pack_documents(docs, cfg);
  ASSERT_EQ(seqs.size(), 1u);
  EXPECT_EQ(seqs[0].tokens, (TokenSequence{a, 1, 0, 0}));
  ASSERT_EQ(seqs[0].doc_spans.size(), 1u);
  EXPECT_EQ(seqs[0].doc_spans[0], (DocSpan{0, 1, 0}));
}

TEST(Packing, GreedyFill) {
  const TokenId a = 7, b = 8, c = 9;
  const std::vector<TokenSequence> docs{{a}, {b, c}};
  const auto seqs = pack_documents(docs, PackingConfig{5, 1, 0});
  ASSERT_EQ(seqs.size(), 1u);
  EXPECT_EQ(seqs[0].tokens, (TokenSequence{a, 1, b, c, 1}));
  EXPECT_EQ(seqs[0].doc_spans, (std::vector<DocSpan>{{0, 1, 0}, {2, 4, 1}}));
}

TEST(Packing, DocumentOfExactlySeqLenPushesEodToNextSequence) {
  const std::vector<TokenSequence> docs{{5, 6, 7, 8}};
  const auto seqs = pack_documents(docs, PackingConfig{4, 1, 0});
  ASSERT_EQ(seqs.size(), 2u);
  EXPECT_EQ(seqs[0].tokens, (TokenSequence{5, 6, 7, 8}));
  EXPECT_EQ(seqs[1].tokens, (TokenSequence{1, 0, 0, 0}));
  EXPECT_EQ(seqs[0].doc_spans, (std::vector<DocSpan>{{0, 4, 0}}));
  EXPECT_TRUE(seqs[1].doc_spans.empty());
}

TEST(Packing, LongDocumentsSplitAcrossSequences) {
  const std::vector<TokenSequence> docs{{2, 3, 4, 5, 6, 7}, {8}};
  const auto seqs = pack_documents(docs, PackingConfig{4, 1, 0});
  ASSERT_EQ(seqs.size(), 3u);
  EXPECT_EQ(seqs[0].tokens, (TokenSequence{2, 3, 4, 5}));
  EXPECT_EQ(seqs[1].tokens, (TokenSequence{6, 7, 1, 8}));
  EXPECT_EQ(seqs[2].tokens, (TokenSequence{1, 0, 0, 0}));
}

TEST(Packing, Errors) {
  const std::vector<TokenSequence> with_eod{{3, 1}};
  EXPECT_THROW(pack_documents(with_eod, PackingConfig{4, 1, 0}), ValidationError);
  const std::vector<TokenSequence> ok{{3}};
  EXPECT_THROW(pack_documents(ok, PackingConfig{1, 1, 0}), ValidationError);
  const std::vector<TokenSequence> empty{{}};
  EXPECT_THROW(pack_documents(empty, PackingConfig{4, 1, 0}), ValidationError);
}

TEST(Packing, PropertiesOnRandomCorpora) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    std::vector<TokenSequence> docs(1 + rng.index(20));
    TokenSequence concat;
    for (auto& d : docs) {
      d.resize(1 + rng.index(30));
      for (auto& t : d) t = static_cast<TokenId>(2 + rng.index(50));
      concat.insert(concat.end(), d.begin(), d.end());
    }
    const std::size_t seq_len = 2 + rng.index(16);
    const auto seqs = pack_documents(docs, PackingConfig{seq_len, 1, 0});
    TokenSequence content;
    std::size_t eods = 0;
    for (const auto& s : seqs) {
      ASSERT_EQ(s.tokens.size(), seq_len);
      for (auto t : s.tokens) {
        if (t == 1) ++eods;
        else if (t != 0) content.push_back(t);
      }
      for (std::size_t k = 1; k < s.doc_spans.size(); ++k) {
        // Consecutive spans within a sequence are separated by exactly one eod.
        EXPECT_EQ(s.doc_spans[k].start, s.doc_spans[k - 1].end + 1);
        EXPECT_EQ(s.tokens[s.doc_spans[k - 1].end], 1u);
      }
    }
    EXPECT_EQ(content, concat);
    EXPECT_EQ(eods, docs.size());
  }
}

TEST(TokenDocuments, RoundTripWithIds) {
  test_util::TempDir dir;
  const std::vector<TokenSequence> docs{{1, 2, 3}, {9}};
  const std::vector<std::uint64_t> ids{10, 20};
  save_token_documents(dir / "d.jsonl", docs, ids);
  std::vector<std::uint64_t> read_ids;
  EXPECT_EQ(load_token_documents(dir / "d.jsonl", &read_ids), docs);
  EXPECT_EQ(read_ids, ids);
}
