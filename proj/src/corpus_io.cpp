#include "embcurate/corpus_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "binary_io.hpp"
#include "embcurate/error.hpp"

namespace embcurate {

using detail::read_le;
using detail::write_le;

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  detail::expect_magic(in, "EMB1", path.string());
  const auto n = read_le<std::uint32_t>(in, "row count");
  const auto d = read_le<std::uint32_t>(in, "dimension");
  if (n == 0 || d == 0) throw FormatError("malformed header in " + path.string() + ": n and d must be positive");

  const std::size_t count = static_cast<std::size_t>(n) * d;
  std::vector<float> values(count);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(count * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(float)) {
    throw FormatError(path.string() + ": truncated payload (" + std::to_string(in.gcount() / sizeof(float)) +
                      " of " + std::to_string(count) + " values)");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError(path.string() + ": size mismatch, trailing bytes after " + std::to_string(count) + " values");
  }
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& v : values) v = detail::to_little(v);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < d; ++t) {
      if (!std::isfinite(values[i * d + t])) {
        throw FormatError(path.string() + ": non-finite value at row " + std::to_string(i));
      }
    }
  }
  return EmbeddingMatrix(n, d, std::move(values));
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& matrix) {
  if (matrix.rows() > UINT32_MAX || matrix.dim() > UINT32_MAX) throw ValidationError("matrix too large for EMB1");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  detail::write_magic(out, "EMB1");
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(matrix.rows()));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(matrix.dim()));
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(matrix.data()),
              static_cast<std::streamsize>(matrix.values().size() * sizeof(float)));
  } else {
    for (float v : matrix.values()) write_le(out, v);
  }
  if (!out) throw Error("failed writing " + path.string());
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <class T>
T required_integer(const nlohmann::json& obj, const char* field, const std::string& where) {
  auto it = obj.find(field);
  if (it == obj.end()) throw FormatError(where + ": missing required field '" + field + "'");
  if (!it->is_number_integer()) throw FormatError(where + ": field '" + field + "' must be an integer");
  if (it->is_number_unsigned()) return static_cast<T>(it->get<std::uint64_t>());
  const auto v = it->get<std::int64_t>();
  if (v < 0) throw FormatError(where + ": field '" + field + "' must be non-negative");
  return static_cast<T>(v);
}

}  // namespace

std::vector<ExampleRecord> parse_metadata(const std::string& text, const std::string& origin) {
  std::vector<ExampleRecord> records;
  std::unordered_set<std::uint64_t> ids;
  std::istringstream lines(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(where + ": invalid JSON (" + e.what() + ")");
    }
    if (!obj.is_object()) throw FormatError(where + ": expected a JSON object");

    ExampleRecord rec;
    rec.id = required_integer<std::uint64_t>(obj, "id", where);
    rec.source = required_integer<std::uint32_t>(obj, "source", where);
    rec.token_count = required_integer<std::uint64_t>(obj, "token_count", where);
    if (rec.token_count == 0) throw FormatError(where + ": token_count must be >= 1");
    if (auto it = obj.find("losses"); it != obj.end() && !it->is_null()) {
      if (!it->is_object()) throw FormatError(where + ": 'losses' must be an object");
      for (const auto& [key, value] : it->items()) {
        std::int64_t step = 0;
        try {
          std::size_t used = 0;
          step = std::stoll(key, &used);
          if (used != key.size()) throw std::invalid_argument(key);
        } catch (const std::exception&) {
          throw FormatError(where + ": loss key '" + key + "' is not an integer step");
        }
        if (!value.is_number()) throw FormatError(where + ": loss at step " + key + " is not a number");
        const double loss = value.get<double>();
        if (!std::isfinite(loss)) throw FormatError(where + ": non-finite loss at step " + key);
        rec.losses.emplace(step, loss);
      }
    }
    if (!ids.insert(rec.id).second) throw FormatError(where + ": duplicate id " + std::to_string(rec.id));
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<ExampleRecord> load_metadata(const std::filesystem::path& path) {
  return parse_metadata(read_file(path), path.string());
}

void save_metadata(const std::filesystem::path& path, std::span<const ExampleRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  for (const auto& rec : records) {
    nlohmann::ordered_json obj;
    obj["id"] = rec.id;
    obj["source"] = rec.source;
    obj["token_count"] = rec.token_count;
    if (!rec.losses.empty()) {
      nlohmann::ordered_json losses = nlohmann::ordered_json::object();
      for (const auto& [step, loss] : rec.losses) losses[std::to_string(step)] = loss;
      obj["losses"] = std::move(losses);
    }
    out << obj.dump() << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

std::vector<std::int64_t> collect_checkpoint_steps(std::span<const ExampleRecord> records) {
  std::vector<std::int64_t> steps;
  bool have = false;
  for (const auto& rec : records) {
    if (rec.losses.empty()) continue;
    std::vector<std::int64_t> mine;
    for (const auto& [step, loss] : rec.losses) mine.push_back(step);
    if (!have) {
      steps = std::move(mine);
      have = true;
    } else if (mine != steps) {
      throw ValidationError("record " + std::to_string(rec.id) + " has a different set of checkpoint steps");
    }
  }
  return steps;
}

void Corpus::validate() const {
  std::unordered_set<std::uint64_t> seen;
  for (const auto& rec : records) {
    if (!seen.insert(rec.id).second) throw ValidationError("duplicate id " + std::to_string(rec.id));
    if (rec.token_count == 0) throw ValidationError("record " + std::to_string(rec.id) + " has token_count 0");
    for (const auto& [step, loss] : rec.losses) {
      if (!std::isfinite(loss)) throw ValidationError("record " + std::to_string(rec.id) + " has a non-finite loss");
    }
  }
  for (const auto& [tag, matrix] : embeddings) {
    if (matrix.rows() != records.size()) {
      throw ValidationError("embeddings '" + tag + "' have " + std::to_string(matrix.rows()) + " rows for " +
                            std::to_string(records.size()) + " records");
    }
  }
  for (const auto& rec : records) {
    if (rec.losses.empty()) continue;
    if (rec.losses.size() != checkpoint_steps.size() ||
        !std::equal(checkpoint_steps.begin(), checkpoint_steps.end(), rec.losses.begin(),
                    [](std::int64_t s, const auto& kv) { return s == kv.first; })) {
      throw ValidationError("record " + std::to_string(rec.id) + " does not match the corpus checkpoint steps");
    }
  }
}

std::vector<std::uint64_t> Corpus::ids() const {
  std::vector<std::uint64_t> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.id);
  return out;
}

std::vector<std::uint32_t> Corpus::sources() const {
  std::vector<std::uint32_t> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.source);
  return out;
}

std::vector<std::uint64_t> Corpus::token_counts() const {
  std::vector<std::uint64_t> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.token_count);
  return out;
}

std::uint64_t Corpus::total_tokens() const {
  std::uint64_t total = 0;
  for (const auto& r : records) total += r.token_count;
  return total;
}

std::vector<double> Corpus::losses_at(std::int64_t step) const {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    auto it = r.losses.find(step);
    if (it == r.losses.end()) {
      throw ValidationError("record " + std::to_string(r.id) + " has no loss at step " + std::to_string(step));
    }
    out.push_back(it->second);
  }
  return out;
}

std::vector<TokenSequence> load_token_documents(const std::filesystem::path& path, std::vector<std::uint64_t>* ids) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<TokenSequence> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(where + ": invalid JSON (" + e.what() + ")");
    }
    auto tokens = obj.find("tokens");
    if (!obj.is_object() || tokens == obj.end() || !tokens->is_array()) {
      throw FormatError(where + ": expected an object with a 'tokens' array");
    }
    TokenSequence doc;
    doc.reserve(tokens->size());
    for (const auto& t : *tokens) {
      if (!t.is_number_unsigned() || t.get<std::uint64_t>() > UINT32_MAX) {
        throw FormatError(where + ": token ids must be unsigned 32-bit integers");
      }
      doc.push_back(t.get<TokenId>());
    }
    if (ids != nullptr) ids->push_back(obj.contains("id") ? obj["id"].get<std::uint64_t>() : docs.size());
    docs.push_back(std::move(doc));
  }
  return docs;
}

void save_token_documents(const std::filesystem::path& path, std::span<const TokenSequence> docs,
                          std::span<const std::uint64_t> ids) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  for (std::size_t i = 0; i < docs.size(); ++i) {
    nlohmann::ordered_json obj;
    obj["id"] = ids.empty() ? i : ids[i];
    obj["tokens"] = docs[i];
    out << obj.dump() << '\n';
  }
}

std::vector<PackedSequence> pack_documents(std::span<const TokenSequence> docs, const PackingConfig& config) {
  if (config.seq_len < 2) throw ValidationError("seq_len must be >= 2");
  if (config.eod_token == config.pad_token) throw ValidationError("eod and pad tokens must differ");
  for (std::size_t d = 0; d < docs.size(); ++d) {
    if (docs[d].empty()) throw ValidationError("document " + std::to_string(d) + " is empty");
    for (TokenId t : docs[d]) {
      if (t == config.eod_token) throw ValidationError("document " + std::to_string(d) + " contains the eod token");
      if (t == config.pad_token) throw ValidationError("document " + std::to_string(d) + " contains the pad token");
    }
  }

  std::vector<PackedSequence> out;
  PackedSequence current;
  auto flush_if_full = [&] {
    if (current.tokens.size() == config.seq_len) {
      out.push_back(std::move(current));
      current = PackedSequence{};
    }
  };
  for (std::size_t d = 0; d < docs.size(); ++d) {
    std::size_t pos = 0;
    const auto& doc = docs[d];
    while (pos < doc.size()) {
      const std::size_t room = config.seq_len - current.tokens.size();
      const std::size_t take = std::min(room, doc.size() - pos);
      const std::size_t start = current.tokens.size();
      current.tokens.insert(current.tokens.end(), doc.begin() + pos, doc.begin() + pos + take);
      current.doc_spans.push_back({start, start + take, d});
      pos += take;
      flush_if_full();
    }
    current.tokens.push_back(config.eod_token);
    flush_if_full();
  }
  if (!current.tokens.empty()) {
    current.tokens.resize(config.seq_len, config.pad_token);
    out.push_back(std::move(current));
  }
  return out;
}

}  // namespace embcurate
