#include "embcurate/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "embcurate/error.hpp"

namespace embcurate {

namespace {

const char* kind_name(ConfigValue::Kind k) {
  switch (k) {
    case ConfigValue::Kind::kBool: return "boolean";
    case ConfigValue::Kind::kInt: return "integer";
    case ConfigValue::Kind::kFloat: return "float";
    case ConfigValue::Kind::kString: return "string";
    case ConfigValue::Kind::kArray: return "array";
  }
  return "?";
}

[[noreturn]] void wrong_kind(const std::string& key, const char* want, ConfigValue::Kind got) {
  throw ValidationError("config key '" + key + "' must be " + want + ", got " + kind_name(got));
}

class Cursor {
 public:
  Cursor(const std::string& s, std::string where) : s_(s), where_(std::move(where)) {}

  void skip_space() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\n' || s_[pos_] == '\r')) ++pos_;
    if (pos_ < s_.size() && s_[pos_] == '#') {
      while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
      skip_space();
    }
  }
  bool done() {
    skip_space();
    return pos_ >= s_.size();
  }

  ConfigValue value() {
    skip_space();
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"') return string_value();
    if (c == '[') return array_value();
    return bare_value();
  }

  [[noreturn]] void fail(const std::string& what) const { throw FormatError(where_ + ": " + what); }

 private:
  ConfigValue string_value() {
    ConfigValue v;
    v.kind = ConfigValue::Kind::kString;
    ++pos_;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) break;
        const char e = s_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: fail(std::string("unknown escape \\") + e);
        }
      } else if (c == '\n') {
        fail("unterminated string");
      }
      v.text.push_back(c);
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return v;
  }

  ConfigValue array_value() {
    ConfigValue v;
    v.kind = ConfigValue::Kind::kArray;
    ++pos_;
    for (;;) {
      skip_space();
      if (pos_ >= s_.size()) fail("unterminated array");
      if (s_[pos_] == ']') {
        ++pos_;
        return v;
      }
      ConfigValue item = value();
      if (item.kind == ConfigValue::Kind::kArray) fail("nested arrays are not supported");
      v.items.push_back(std::move(item));
      skip_space();
      if (pos_ < s_.size() && s_[pos_] == ',') {
        ++pos_;
      } else if (pos_ < s_.size() && s_[pos_] != ']') {
        fail("expected ',' or ']' in array");
      }
    }
  }

  ConfigValue bare_value() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_])) && s_[pos_] != ',' &&
           s_[pos_] != ']' && s_[pos_] != '#') {
      ++pos_;
    }
    std::string tok = s_.substr(start, pos_ - start);
    ConfigValue v;
    if (tok == "true" || tok == "false") {
      v.kind = ConfigValue::Kind::kBool;
      v.boolean = tok == "true";
      return v;
    }
    std::string digits;
    for (char c : tok)
      if (c != '_') digits.push_back(c);
    if (digits.empty()) fail("missing value");
    const char* b = digits.data();
    const char* e = b + digits.size();
    const char* num = (*b == '+') ? b + 1 : b;
    if (digits.find_first_of(".eE") == std::string::npos || digits == "inf" || digits == "nan") {
      std::int64_t i = 0;
      auto [ptr, ec] = std::from_chars(num, e, i);
      if (ec == std::errc() && ptr == e) {
        v.kind = ConfigValue::Kind::kInt;
        v.integer = i;
        return v;
      }
    }
    double d = 0.0;
    auto [ptr, ec] = std::from_chars(num, e, d);
    if (ec != std::errc() || ptr != e || !std::isfinite(d)) fail("invalid value '" + tok + "'");
    v.kind = ConfigValue::Kind::kFloat;
    v.real = d;
    return v;
  }

  const std::string& s_;
  std::string where_;
  std::size_t pos_ = 0;
};

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

bool valid_key(const std::string& key) {
  if (key.empty() || key.front() == '.' || key.back() == '.') return false;
  for (std::size_t i = 0; i < key.size(); ++i) {
    const char c = key[i];
    if (c == '.' && key[i - 1] == '.') return false;
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' && c != '.') return false;
  }
  return true;
}

// Number of unbalanced '[' outside strings and comments.
int bracket_depth(const std::string& s) {
  int depth = 0;
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_str) {
      if (c == '\\') ++i;
      else if (c == '"') in_str = false;
    } else if (c == '"') {
      in_str = true;
    } else if (c == '#') {
      while (i < s.size() && s[i] != '\n') ++i;
    } else if (c == '[') {
      ++depth;
    } else if (c == ']') {
      --depth;
    }
  }
  return depth;
}

}  // namespace

double ConfigValue::as_double(const std::string& key) const {
  if (kind == Kind::kFloat) return real;
  if (kind == Kind::kInt) return static_cast<double>(integer);
  wrong_kind(key, "a number", kind);
}

std::int64_t ConfigValue::as_int(const std::string& key) const {
  if (kind != Kind::kInt) wrong_kind(key, "an integer", kind);
  return integer;
}

std::uint64_t ConfigValue::as_uint(const std::string& key) const {
  const auto v = as_int(key);
  if (v < 0) throw ValidationError("config key '" + key + "' must be non-negative");
  return static_cast<std::uint64_t>(v);
}

bool ConfigValue::as_bool(const std::string& key) const {
  if (kind != Kind::kBool) wrong_kind(key, "a boolean", kind);
  return boolean;
}

const std::string& ConfigValue::as_string(const std::string& key) const {
  if (kind != Kind::kString) wrong_kind(key, "a string", kind);
  return text;
}

std::vector<double> ConfigValue::as_doubles(const std::string& key) const {
  if (kind != Kind::kArray) return {as_double(key)};
  std::vector<double> out;
  for (const auto& v : items) out.push_back(v.as_double(key));
  return out;
}

std::vector<std::uint64_t> ConfigValue::as_uints(const std::string& key) const {
  if (kind != Kind::kArray) return {as_uint(key)};
  std::vector<std::uint64_t> out;
  for (const auto& v : items) out.push_back(v.as_uint(key));
  return out;
}

std::vector<std::string> ConfigValue::as_strings(const std::string& key) const {
  if (kind != Kind::kArray) return {as_string(key)};
  std::vector<std::string> out;
  for (const auto& v : items) out.push_back(v.as_string(key));
  return out;
}

ConfigValue parse_config_value(const std::string& literal, const std::string& where) {
  Cursor cur(literal, where);
  ConfigValue v = cur.value();
  if (!cur.done()) cur.fail("trailing characters after value");
  return v;
}

ConfigTree ConfigTree::parse(const std::string& text, const std::string& origin) {
  ConfigTree tree;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  std::set<std::string> sections;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (t.front() == '[') {
      const auto close = t.find(']');
      if (close == std::string::npos) throw FormatError(where + ": unterminated section header");
      const std::string rest = trim(t.substr(close + 1));
      if (!rest.empty() && rest.front() != '#') throw FormatError(where + ": text after section header");
      section = trim(t.substr(1, close - 1));
      if (!valid_key(section)) throw FormatError(where + ": invalid section name '" + section + "'");
      if (!sections.insert(section).second) throw FormatError(where + ": duplicate section [" + section + "]");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw FormatError(where + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    if (!valid_key(key)) throw FormatError(where + ": invalid key '" + key + "'");
    std::string literal = t.substr(eq + 1);
    // Arrays may continue over several lines.
    while (bracket_depth(literal) > 0) {
      std::string more;
      if (!std::getline(in, more)) throw FormatError(where + ": unterminated array");
      ++lineno;
      literal += "\n" + more;
    }
    const std::string full = section.empty() ? key : section + "." + key;
    if (tree.values_.count(full)) throw FormatError(where + ": duplicate key '" + full + "'");
    tree.values_[full] = parse_config_value(literal, where);
  }
  return tree;
}

ConfigTree ConfigTree::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

void ConfigTree::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ValidationError("override '" + assignment + "' is not key=value");
  const std::string key = trim(assignment.substr(0, eq));
  if (!valid_key(key)) throw ValidationError("invalid override key '" + key + "'");
  std::string literal = trim(assignment.substr(eq + 1));
  // Bare words that are not numbers or booleans are taken as strings.
  try {
    values_[key] = parse_config_value(literal, "override " + key);
  } catch (const FormatError&) {
    ConfigValue v;
    v.kind = ConfigValue::Kind::kString;
    v.text = literal;
    values_[key] = v;
  }
}

const ConfigValue& ConfigTree::at(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("missing config key '" + key + "'");
  return it->second;
}

std::vector<std::string> ConfigTree::children(const std::string& prefix) const {
  std::vector<std::string> out;
  const std::string p = prefix + ".";
  for (auto it = values_.lower_bound(p); it != values_.end() && it->first.compare(0, p.size(), p) == 0; ++it) {
    const std::string rest = it->first.substr(p.size());
    const std::string name = rest.substr(0, rest.find('.'));
    if (out.empty() || out.back() != name) out.push_back(name);
  }
  return out;
}

}  // namespace embcurate
