#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace embcurate {

/// One value from a TOML-style config file: a scalar or a flat array of scalars.
struct ConfigValue {
  enum class Kind { kBool, kInt, kFloat, kString, kArray };
  Kind kind = Kind::kString;
  bool boolean = false;
  std::int64_t integer = 0;
  double real = 0.0;
  std::string text;
  std::vector<ConfigValue> items;

  double as_double(const std::string& key) const;
  std::int64_t as_int(const std::string& key) const;
  std::uint64_t as_uint(const std::string& key) const;
  bool as_bool(const std::string& key) const;
  const std::string& as_string(const std::string& key) const;
  std::vector<double> as_doubles(const std::string& key) const;
  std::vector<std::uint64_t> as_uints(const std::string& key) const;
  std::vector<std::string> as_strings(const std::string& key) const;
};

/// Flattened key/value tree. Keys are dotted paths ("kmeans.sizes").
class ConfigTree {
 public:
  static ConfigTree parse(const std::string& text, const std::string& origin = "config");
  static ConfigTree load(const std::filesystem::path& path);

  /// Applies "dotted.key=value"; the value uses the same syntax as the file.
  void set(const std::string& assignment);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const ConfigValue& at(const std::string& key) const;
  const std::map<std::string, ConfigValue>& values() const { return values_; }

  /// Distinct names one level below `prefix.` (leaf keys and subsections), sorted.
  std::vector<std::string> children(const std::string& prefix) const;

 private:
  std::map<std::string, ConfigValue> values_;
};

/// Parses a single value literal: "text", 12, -3.5e-2, true, [1, 2].
ConfigValue parse_config_value(const std::string& literal, const std::string& where);

}  // namespace embcurate
