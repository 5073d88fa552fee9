#pragma once

// Reader for the small TOML subset used by tndve configuration files:
//
//   # comment
//   key = "string" | 1.5 | 42 | true | ["a", "b"] | [1, 2.5]
//   [table]
//   other = -3e-2
//
// Keys inside a table are addressed as "table.key". Arrays may span lines.
// Nested tables, inline tables, dates and multi-line strings are not supported.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace tndve {

struct ConfigValue {
  using Array = std::vector<ConfigValue>;
  std::variant<bool, std::int64_t, double, std::string, Array> data;

  bool is_string() const { return std::holds_alternative<std::string>(data); }
  bool is_array() const { return std::holds_alternative<Array>(data); }
  bool is_number() const {
    return std::holds_alternative<std::int64_t>(data) || std::holds_alternative<double>(data);
  }
};

class ConfigDocument {
 public:
  static ConfigDocument parse(std::string_view text, const std::string& source = "<string>");
  static ConfigDocument load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  bool has_table(const std::string& table) const;

  std::optional<std::string> get_string(const std::string& key) const;
  std::optional<double> get_double(const std::string& key) const;
  std::optional<std::int64_t> get_int(const std::string& key) const;
  std::optional<bool> get_bool(const std::string& key) const;
  std::optional<std::vector<std::string>> get_string_list(const std::string& key) const;
  std::optional<std::vector<double>> get_double_list(const std::string& key) const;

  /// Keys (without the table prefix) defined directly inside `table`.
  std::vector<std::string> keys_in(const std::string& table) const;

  /// Raw value, or nullptr.
  const ConfigValue* find(const std::string& key) const {
    const auto it = values_.find(key);
    return it == values_.end() ? nullptr : &it->second;
  }
  void set(const std::string& key, ConfigValue value) { values_[key] = std::move(value); }

  /// Canonical "key = value" rendering in sorted key order; stable input for hashing.
  std::string canonical() const;

  const std::string& source() const { return source_; }

 private:
  std::map<std::string, ConfigValue> values_;
  std::string source_;
};

/// 64-bit FNV-1a, used for manifest config hashes.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

}  // namespace tndve
