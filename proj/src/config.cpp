#include "tndve/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "tndve/error.hpp"

namespace tndve {
namespace {

class ValueParser {
 public:
  ValueParser(std::string_view text, const std::string& where) : text_(text), where_(where) {}

  ConfigValue parse_value() {
    skip_space();
    if (pos_ >= text_.size()) fail("missing value");
    const char c = text_[pos_];
    if (c == '"') return ConfigValue{parse_string()};
    if (c == '[') return ConfigValue{parse_array()};
    if (text_.substr(pos_, 4) == "true") {
      pos_ += 4;
      return ConfigValue{true};
    }
    if (text_.substr(pos_, 5) == "false") {
      pos_ += 5;
      return ConfigValue{false};
    }
    return parse_number();
  }

  void expect_end() {
    skip_space();
    if (pos_ != text_.size()) fail("trailing characters");
  }

 private:
  void skip_space() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        ++pos_;
      } else if (c == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError(where_ + ": " + msg);
  }

  std::string parse_string() {
    ++pos_;  // opening quote
    std::string out;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      char c = text_[pos_++];
      if (c == '\\') {
        if (pos_ >= text_.size()) fail("unterminated escape");
        const char e = text_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: fail(std::string("unsupported escape \\") + e);
        }
      }
      out.push_back(c);
    }
    if (pos_ >= text_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  ConfigValue::Array parse_array() {
    ++pos_;
    ConfigValue::Array items;
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == ']') {
      ++pos_;
      return items;
    }
    while (true) {
      items.push_back(parse_value());
      skip_space();
      if (pos_ >= text_.size()) fail("unterminated array");
      if (text_[pos_] == ',') {
        ++pos_;
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == ']') {
          ++pos_;
          return items;
        }
        continue;
      }
      if (text_[pos_] == ']') {
        ++pos_;
        return items;
      }
      fail("expected ',' or ']' in array");
    }
  }

  ConfigValue parse_number() {
    std::size_t end = pos_;
    while (end < text_.size()) {
      const char c = text_[end];
      if ((c >= '0' && c <= '9') || c == '+' || c == '-' || c == '.' || c == 'e' || c == 'E' ||
          c == '_')
        ++end;
      else
        break;
    }
    std::string token;
    for (std::size_t i = pos_; i < end; ++i)
      if (text_[i] != '_') token.push_back(text_[i]);
    if (token.empty()) fail("unrecognised value");
    std::string_view body = token;
    if (body.front() == '+') body.remove_prefix(1);
    pos_ = end;
    const bool integral = body.find_first_of(".eE") == std::string_view::npos;
    if (integral) {
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(body.data(), body.data() + body.size(), v);
      if (ec != std::errc() || p != body.data() + body.size()) fail("bad integer '" + token + "'");
      return ConfigValue{v};
    }
    double v = 0;
    auto [p, ec] = std::from_chars(body.data(), body.data() + body.size(), v);
    if (ec != std::errc() || p != body.data() + body.size()) fail("bad number '" + token + "'");
    return ConfigValue{v};
  }

  std::string_view text_;
  std::string where_;
  std::size_t pos_ = 0;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Drops a trailing comment that is not inside a string literal.
std::string strip_comment(std::string_view line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '\\' && in_string) {
      ++i;
    } else if (c == '"') {
      in_string = !in_string;
    } else if (c == '#' && !in_string) {
      return std::string(line.substr(0, i));
    }
  }
  return std::string(line);
}

int bracket_balance(std::string_view s) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '\\' && in_string) {
      ++i;
    } else if (c == '"') {
      in_string = !in_string;
    } else if (!in_string) {
      if (c == '[') ++depth;
      if (c == ']') --depth;
    }
  }
  return depth;
}

void render(const ConfigValue& v, std::ostream& os) {
  std::visit(
      [&os](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, bool>) {
          os << (x ? "true" : "false");
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          os << x;
        } else if constexpr (std::is_same_v<T, double>) {
          char buf[32];
          auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
          os << std::string_view(buf, static_cast<std::size_t>(p - buf));
        } else if constexpr (std::is_same_v<T, std::string>) {
          os << '"' << x << '"';
        } else {
          os << '[';
          for (std::size_t i = 0; i < x.size(); ++i) {
            if (i) os << ", ";
            render(x[i], os);
          }
          os << ']';
        }
      },
      v.data);
}

}  // namespace

ConfigDocument ConfigDocument::parse(std::string_view text, const std::string& source) {
  ConfigDocument doc;
  doc.source_ = source;
  std::string table;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) throw ConfigError(where + ": malformed table header");
      table = trim(std::string_view(line).substr(1, line.size() - 2));
      if (table.empty()) throw ConfigError(where + ": empty table name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.size() >= 2 && key.front() == '"' && key.back() == '"') key = key.substr(1, key.size() - 2);
    if (key.empty()) throw ConfigError(where + ": empty key");
    std::string value_text = line.substr(eq + 1);
    while (bracket_balance(value_text) > 0) {
      if (!std::getline(in, raw)) throw ConfigError(where + ": unterminated array");
      ++line_no;
      value_text += "\n" + strip_comment(raw);
    }
    ValueParser parser(value_text, where);
    ConfigValue value = parser.parse_value();
    parser.expect_end();
    const std::string full = table.empty() ? key : table + "." + key;
    if (doc.values_.count(full)) throw ConfigError(where + ": duplicate key '" + full + "'");
    doc.values_.emplace(full, std::move(value));
  }
  return doc;
}

ConfigDocument ConfigDocument::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

bool ConfigDocument::has_table(const std::string& table) const {
  const std::string prefix = table + ".";
  auto it = values_.lower_bound(prefix);
  return it != values_.end() && it->first.compare(0, prefix.size(), prefix) == 0;
}

std::optional<std::string> ConfigDocument::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  if (!it->second.is_string()) throw ConfigError(source_ + ": '" + key + "' must be a string");
  return std::get<std::string>(it->second.data);
}

std::optional<double> ConfigDocument::get_double(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  if (auto* i = std::get_if<std::int64_t>(&it->second.data)) return static_cast<double>(*i);
  if (auto* d = std::get_if<double>(&it->second.data)) return *d;
  throw ConfigError(source_ + ": '" + key + "' must be a number");
}

std::optional<std::int64_t> ConfigDocument::get_int(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  if (auto* i = std::get_if<std::int64_t>(&it->second.data)) return *i;
  throw ConfigError(source_ + ": '" + key + "' must be an integer");
}

std::optional<bool> ConfigDocument::get_bool(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  if (auto* b = std::get_if<bool>(&it->second.data)) return *b;
  throw ConfigError(source_ + ": '" + key + "' must be true or false");
}

std::optional<std::vector<std::string>> ConfigDocument::get_string_list(
    const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  if (it->second.is_string()) return std::vector<std::string>{std::get<std::string>(it->second.data)};
  if (!it->second.is_array()) throw ConfigError(source_ + ": '" + key + "' must be a list of strings");
  std::vector<std::string> out;
  for (const auto& item : std::get<ConfigValue::Array>(it->second.data)) {
    if (!item.is_string()) throw ConfigError(source_ + ": '" + key + "' must be a list of strings");
    out.push_back(std::get<std::string>(item.data));
  }
  return out;
}

std::optional<std::vector<double>> ConfigDocument::get_double_list(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  auto as_double = [&](const ConfigValue& v) {
    if (auto* i = std::get_if<std::int64_t>(&v.data)) return static_cast<double>(*i);
    if (auto* d = std::get_if<double>(&v.data)) return *d;
    throw ConfigError(source_ + ": '" + key + "' must be a list of numbers");
  };
  if (it->second.is_number()) return std::vector<double>{as_double(it->second)};
  if (!it->second.is_array()) throw ConfigError(source_ + ": '" + key + "' must be a list of numbers");
  std::vector<double> out;
  for (const auto& item : std::get<ConfigValue::Array>(it->second.data)) out.push_back(as_double(item));
  return out;
}

std::vector<std::string> ConfigDocument::keys_in(const std::string& table) const {
  std::vector<std::string> out;
  const std::string prefix = table.empty() ? "" : table + ".";
  for (const auto& [k, v] : values_) {
    if (k.compare(0, prefix.size(), prefix) != 0) continue;
    std::string rest = k.substr(prefix.size());
    if (rest.find('.') == std::string::npos) out.push_back(rest);
  }
  return out;
}

std::string ConfigDocument::canonical() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) {
    os << k << " = ";
    render(v, os);
    os << '\n';
  }
  return os.str();
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace tndve
