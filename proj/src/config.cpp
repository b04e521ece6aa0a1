#include "prunekit/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <set>

#include "prunekit/error.hpp"
#include "prunekit/io.hpp"

namespace prunekit {

using nlohmann::json;

std::string interpolate_env(std::string_view text) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text.compare(i, 2, "${") == 0) {
      const std::size_t close = text.find('}', i + 2);
      if (close == std::string_view::npos) throw Error(Errc::kConfigError, "unterminated ${ in config string");
      const std::string name(text.substr(i + 2, close - i - 2));
      const char* value = std::getenv(name.c_str());
      if (value == nullptr) throw Error(Errc::kConfigError, "environment variable " + name + " is not set");
      out += value;
      i = close + 1;
    } else {
      out += text[i++];
    }
  }
  return out;
}

namespace {

class TomlParser {
 public:
  explicit TomlParser(std::string_view text) : s_(text) {}

  json parse() {
    json root = json::object();
    json* table = &root;
    while (true) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        ++pos_;
        if (!eof() && peek() == '[') fail("arrays of tables are not supported");
        table = &root;
        const auto path = key_path(']');
        std::string joined;
        for (const auto& part : path) {
          json& next = (*table)[part];
          if (next.is_null()) next = json::object();
          if (!next.is_object()) fail("key '" + part + "' is not a table");
          table = &next;
          joined += (joined.empty() ? "" : ".") + part;
        }
        if (!headers_.insert(joined).second) fail("table [" + joined + "] defined twice");
        expect(']');
      } else {
        auto path = key_path('=');
        expect('=');
        skip_space();
        json* target = table;
        for (std::size_t k = 0; k + 1 < path.size(); ++k) {
          json& next = (*target)[path[k]];
          if (next.is_null()) next = json::object();
          if (!next.is_object()) fail("key '" + path[k] + "' is not a table");
          target = &next;
        }
        if (target->contains(path.back())) fail("duplicate key '" + path.back() + "'");
        (*target)[path.back()] = value();
      }
      end_of_line();
    }
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(Errc::kConfigError, "config line " + std::to_string(line_) + ": " + msg);
  }

  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return s_[pos_]; }

  void expect(char c) {
    skip_space();
    if (eof() || peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void skip_space() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }

  void skip_comment() {
    if (!eof() && peek() == '#') {
      while (!eof() && peek() != '\n') ++pos_;
    }
  }

  void skip_blank_lines() {
    while (true) {
      skip_space();
      skip_comment();
      if (eof()) return;
      if (peek() == '\r') ++pos_;
      if (!eof() && peek() == '\n') {
        ++pos_;
        ++line_;
        continue;
      }
      return;
    }
  }

  // Also skips newlines and comments, for use inside arrays.
  void skip_ws_multiline() { skip_blank_lines(); }

  void end_of_line() {
    skip_space();
    skip_comment();
    if (!eof() && peek() == '\r') ++pos_;
    if (eof()) return;
    if (peek() != '\n') fail("unexpected trailing characters");
    ++pos_;
    ++line_;
  }

  std::vector<std::string> key_path(char terminator) {
    std::vector<std::string> parts;
    while (true) {
      skip_space();
      if (eof()) fail("unexpected end of input in key");
      if (peek() == '"') {
        parts.push_back(basic_string(false));
      } else if (peek() == '\'') {
        parts.push_back(literal_string());
      } else {
        std::string key;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-')) {
          key += s_[pos_++];
        }
        if (key.empty()) fail("empty key");
        parts.push_back(std::move(key));
      }
      skip_space();
      if (!eof() && peek() == '.') {
        ++pos_;
        continue;
      }
      if (eof() || peek() != terminator) fail(std::string("expected '") + terminator + "' after key");
      return parts;
    }
  }

  std::string basic_string(bool interpolate) {
    ++pos_;  // opening quote
    if (s_.compare(pos_, 2, "\"\"") == 0) fail("multi-line strings are not supported");
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      const char c = s_[pos_++];
      if (c == '"') break;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (eof()) fail("unterminated escape");
      const char e = s_[pos_++];
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: fail(std::string("unsupported escape \\") + e);
      }
    }
    return interpolate ? interpolate_env(out) : out;
  }

  std::string literal_string() {
    ++pos_;
    const std::size_t close = s_.find('\'', pos_);
    const std::size_t nl = s_.find('\n', pos_);
    if (close == std::string_view::npos || close > nl) fail("unterminated literal string");
    std::string out(s_.substr(pos_, close - pos_));
    pos_ = close + 1;
    return out;
  }

  json value() {
    skip_space();
    if (eof()) fail("missing value");
    const char c = peek();
    if (c == '"') return basic_string(true);
    if (c == '\'') return literal_string();
    if (c == '[') return array();
    if (c == '{') fail("inline tables are not supported");
    std::string tok;
    while (!eof() && peek() != ',' && peek() != ']' && peek() != '#' && peek() != '\n' && peek() != '\r' &&
           peek() != ' ' && peek() != '\t') {
      tok += s_[pos_++];
    }
    if (tok == "true") return true;
    if (tok == "false") return false;
    std::string digits;
    for (char d : tok) {
      if (d != '_') digits += d;
    }
    const bool is_float = digits.find_first_of(".eE") != std::string::npos || digits == "inf" ||
                          digits == "+inf" || digits == "-inf" || digits == "nan";
    if (!is_float) {
      std::int64_t v{};
      const char* first = digits.data() + (!digits.empty() && digits[0] == '+' ? 1 : 0);
      auto [p, ec] = std::from_chars(first, digits.data() + digits.size(), v);
      if (ec != std::errc() || p != digits.data() + digits.size() || digits.empty()) fail("bad value '" + tok + "'");
      return v;
    }
    try {
      std::size_t used = 0;
      const double v = std::stod(digits, &used);
      if (used != digits.size()) fail("bad number '" + tok + "'");
      return v;
    } catch (const std::logic_error&) {
      fail("bad number '" + tok + "'");
    }
  }

  json array() {
    ++pos_;
    json arr = json::array();
    while (true) {
      skip_ws_multiline();
      if (eof()) fail("unterminated array");
      if (peek() == ']') {
        ++pos_;
        return arr;
      }
      arr.push_back(value());
      skip_ws_multiline();
      if (!eof() && peek() == ',') {
        ++pos_;
        continue;
      }
      skip_ws_multiline();
      if (eof() || peek() != ']') fail("expected ',' or ']' in array");
    }
  }

  std::string_view s_;
  std::size_t pos_{0};
  std::size_t line_{1};
  std::set<std::string> headers_;
};

}  // namespace

json parse_toml(std::string_view text) { return TomlParser(text).parse(); }

json load_toml(const std::filesystem::path& path) { return parse_toml(read_file(path)); }

}  // namespace prunekit
