#include "cdekit/toml_lite.hpp"

#include <cctype>
#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>

#include "cdekit/error.hpp"

namespace cdekit {

namespace {

class Parser {
 public:
  Parser(const std::string& text, std::string source) : s_(text), source_(std::move(source)) {}

  Json parse() {
    Json root = Json::object();
    Json* table = &root;
    while (true) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        table = header(root);
      } else {
        key_value(*table);
      }
      end_of_line();
    }
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigurationError(fmt::format("{}:{}: {}", source_, line_, msg));
  }

  bool eof() const { return i_ >= s_.size(); }
  char peek() const { return eof() ? '\0' : s_[i_]; }
  char next() {
    char c = s_[i_++];
    if (c == '\n') ++line_;
    return c;
  }

  void skip_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) ++i_;
  }
  void skip_comment() {
    if (peek() == '#')
      while (!eof() && peek() != '\n') ++i_;
  }
  // Whitespace, newlines and comments (inside arrays and between statements).
  void skip_blank_lines() {
    while (!eof()) {
      skip_ws();
      skip_comment();
      if (peek() == '\n' || peek() == '\r')
        next();
      else
        break;
    }
  }
  void end_of_line() {
    skip_ws();
    skip_comment();
    if (peek() == '\r') ++i_;
    if (eof()) return;
    if (peek() != '\n') fail(fmt::format("unexpected '{}' after value", peek()));
    next();
  }

  std::string bare_or_quoted_key() {
    skip_ws();
    if (peek() == '"') return basic_string();
    if (peek() == '\'') return literal_string();
    std::string k;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-')) k += next();
    if (k.empty()) fail("expected a key");
    return k;
  }

  std::vector<std::string> dotted_key() {
    std::vector<std::string> parts{bare_or_quoted_key()};
    skip_ws();
    while (peek() == '.') {
      ++i_;
      parts.push_back(bare_or_quoted_key());
      skip_ws();
    }
    return parts;
  }

  std::string path_of(const std::vector<std::string>& parts, std::size_t upto) const {
    std::string p;
    for (std::size_t k = 0; k < upto; ++k) p += (k ? "." : "") + parts[k];
    return p;
  }

  // Walks to the table named by parts[0..n-1], creating tables on the way;
  // an array of tables resolves to its last element.
  Json* descend(Json& root, const std::vector<std::string>& parts, std::size_t n) {
    Json* t = &root;
    for (std::size_t k = 0; k < n; ++k) {
      Json& child = (*t)[parts[k]];
      if (child.is_null()) child = Json::object();
      if (child.is_array() && !child.empty() && child.back().is_object()) {
        t = &child.back();
      } else if (child.is_object()) {
        t = &child;
      } else {
        fail(fmt::format("'{}' is not a table", path_of(parts, k + 1)));
      }
    }
    return t;
  }

  Json* header(Json& root) {
    ++i_;
    const bool array = peek() == '[';
    if (array) ++i_;
    auto parts = dotted_key();
    skip_ws();
    if (next() != ']' || (array && next() != ']')) fail("unterminated table header");
    Json* parent = descend(root, parts, parts.size() - 1);
    Json& slot = (*parent)[parts.back()];
    const std::string full = path_of(parts, parts.size());
    if (array) {
      if (slot.is_null()) slot = Json::array();
      if (!slot.is_array()) fail(fmt::format("'{}' is not an array of tables", full));
      // Sub-tables of the previous element may be redefined in the new one.
      for (auto it = defined_.lower_bound(full + "."); it != defined_.end() && it->rfind(full + ".", 0) == 0;)
        it = defined_.erase(it);
      slot.push_back(Json::object());
      return &slot.back();
    }
    if (defined_.count(full)) fail(fmt::format("table '{}' defined twice", full));
    defined_.insert(full);
    if (slot.is_null()) slot = Json::object();
    if (!slot.is_object()) fail(fmt::format("'{}' is not a table", full));
    return &slot;
  }

  void key_value(Json& table) {
    auto parts = dotted_key();
    skip_ws();
    if (next() != '=') fail("expected '=' after key");
    skip_ws();
    Json v = value();
    Json* t = descend(table, parts, parts.size() - 1);
    if (t->contains(parts.back())) fail(fmt::format("key '{}' defined twice", path_of(parts, parts.size())));
    (*t)[parts.back()] = std::move(v);
  }

  Json value() {
    const char c = peek();
    if (c == '"') {
      if (s_.compare(i_, 3, "\"\"\"") == 0) fail("multi-line strings are not supported");
      return basic_string();
    }
    if (c == '\'') {
      if (s_.compare(i_, 3, "'''") == 0) fail("multi-line strings are not supported");
      return literal_string();
    }
    if (c == '[') return array();
    if (c == '{') return inline_table();
    if (s_.compare(i_, 4, "true") == 0) {
      i_ += 4;
      return true;
    }
    if (s_.compare(i_, 5, "false") == 0) {
      i_ += 5;
      return false;
    }
    return number();
  }

  std::string basic_string() {
    ++i_;
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      char c = next();
      if (c == '"') break;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (eof()) fail("unterminated escape");
      char e = next();
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case 'b': out += '\b'; break;
        case 'f': out += '\f'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'u': {
          if (i_ + 4 > s_.size()) fail("short \\u escape");
          unsigned cp = static_cast<unsigned>(std::stoul(s_.substr(i_, 4), nullptr, 16));
          i_ += 4;
          if (cp < 0x80) {
            out += static_cast<char>(cp);
          } else if (cp < 0x800) {
            out += static_cast<char>(0xC0 | (cp >> 6));
            out += static_cast<char>(0x80 | (cp & 0x3F));
          } else {
            out += static_cast<char>(0xE0 | (cp >> 12));
            out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
            out += static_cast<char>(0x80 | (cp & 0x3F));
          }
          break;
        }
        default: fail(fmt::format("unknown escape '\\{}'", e));
      }
    }
    return out;
  }

  std::string literal_string() {
    ++i_;
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      char c = next();
      if (c == '\'') break;
      out += c;
    }
    return out;
  }

  Json array() {
    ++i_;
    Json a = Json::array();
    while (true) {
      skip_blank_lines();
      if (peek() == ']') {
        ++i_;
        return a;
      }
      a.push_back(value());
      skip_blank_lines();
      if (peek() == ',') {
        ++i_;
      } else if (peek() == ']') {
        ++i_;
        return a;
      } else {
        fail("expected ',' or ']' in array");
      }
    }
  }

  Json inline_table() {
    ++i_;
    Json t = Json::object();
    skip_ws();
    if (peek() == '}') {
      ++i_;
      return t;
    }
    while (true) {
      key_value(t);
      skip_ws();
      char c = eof() ? '\0' : next();
      if (c == '}') return t;
      if (c != ',') fail("expected ',' or '}' in inline table");
      skip_ws();
    }
  }

  Json number() {
    std::string tok;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '+' || peek() == '-' ||
                      peek() == '.' || peek() == '_'))
      tok += next();
    if (tok.empty()) fail("expected a value");
    std::string clean;
    for (char c : tok)
      if (c != '_') clean += c;
    std::string body = clean;
    bool negative = false;
    if (!body.empty() && (body[0] == '+' || body[0] == '-')) {
      negative = body[0] == '-';
      body = body.substr(1);
    }
    if (body == "inf") return negative ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
    if (body == "nan") return std::numeric_limits<double>::quiet_NaN();
    const bool is_float = clean.find_first_of(".eE") != std::string::npos;
    std::size_t used = 0;
    try {
      if (!is_float) {
        long long v = std::stoll(clean, &used, 10);
        if (used == clean.size()) return v;
      } else {
        double v = std::stod(clean, &used);
        if (used == clean.size()) return v;
      }
    } catch (const std::exception&) {
    }
    fail(fmt::format("invalid value '{}'", tok));
  }

  const std::string& s_;
  std::string source_;
  std::size_t i_ = 0;
  std::size_t line_ = 1;
  std::set<std::string> defined_;
};

}  // namespace

Json parse_toml(const std::string& text, const std::string& source) { return Parser(text, source).parse(); }

}  // namespace cdekit
