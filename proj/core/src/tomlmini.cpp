#include "invreg/tomlmini.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "invreg/error.hpp"

namespace invreg::toml {

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw Error(ErrorCode::InvalidSpec, "toml: " + msg);
}

struct Cursor {
  const std::string& s;
  std::size_t i = 0;

  bool done() const { return i >= s.size(); }
  char peek() const { return s[i]; }
  void skip_ws_and_comments() {
    while (!done()) {
      const char c = s[i];
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        ++i;
      } else if (c == '#') {
        while (!done() && s[i] != '\n') ++i;
      } else {
        break;
      }
    }
  }
  // whitespace within a line only
  void skip_inline_ws() {
    while (!done() && (s[i] == ' ' || s[i] == '\t')) ++i;
  }
};

Value parse_value(Cursor& c);

Value parse_array(Cursor& c) {
  Value v;
  v.kind = Value::Kind::Array;
  ++c.i;  // consume '['
  for (;;) {
    c.skip_ws_and_comments();
    if (c.done()) fail("unterminated array");
    if (c.peek() == ']') {
      ++c.i;
      return v;
    }
    v.array.push_back(parse_value(c));
    c.skip_ws_and_comments();
    if (c.done()) fail("unterminated array");
    if (c.peek() == ',') {
      ++c.i;
    } else if (c.peek() == ']') {
      ++c.i;
      return v;
    } else {
      fail("expected ',' or ']' in array");
    }
  }
}

Value parse_scalar(Cursor& c) {
  Value v;
  if (c.peek() == '"') {
    v.kind = Value::Kind::String;
    ++c.i;
    while (!c.done() && c.peek() != '"') {
      if (c.peek() == '\\' && c.i + 1 < c.s.size()) {
        ++c.i;
        const char e = c.peek();
        if (e == 'n') v.str += '\n';
        else if (e == 't') v.str += '\t';
        else v.str += e;
      } else {
        v.str += c.peek();
      }
      ++c.i;
    }
    if (c.done()) fail("unterminated string");
    ++c.i;
    return v;
  }
  std::string token;
  while (!c.done()) {
    const char ch = c.peek();
    if (ch == ',' || ch == ']' || ch == '\n' || ch == '\r' || ch == '#' || ch == ' ' ||
        ch == '\t')
      break;
    token += ch;
    ++c.i;
  }
  if (token == "true" || token == "false") {
    v.kind = Value::Kind::Boolean;
    v.boolean = token == "true";
    return v;
  }
  if (token.empty()) fail("empty value");
  v.kind = Value::Kind::Number;
  try {
    std::size_t pos = 0;
    if (token.find('.') == std::string::npos && token.find('e') == std::string::npos &&
        token.find('E') == std::string::npos) {
      v.int_val = std::stoll(token, &pos);
      if (pos != token.size()) fail("bad number: " + token);
      v.is_int = true;
      v.num = static_cast<double>(v.int_val);
    } else {
      v.num = std::stod(token, &pos);
      if (pos != token.size()) fail("bad number: " + token);
    }
  } catch (const std::exception&) {
    fail("cannot parse value: " + token);
  }
  return v;
}

Value parse_value(Cursor& c) {
  if (c.peek() == '[') return parse_array(c);
  return parse_scalar(c);
}

}  // namespace

const Value& Table::at(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) fail("missing key '" + key + "'");
  return it->second;
}

double Table::get_double(const std::string& key) const {
  const Value& v = at(key);
  if (v.kind != Value::Kind::Number) fail("key '" + key + "' is not a number");
  return v.num;
}

double Table::get_double_or(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long long Table::get_int(const std::string& key) const {
  const Value& v = at(key);
  if (v.kind != Value::Kind::Number || !v.is_int) fail("key '" + key + "' is not an integer");
  return v.int_val;
}

long long Table::get_int_or(const std::string& key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

bool Table::get_bool_or(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const Value& v = at(key);
  if (v.kind != Value::Kind::Boolean) fail("key '" + key + "' is not a boolean");
  return v.boolean;
}

std::string Table::get_string(const std::string& key) const {
  const Value& v = at(key);
  if (v.kind != Value::Kind::String) fail("key '" + key + "' is not a string");
  return v.str;
}

std::string Table::get_string_or(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

Vector Table::get_vector(const std::string& key) const {
  const Value& v = at(key);
  if (v.kind != Value::Kind::Array) fail("key '" + key + "' is not an array");
  Vector out(v.array.size());
  for (std::size_t i = 0; i < v.array.size(); ++i) {
    if (v.array[i].kind != Value::Kind::Number)
      fail("array '" + key + "' must hold numbers");
    out[static_cast<Eigen::Index>(i)] = v.array[i].num;
  }
  return out;
}

Matrix Table::get_matrix(const std::string& key) const {
  const Value& v = at(key);
  if (v.kind != Value::Kind::Array) fail("key '" + key + "' is not an array");
  const std::size_t rows = v.array.size();
  if (rows == 0) return Matrix(0, 0);
  if (v.array[0].kind != Value::Kind::Array) fail("matrix '" + key + "' must nest arrays");
  const std::size_t cols = v.array[0].array.size();
  Matrix out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const Value& row = v.array[r];
    if (row.kind != Value::Kind::Array || row.array.size() != cols)
      fail("matrix '" + key + "' has ragged rows");
    for (std::size_t c = 0; c < cols; ++c) {
      if (row.array[c].kind != Value::Kind::Number)
        fail("matrix '" + key + "' must hold numbers");
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row.array[c].num;
    }
  }
  return out;
}

const Table& Document::table(const std::string& name) const {
  const auto it = tables.find(name);
  if (it == tables.end()) fail("missing table [" + name + "]");
  return it->second;
}

Document parse_string(const std::string& text) {
  Document doc;
  Table* current = &doc.root;
  Cursor c{text};
  for (;;) {
    c.skip_ws_and_comments();
    if (c.done()) break;
    if (c.peek() == '[') {
      ++c.i;
      std::string name;
      while (!c.done() && c.peek() != ']') {
        name += c.peek();
        ++c.i;
      }
      if (c.done()) fail("unterminated table header");
      ++c.i;
      current = &doc.tables[name];
      continue;
    }
    std::string key;
    while (!c.done() && (std::isalnum(static_cast<unsigned char>(c.peek())) ||
                         c.peek() == '_' || c.peek() == '-')) {
      key += c.peek();
      ++c.i;
    }
    if (key.empty()) fail("expected a key");
    c.skip_inline_ws();
    if (c.done() || c.peek() != '=') fail("expected '=' after key '" + key + "'");
    ++c.i;
    c.skip_inline_ws();
    if (c.done()) fail("missing value for key '" + key + "'");
    current->set(key, parse_value(c));
  }
  return doc;
}

Document parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str());
}

}  // namespace invreg::toml
