#pragma once

#include <map>
#include <string>
#include <vector>

#include "invreg/types.hpp"

namespace invreg::toml {

// Minimal TOML subset for the simulation spec: [table] headers, key = value,
// integers, floats, booleans, double-quoted strings, and (nested) arrays that
// may span lines. Comments start with '#'.
struct Value {
  enum class Kind { Number, Boolean, String, Array };
  Kind kind = Kind::Number;
  double num = 0.0;
  long long int_val = 0;
  bool is_int = false;
  bool boolean = false;
  std::string str;
  std::vector<Value> array;
};

class Table {
 public:
  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const Value& at(const std::string& key) const;

  double get_double(const std::string& key) const;
  double get_double_or(const std::string& key, double fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int_or(const std::string& key, long long fallback) const;
  bool get_bool_or(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key) const;
  std::string get_string_or(const std::string& key, const std::string& fallback) const;
  Vector get_vector(const std::string& key) const;
  Matrix get_matrix(const std::string& key) const;

  void set(const std::string& key, Value v) { values_[key] = std::move(v); }

 private:
  std::map<std::string, Value> values_;
};

struct Document {
  Table root;
  std::map<std::string, Table> tables;

  const Table& table(const std::string& name) const;
  bool has_table(const std::string& name) const { return tables.count(name) > 0; }
};

Document parse_string(const std::string& text);
Document parse_file(const std::string& path);

}  // namespace invreg::toml
