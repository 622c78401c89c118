#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "invreg/error.hpp"
#include "invreg/montecarlo.hpp"
#include "invreg/types.hpp"

namespace invreg::report {

inline constexpr int kSchemaVersion = 1;

// Small ordered JSON tree; doubles serialize with 17 significant digits so
// reports are byte-stable and round-trip safe.
class Node {
 public:
  static Node null();
  static Node boolean(bool b);
  static Node integer(long long v);
  static Node number(double v);
  static Node str(std::string s);
  static Node array();
  static Node object();
  static Node vector(const Vector& v);

  Node& set(const std::string& key, Node v);  // objects only, insertion order
  Node& push(Node v);                         // arrays only

  std::string dump(int indent = 0) const;

 private:
  enum class Kind { Null, Bool, Int, Double, Str, Arr, Obj };
  Kind kind_ = Kind::Null;
  bool bool_ = false;
  long long int_ = 0;
  double num_ = 0.0;
  std::string str_;
  std::vector<Node> arr_;
  std::vector<std::pair<std::string, Node>> obj_;

  void write(std::string& out, int indent, int depth) const;
};

std::string format_double(double v);

std::string error_json(const Error& e);

Node from_sim_summary(const mc::SimSummary& s);

}  // namespace invreg::report
