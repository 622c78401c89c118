#include "invreg/report.hpp"

#include <cmath>
#include <cstdio>

namespace invreg::report {

std::string format_double(double v) {
  if (std::isnan(v)) return "null";
  if (std::isinf(v)) return v > 0 ? "1e9999" : "-1e9999";  // never expected in reports
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Node Node::null() { return Node(); }

Node Node::boolean(bool b) {
  Node n;
  n.kind_ = Kind::Bool;
  n.bool_ = b;
  return n;
}

Node Node::integer(long long v) {
  Node n;
  n.kind_ = Kind::Int;
  n.int_ = v;
  return n;
}

Node Node::number(double v) {
  Node n;
  n.kind_ = Kind::Double;
  n.num_ = v;
  return n;
}

Node Node::str(std::string s) {
  Node n;
  n.kind_ = Kind::Str;
  n.str_ = std::move(s);
  return n;
}

Node Node::array() {
  Node n;
  n.kind_ = Kind::Arr;
  return n;
}

Node Node::object() {
  Node n;
  n.kind_ = Kind::Obj;
  return n;
}

Node Node::vector(const Vector& v) {
  Node n = array();
  for (Eigen::Index i = 0; i < v.size(); ++i) n.push(number(v[i]));
  return n;
}

Node& Node::set(const std::string& key, Node v) {
  obj_.emplace_back(key, std::move(v));
  return *this;
}

Node& Node::push(Node v) {
  arr_.push_back(std::move(v));
  return *this;
}

namespace {

void escape_into(std::string& out, const std::string& s) {
  out += '"';
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  out += '"';
}

void pad(std::string& out, int indent, int depth) {
  if (indent > 0) {
    out += '\n';
    out.append(static_cast<std::size_t>(indent) * depth, ' ');
  }
}

}  // namespace

void Node::write(std::string& out, int indent, int depth) const {
  switch (kind_) {
    case Kind::Null: out += "null"; break;
    case Kind::Bool: out += bool_ ? "true" : "false"; break;
    case Kind::Int: out += std::to_string(int_); break;
    case Kind::Double: out += format_double(num_); break;
    case Kind::Str: escape_into(out, str_); break;
    case Kind::Arr: {
      out += '[';
      for (std::size_t i = 0; i < arr_.size(); ++i) {
        if (i) out += ',';
        pad(out, indent, depth + 1);
        arr_[i].write(out, indent, depth + 1);
      }
      if (!arr_.empty()) pad(out, indent, depth);
      out += ']';
      break;
    }
    case Kind::Obj: {
      out += '{';
      for (std::size_t i = 0; i < obj_.size(); ++i) {
        if (i) out += ',';
        pad(out, indent, depth + 1);
        escape_into(out, obj_[i].first);
        out += indent > 0 ? ": " : ":";
        obj_[i].second.write(out, indent, depth + 1);
      }
      if (!obj_.empty()) pad(out, indent, depth);
      out += '}';
      break;
    }
  }
}

std::string Node::dump(int indent) const {
  std::string out;
  write(out, indent, 0);
  out += '\n';
  return out;
}

std::string error_json(const Error& e) {
  Node n = Node::object();
  Node inner = Node::object();
  inner.set("code", Node::str(e.code_name()));
  inner.set("kind",
            Node::str(e.kind() == ErrorKind::Validation ? "validation" : "numeric"));
  inner.set("message", Node::str(e.what()));
  n.set("error", std::move(inner));
  return n.dump(2);
}

Node from_sim_summary(const mc::SimSummary& s) {
  Node n = Node::object();
  n.set("schema_version", Node::integer(kSchemaVersion));
  n.set("method", Node::str(s.method));
  n.set("replications", Node::integer(s.replications));
  n.set("completed", Node::integer(s.completed));
  n.set("failures", Node::integer(s.failures));
  if (s.has_rejection) {
    Node r = Node::object();
    r.set("rate", Node::number(s.rejection_rate));
    r.set("mc_se", Node::number(s.rejection_se));
    n.set("rejection", std::move(r));
  } else {
    n.set("rejection", Node::null());
  }
  if (s.has_coverage) {
    Node c = Node::object();
    c.set("rate", Node::number(s.coverage));
    c.set("mc_se", Node::number(s.coverage_se));
    c.set("target", Node::number(s.true_value));
    n.set("coverage", std::move(c));
  } else {
    n.set("coverage", Node::null());
  }
  Node est = Node::object();
  est.set("mean", Node::number(s.est_mean));
  est.set("variance", Node::number(s.est_var));
  n.set("estimates", std::move(est));
  if (s.has_ks) {
    Node k = Node::object();
    k.set("statistic", Node::number(s.ks_statistic));
    k.set("reference_lambdas", Node::vector(s.reference_lambdas));
    n.set("ks", std::move(k));
  } else {
    n.set("ks", Node::null());
  }
  return n;
}

}  // namespace invreg::report
