#include "robustcbf/uncertainty.hpp"

#include "json.hpp"

#include <cmath>
#include <stdexcept>

namespace robustcbf {

namespace {

using nlohmann::json;

json rows_of(const MatrixXd& M) {
  json out = json::array();
  for (Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    out.push_back(row);
  }
  return out;
}

json list_of(const VectorXd& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

double number(const json& j, const char* what) {
  if (!j.is_number()) throw std::invalid_argument(std::string(what) + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + " must be finite");
  return v;
}

VectorXd vector_from(const json& j, const char* what) {
  if (!j.is_array()) throw std::invalid_argument(std::string(what) + " must be an array");
  VectorXd v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) v(i) = number(j[i], what);
  return v;
}

MatrixXd matrix_from(const json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument(std::string(what) + " must be a non-empty array of rows");
  const Index rows = static_cast<Index>(j.size());
  const Index cols = static_cast<Index>(j[0].is_array() ? j[0].size() : 0);
  MatrixXd M(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const VectorXd r = vector_from(j[i], what);
    if (r.size() != cols || cols == 0) throw std::invalid_argument(std::string(what) + " has ragged rows");
    M.row(i) = r.transpose();
  }
  return M;
}

json parse_typed(const std::string& text, const char* type) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("type") || doc["type"] != type)
    throw std::invalid_argument(std::string("expected a document with type \"") + type + "\"");
  return doc;
}

}  // namespace

std::string to_json(const UncertaintyPolytope& set) {
  json doc{{"type", "polytope"}, {"C", rows_of(set.C)}, {"d", list_of(set.d)}};
  return doc.dump();
}

std::string to_json(const UncertaintyEllipsoid& set) {
  json doc{{"type", "ellipsoid"}, {"P", rows_of(set.P)}, {"q", list_of(set.q)}, {"r", set.r}};
  return doc.dump();
}

UncertaintyPolytope polytope_from_json(const std::string& text) {
  const json doc = parse_typed(text, "polytope");
  UncertaintyPolytope set;
  set.C = matrix_from(doc.at("C"), "C");
  set.d = vector_from(doc.at("d"), "d");
  if (set.d.size() != set.C.rows()) throw std::invalid_argument("C and d disagree in length");
  return set;
}

UncertaintyEllipsoid ellipsoid_from_json(const std::string& text) {
  const json doc = parse_typed(text, "ellipsoid");
  UncertaintyEllipsoid set;
  set.P = matrix_from(doc.at("P"), "P");
  set.q = vector_from(doc.at("q"), "q");
  set.r = number(doc.at("r"), "r");
  if (set.P.rows() != set.P.cols() || set.q.size() != set.P.rows()) throw std::invalid_argument("P and q have inconsistent sizes");
  if ((set.P - set.P.transpose()).cwiseAbs().maxCoeff() > 0.0) throw std::invalid_argument("P is not symmetric");
  return set;
}

}  // namespace robustcbf
