#pragma once

#include <set>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

namespace pmsm_lpv {
namespace internal {

/// Strict reader for one JSON object: every key must be consumed before
/// Finish, and type errors name the full key path.
class JsonReader {
 public:
  JsonReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) Fail(path_, "expected an object");
  }

  bool Has(const std::string& key) const { return j_.contains(key); }
  std::string PathOf(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  /// Leaves *out unchanged when the key is absent.
  void Read(const std::string& key, double* out) {
    if (const nlohmann::json* v = Take(key)) {
      if (!v->is_number()) Fail(PathOf(key), "expected a number");
      *out = v->get<double>();
    }
  }
  void Read(const std::string& key, int* out) {
    if (const nlohmann::json* v = Take(key)) {
      if (!v->is_number_integer()) Fail(PathOf(key), "expected an integer");
      *out = v->get<int>();
    }
  }
  void Read(const std::string& key, bool* out) {
    if (const nlohmann::json* v = Take(key)) {
      if (!v->is_boolean()) Fail(PathOf(key), "expected true or false");
      *out = v->get<bool>();
    }
  }
  void Read(const std::string& key, std::string* out) {
    if (const nlohmann::json* v = Take(key)) {
      if (!v->is_string()) Fail(PathOf(key), "expected a string");
      *out = v->get<std::string>();
    }
  }

  /// Value of a present key for custom parsing, or nullptr.
  const nlohmann::json* Take(const std::string& key) {
    if (!j_.contains(key)) return nullptr;
    used_.insert(key);
    return &j_.at(key);
  }

  /// Throws for the first key that was never read.
  void Finish() const {
    for (const auto& item : j_.items()) {
      if (!used_.count(item.key())) Fail(PathOf(item.key()), "unknown key");
    }
  }

  [[noreturn]] static void Fail(const std::string& path, const std::string& what) {
    throw std::invalid_argument("'" + path + "': " + what);
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> used_;
};

/// Path of element i of the array at `path`.
inline std::string ElementPath(const std::string& path, size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

inline const nlohmann::json& RequireArray(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array()) JsonReader::Fail(path, "expected an array");
  return j;
}

inline nlohmann::json MatrixToJson(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

/// A matrix stored as an array of equally long rows of numbers.
inline Eigen::MatrixXd MatrixFromJson(const nlohmann::json& j, const std::string& path) {
  RequireArray(j, path);
  if (j.empty()) return Eigen::MatrixXd(0, 0);
  const size_t cols = RequireArray(j[0], ElementPath(path, 0)).size();
  Eigen::MatrixXd m(j.size(), cols);
  for (size_t i = 0; i < j.size(); ++i) {
    const std::string row_path = ElementPath(path, i);
    if (RequireArray(j[i], row_path).size() != cols) {
      JsonReader::Fail(row_path, "rows must have equal length");
    }
    for (size_t k = 0; k < cols; ++k) {
      if (!j[i][k].is_number()) JsonReader::Fail(ElementPath(row_path, k), "expected a number");
      m(i, k) = j[i][k].get<double>();
    }
  }
  return m;
}

}  // namespace internal
}  // namespace pmsm_lpv
