#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "alea/common.hpp"

namespace alea {

using Json = nlohmann::json;

inline std::string json_pointer_escape(std::string_view token) {
  std::string out;
  out.reserve(token.size());
  for (char c : token) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

// Hierarchical settings tree. Every read marks its path as consumed; after a
// module has pulled out everything it understands, require_all_consumed()
// turns any leftover leaf into an UnknownKey error with its full path. Reads
// with defaults record the default into the effective tree, so validating an
// effective tree again is a no-op (validation is idempotent).
class ConfigTree {
 public:
  ConfigTree() : root_(Json::object()), effective_(Json::object()) {}

  static ConfigTree from_json(Json j) {
    if (!j.is_object())
      throw ConfigError(ConfigError::Kind::TypeMismatch, "", "top level must be an object");
    ConfigTree t;
    t.root_ = std::move(j);
    t.effective_ = t.root_;
    return t;
  }

  static ConfigTree parse(const std::string& text) {
    Json j = Json::parse(text, nullptr, false);
    if (j.is_discarded())
      throw ConfigError(ConfigError::Kind::TypeMismatch, "", "malformed JSON");
    return from_json(std::move(j));
  }

  static ConfigTree load(const std::filesystem::path& path) { return parse(read_file(path)); }

  const Json& root() const { return root_; }

  // Root with all defaults applied by the reads performed so far.
  const Json& effective() const { return effective_; }

  bool has(const std::string& ptr) const { return root_.contains(Json::json_pointer(ptr)); }

  std::string get_string(const std::string& ptr) { return require(ptr, Json::value_t::string).get<std::string>(); }

  std::string get_string_or(const std::string& ptr, const std::string& dflt) {
    if (!has(ptr)) return set_default(ptr, Json(dflt)).get<std::string>();
    return get_string(ptr);
  }

  std::optional<std::string> get_string_opt(const std::string& ptr) {
    if (!has(ptr)) return std::nullopt;
    return get_string(ptr);
  }

  double get_real(const std::string& ptr) {
    const Json& v = require(ptr, Json::value_t::number_float);
    return v.get<double>();
  }

  double get_real_or(const std::string& ptr, double dflt) {
    if (!has(ptr)) return set_default(ptr, Json(dflt)).get<double>();
    return get_real(ptr);
  }

  std::optional<double> get_real_opt(const std::string& ptr) {
    if (!has(ptr)) return std::nullopt;
    return get_real(ptr);
  }

  int64_t get_int(const std::string& ptr) {
    const Json& v = require(ptr, Json::value_t::number_integer);
    return v.get<int64_t>();
  }

  int64_t get_int_or(const std::string& ptr, int64_t dflt) {
    if (!has(ptr)) return set_default(ptr, Json(dflt)).get<int64_t>();
    return get_int(ptr);
  }

  std::optional<int64_t> get_int_opt(const std::string& ptr) {
    if (!has(ptr)) return std::nullopt;
    return get_int(ptr);
  }

  bool get_bool_or(const std::string& ptr, bool dflt) {
    if (!has(ptr)) return set_default(ptr, Json(dflt)).get<bool>();
    const Json& v = require(ptr, Json::value_t::boolean);
    return v.get<bool>();
  }

  std::vector<double> get_real_array(const std::string& ptr) {
    const Json& v = lookup_required(ptr);
    if (!v.is_array()) throw ConfigError(ConfigError::Kind::TypeMismatch, display(ptr), "expected array");
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigError(ConfigError::Kind::TypeMismatch, display(ptr), "expected numeric array");
      out.push_back(e.get<double>());
    }
    mark_subtree(ptr);
    return out;
  }

  // Number of elements of an array node; 0 when absent. The node itself is
  // marked so an empty array does not linger as an unknown leaf.
  size_t array_size(const std::string& ptr) {
    if (!has(ptr)) return 0;
    const Json& v = root_.at(Json::json_pointer(ptr));
    if (!v.is_array()) throw ConfigError(ConfigError::Kind::TypeMismatch, display(ptr), "expected array");
    consumed_exact_.insert(ptr);
    return v.size();
  }

  void mark_subtree(const std::string& ptr) { consumed_subtree_.insert(ptr); }

  std::vector<std::string> unconsumed() const {
    std::vector<std::string> out;
    walk(root_, "", out);
    return out;
  }

  void require_all_consumed() const {
    auto left = unconsumed();
    if (left.empty()) return;
    std::string detail;
    for (size_t i = 1; i < left.size() && i < 4; ++i) detail += (i > 1 ? ", " : "also: ") + display(left[i]);
    throw ConfigError(ConfigError::Kind::UnknownKey, display(left.front()), detail);
  }

  static std::string display(const std::string& ptr) {
    return ptr.empty() ? ptr : (ptr.front() == '/' ? ptr.substr(1) : ptr);
  }

 private:
  const Json& lookup_required(const std::string& ptr) {
    if (!has(ptr)) throw ConfigError(ConfigError::Kind::MissingRequired, display(ptr));
    return root_.at(Json::json_pointer(ptr));
  }

  const Json& require(const std::string& ptr, Json::value_t kind) {
    const Json& v = lookup_required(ptr);
    bool ok = false;
    switch (kind) {
      case Json::value_t::string: ok = v.is_string(); break;
      case Json::value_t::boolean: ok = v.is_boolean(); break;
      case Json::value_t::number_float: ok = v.is_number(); break;
      case Json::value_t::number_integer: ok = v.is_number_integer(); break;
      default: ok = false; break;
    }
    if (!ok) throw ConfigError(ConfigError::Kind::TypeMismatch, display(ptr), "got " + std::string(v.type_name()));
    consumed_exact_.insert(ptr);
    return v;
  }

  const Json& set_default(const std::string& ptr, Json v) {
    consumed_exact_.insert(ptr);
    effective_[Json::json_pointer(ptr)] = std::move(v);
    return effective_.at(Json::json_pointer(ptr));
  }

  bool covered(const std::string& path) const {
    if (consumed_exact_.count(path)) return true;
    for (const auto& p : consumed_subtree_) {
      if (path == p) return true;
      if (path.size() > p.size() && path.compare(0, p.size(), p) == 0 && path[p.size()] == '/') return true;
    }
    return false;
  }

  void walk(const Json& node, const std::string& path, std::vector<std::string>& out) const {
    if (path.empty() && node.empty()) return;
    if (node.is_object() && !node.empty()) {
      for (auto it = node.begin(); it != node.end(); ++it)
        walk(it.value(), path + "/" + json_pointer_escape(it.key()), out);
      return;
    }
    if (node.is_array() && !node.empty()) {
      for (size_t i = 0; i < node.size(); ++i) walk(node.at(i), path + "/" + std::to_string(i), out);
      return;
    }
    if (!covered(path)) out.push_back(path);
  }

  Json root_;
  Json effective_;
  std::set<std::string> consumed_exact_;
  std::set<std::string> consumed_subtree_;
};

}  // namespace alea
