#pragma once

#include <spinefuse/error.hpp>
#include <spinefuse/similarity.hpp>

#include <json.hpp>

#include <Eigen/Core>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace spinefuse::detail {

using nlohmann::json;

inline json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Parse, path.string() + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Parse, path.string() + ": byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Parse, path.string() + ": cannot open file for writing");
  out << text;
  if (!out) throw Error(ErrorKind::Parse, path.string() + ": write failed");
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

/// Schema violations inside an already-parsed document.
[[noreturn]] inline void schema_fail(const std::filesystem::path& path, const std::string& msg) {
  throw Error(ErrorKind::Parse, path.string() + ": " + msg);
}

inline json to_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

inline Eigen::Vector3d vec3_from(const json& j, const std::filesystem::path& path, const std::string& what) {
  if (!j.is_array() || j.size() != 3) schema_fail(path, what + " must be an array of 3 numbers");
  Eigen::Vector3d v;
  for (int k = 0; k < 3; ++k) {
    if (!j[k].is_number()) schema_fail(path, what + " must be an array of 3 numbers");
    v[k] = j[k].get<double>();
  }
  return v;
}

inline json to_json(const SimilarityTransform& t) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(t.rotation(r, c));
  return json{{"scale", t.scale}, {"rotation", rot}, {"translation", to_json(t.translation)}};
}

inline SimilarityTransform transform_from(const json& j, const std::filesystem::path& path) {
  if (!j.is_object() || !j.contains("scale") || !j.contains("rotation") || !j.contains("translation"))
    schema_fail(path, "transform needs scale, rotation and translation");
  SimilarityTransform t;
  if (!j["scale"].is_number()) schema_fail(path, "scale must be a number");
  t.scale = j["scale"].get<double>();
  const json& rot = j["rotation"];
  if (!rot.is_array() || rot.size() != 9) schema_fail(path, "rotation must hold 9 row-major entries");
  for (int k = 0; k < 9; ++k) {
    if (!rot[k].is_number()) schema_fail(path, "rotation entries must be numbers");
    t.rotation(k / 3, k % 3) = rot[k].get<double>();
  }
  t.translation = vec3_from(j["translation"], path, "translation");
  t.check();
  return t;
}

}  // namespace spinefuse::detail
