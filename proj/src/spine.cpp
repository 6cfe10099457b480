#include <spinefuse/error.hpp>
#include <spinefuse/mesh_io.hpp>
#include <spinefuse/spine.hpp>

#include "json_util.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <set>

namespace spinefuse {

using detail::json;

void BodyFrame::check() const {
  const Eigen::Vector3d axes[3] = {anterior, left, superior};
  for (int a = 0; a < 3; ++a) {
    if (!axes[a].allFinite() || std::abs(axes[a].norm() - 1.0) > 1e-9)
      throw Error(ErrorKind::Parameter, "body frame axes must be unit length");
    for (int b = a + 1; b < 3; ++b) {
      if (std::abs(axes[a].dot(axes[b])) > 1e-9) throw Error(ErrorKind::Parameter, "body frame axes must be orthogonal");
    }
  }
  if (anterior.cross(left).dot(superior) < 0.0)
    throw Error(ErrorKind::Parameter, "body frame must be right-handed (anterior x left = superior)");
}

const std::vector<std::string>& anatomical_order() {
  static const std::vector<std::string> order = [] {
    std::vector<std::string> o;
    for (int i = 1; i <= 7; ++i) o.push_back("C" + std::to_string(i));
    for (int i = 1; i <= 12; ++i) o.push_back("T" + std::to_string(i));
    for (int i = 1; i <= 5; ++i) o.push_back("L" + std::to_string(i));
    o.push_back("sacrum");
    o.push_back("pelvis");
    return o;
  }();
  return order;
}

const Vertebra* SpineModel::find(const std::string& label) const {
  for (const auto& v : vertebrae) {
    if (v.label == label) return &v;
  }
  return nullptr;
}

const Vertebra& SpineModel::at(const std::string& label) const {
  const Vertebra* v = find(label);
  if (!v) throw Error(ErrorKind::Lookup, "vertebra '" + label + "' not in spine model");
  return *v;
}

Points SpineModel::positions(const Vertebra& v) const {
  Points p(static_cast<Eigen::Index>(v.vertices.size()), 3);
  for (std::size_t k = 0; k < v.vertices.size(); ++k) p.row(k) = mesh.vertices.row(v.vertices[k]);
  return p;
}

TriMesh SpineModel::submesh(const Vertebra& v) const { return TriMesh{positions(v), v.faces}; }

std::vector<int> SpineModel::vertex_indices(const std::vector<std::string>& labels) const {
  std::vector<int> out;
  for (const auto& l : labels) {
    const auto& v = at(l);
    out.insert(out.end(), v.vertices.begin(), v.vertices.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void SpineModel::check() const {
  validate(mesh);
  frame.check();
  const auto& order = anatomical_order();
  std::set<std::string> seen;
  std::ptrdiff_t last_rank = -1;
  for (const auto& v : vertebrae) {
    if (!seen.insert(v.label).second) throw Error(ErrorKind::StructuralInput, "duplicate vertebra label '" + v.label + "'");
    auto it = std::find(order.begin(), order.end(), v.label);
    if (it == order.end()) throw Error(ErrorKind::StructuralInput, "unknown vertebra label '" + v.label + "'");
    const auto rank = it - order.begin();
    if (rank <= last_rank) throw Error(ErrorKind::StructuralInput, "vertebra '" + v.label + "' is out of anatomical order");
    last_rank = rank;
    const int nv = static_cast<int>(v.vertices.size());
    for (int g : v.vertices) {
      if (g < 0 || g >= mesh.vertex_count())
        throw Error(ErrorKind::StructuralInput, "vertebra '" + v.label + "' references vertex " + std::to_string(g));
    }
    for (const auto* set : {&v.superior, &v.inferior}) {
      for (int l : *set) {
        if (l < 0 || l >= nv)
          throw Error(ErrorKind::StructuralInput, "vertebra '" + v.label + "' endplate index " + std::to_string(l) + " out of range");
      }
    }
    for (Eigen::Index f = 0; f < v.faces.rows(); ++f) {
      for (int k = 0; k < 3; ++k) {
        if (v.faces(f, k) < 0 || v.faces(f, k) >= nv)
          throw Error(ErrorKind::StructuralInput, "vertebra '" + v.label + "' face index out of range");
      }
    }
  }
}

Eigen::Vector3d vertebra_centroid(const SpineModel& spine, const std::string& label) {
  const Vertebra& v = spine.at(label);
  if (v.vertices.empty()) throw Error(ErrorKind::Degenerate, "vertebra '" + label + "' has no vertices");
  return centroid(spine.positions(v));
}

LandmarkSet centroid_landmarks(const SpineModel& spine, const std::vector<std::string>& names, double sigma,
                               const std::string& frame) {
  LandmarkSet set;
  set.frame = frame;
  for (const auto& n : names) set.entries.push_back({n, vertebra_centroid(spine, n), sigma});
  return set;
}

namespace {

std::pair<Eigen::Vector3d, Eigen::Vector3d> plane_basis(const BodyFrame& f, Plane p) {
  return p == Plane::Sagittal ? std::pair{f.anterior, f.superior} : std::pair{f.left, f.superior};
}

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

}  // namespace

Eigen::Vector2d endplate_direction(const SpineModel& spine, const std::string& label, Endplate which, Plane plane) {
  spine.frame.check();
  const Vertebra& v = spine.at(label);
  const auto& set = which == Endplate::Superior ? v.superior : v.inferior;
  if (set.size() < 2)
    throw Error(ErrorKind::Degenerate, "endplate " + label + ":" + to_string(which) + " needs at least 2 vertices");

  const auto [e1, e2] = plane_basis(spine.frame, plane);
  std::vector<Eigen::Vector2d> pts;
  pts.reserve(set.size());
  for (int l : set) {
    const Eigen::Vector3d p = spine.mesh.vertices.row(v.vertices[l]).transpose();
    pts.emplace_back(p.dot(e1), p.dot(e2));
  }
  // summation in a canonical order makes the result independent of the input order
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.x() != b.x() ? a.x() < b.x() : a.y() < b.y();
  });
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) cov.noalias() += (p - mean) * (p - mean).transpose();

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  const Eigen::Vector2d ev = eig.eigenvalues();  // ascending
  if (!(ev[1] > 1e-18 * std::max(1.0, mean.squaredNorm())) || ev[0] >= ev[1] * (1.0 - 1e-9))
    throw Error(ErrorKind::Degenerate, "endplate " + label + ":" + to_string(which) + " has no dominant direction");
  Eigen::Vector2d dir = eig.eigenvectors().col(1).normalized();
  if (dir.x() < 0.0 || (dir.x() == 0.0 && dir.y() < 0.0)) dir = -dir;
  return dir;
}

CobbMeasurement cobb_angle(const SpineModel& spine, const EndplateRef& upper, const EndplateRef& lower, Plane plane) {
  const Eigen::Vector2d u = endplate_direction(spine, upper.label, upper.which, plane);
  const Eigen::Vector2d l = endplate_direction(spine, lower.label, lower.which, plane);
  CobbMeasurement m;
  // positive when the upper plate turns counter-clockwise onto the lower one in
  // (anterior, superior) coordinates, i.e. the plates open posteriorly
  m.angle_deg = std::atan2(cross2(u, l), u.dot(l)) * 180.0 / std::numbers::pi;
  m.upper = upper;
  m.lower = lower;
  m.plane = plane;
  m.plausible = std::abs(m.angle_deg) < 90.0;
  return m;
}

SpineModel with_positions(const SpineModel& spine, const Points& positions) {
  if (positions.rows() != spine.mesh.vertex_count())
    throw Error(ErrorKind::StructuralInput, "with_positions: vertex count mismatch");
  SpineModel out = spine;
  out.mesh.vertices = positions;
  return out;
}

std::string to_string(Endplate e) { return e == Endplate::Superior ? "superior" : "inferior"; }
std::string to_string(Plane p) { return p == Plane::Sagittal ? "sagittal" : "coronal"; }

Endplate endplate_from_string(const std::string& s) {
  if (s == "superior") return Endplate::Superior;
  if (s == "inferior") return Endplate::Inferior;
  throw Error(ErrorKind::Config, "unknown endplate '" + s + "'");
}

Plane plane_from_string(const std::string& s) {
  if (s == "sagittal") return Plane::Sagittal;
  if (s == "coronal") return Plane::Coronal;
  throw Error(ErrorKind::Config, "unknown plane '" + s + "'");
}

EndplateRef parse_endplate_ref(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw Error(ErrorKind::Config, "endplate reference must look like L1:superior");
  return {s.substr(0, colon), endplate_from_string(s.substr(colon + 1))};
}

namespace {

json frame_to_json(const BodyFrame& f) {
  return json{{"origin", detail::to_json(f.origin)},
              {"anterior", detail::to_json(f.anterior)},
              {"left", detail::to_json(f.left)},
              {"superior", detail::to_json(f.superior)}};
}

BodyFrame frame_from_json(const json& j, const std::filesystem::path& path) {
  if (!j.is_object()) detail::schema_fail(path, "frame must be an object");
  BodyFrame f;
  for (const char* key : {"origin", "anterior", "left", "superior"}) {
    if (!j.contains(key)) detail::schema_fail(path, std::string("frame lacks '") + key + "'");
  }
  f.origin = detail::vec3_from(j["origin"], path, "frame origin");
  f.anterior = detail::vec3_from(j["anterior"], path, "frame anterior");
  f.left = detail::vec3_from(j["left"], path, "frame left");
  f.superior = detail::vec3_from(j["superior"], path, "frame superior");
  f.check();
  return f;
}

std::vector<int> int_list(const json& j, const std::filesystem::path& path, const std::string& what) {
  if (!j.is_array()) detail::schema_fail(path, what + " must be an array of integers");
  std::vector<int> out;
  for (const auto& e : j) {
    if (!e.is_number_integer()) detail::schema_fail(path, what + " must be an array of integers");
    out.push_back(e.get<int>());
  }
  return out;
}

}  // namespace

BodyFrame read_frame(const std::filesystem::path& path) { return frame_from_json(detail::read_json(path), path); }

void write_frame(const std::filesystem::path& path, const BodyFrame& frame) {
  detail::write_json(path, frame_to_json(frame));
}

SpineModel read_spine(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  const json j = detail::read_json(manifest_path);
  if (!j.is_object() || !j.contains("order") || !j["order"].is_array())
    detail::schema_fail(manifest_path, "manifest needs an 'order' array");

  SpineModel spine;
  if (j.contains("frame")) spine.frame = frame_from_json(j["frame"], manifest_path);

  const bool joined = j.contains("mesh");
  if (joined) {
    if (!j["mesh"].is_string()) detail::schema_fail(manifest_path, "'mesh' must be a file name");
    spine.mesh = read_mesh(dir / j["mesh"].get<std::string>());
    if (!j.contains("vertices") || !j["vertices"].is_object())
      detail::schema_fail(manifest_path, "'vertices' map is required alongside 'mesh'");
  }

  std::vector<Eigen::Vector3d> verts;
  std::vector<Eigen::Vector3i> faces;
  for (const auto& entry : j["order"]) {
    if (!entry.is_string()) detail::schema_fail(manifest_path, "'order' must list vertebra labels");
    Vertebra v;
    v.label = entry.get<std::string>();

    std::optional<TriMesh> part;
    if (j.contains("files") && j["files"].contains(v.label))
      part = read_mesh(dir / j["files"][v.label].get<std::string>());
    else if (!joined)
      detail::schema_fail(manifest_path, "no file listed for vertebra '" + v.label + "'");

    if (joined) {
      if (!j["vertices"].contains(v.label)) detail::schema_fail(manifest_path, "no vertex list for '" + v.label + "'");
      v.vertices = int_list(j["vertices"][v.label], manifest_path, "vertices of " + v.label);
      if (part) {
        if (part->vertex_count() != static_cast<Eigen::Index>(v.vertices.size()))
          detail::schema_fail(manifest_path, "vertebra file for '" + v.label + "' disagrees with its vertex list");
        v.faces = part->faces;
      }
    } else {
      const int base = static_cast<int>(verts.size());
      for (Eigen::Index i = 0; i < part->vertex_count(); ++i) {
        verts.push_back(part->vertices.row(i).transpose());
        v.vertices.push_back(base + static_cast<int>(i));
      }
      for (Eigen::Index f = 0; f < part->face_count(); ++f)
        faces.emplace_back(part->faces.row(f).transpose() + Eigen::Vector3i::Constant(base));
      v.faces = part->faces;
    }

    if (j.contains("endplates") && j["endplates"].contains(v.label)) {
      const json& e = j["endplates"][v.label];
      if (e.contains("superior")) v.superior = int_list(e["superior"], manifest_path, v.label + " superior endplate");
      if (e.contains("inferior")) v.inferior = int_list(e["inferior"], manifest_path, v.label + " inferior endplate");
    }
    spine.vertebrae.push_back(std::move(v));
  }

  if (!joined) {
    spine.mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
    for (std::size_t i = 0; i < verts.size(); ++i) spine.mesh.vertices.row(i) = verts[i].transpose();
    spine.mesh.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
    for (std::size_t i = 0; i < faces.size(); ++i) spine.mesh.faces.row(i) = faces[i].transpose();
  }
  spine.check();
  return spine;
}

void write_spine(const std::filesystem::path& dir, const SpineModel& spine) {
  spine.check();
  std::filesystem::create_directories(dir);
  json order = json::array();
  json files = json::object();
  json endplates = json::object();
  json vertices = json::object();
  for (const auto& v : spine.vertebrae) {
    order.push_back(v.label);
    const std::string file = v.label + ".ply";
    write_ply(dir / file, spine.submesh(v));
    files[v.label] = file;
    vertices[v.label] = v.vertices;
    if (!v.superior.empty() || !v.inferior.empty())
      endplates[v.label] = json{{"superior", v.superior}, {"inferior", v.inferior}};
  }
  write_ply(dir / "spine.ply", spine.mesh);
  detail::write_json(dir / "manifest.json", json{{"order", order},
                                                 {"files", files},
                                                 {"endplates", endplates},
                                                 {"frame", frame_to_json(spine.frame)},
                                                 {"mesh", "spine.ply"},
                                                 {"vertices", vertices}});
}

void write_cobb(const std::filesystem::path& path, const CobbMeasurement& m) {
  detail::write_json(path, json{{"angle_deg", m.angle_deg},
                                {"upper", {{"label", m.upper.label}, {"endplate", to_string(m.upper.which)}}},
                                {"lower", {{"label", m.lower.label}, {"endplate", to_string(m.lower.which)}}},
                                {"plane", to_string(m.plane)},
                                {"plausible", m.plausible}});
}

}  // namespace spinefuse
