#include <spinefuse/error.hpp>
#include <spinefuse/registration.hpp>
#include <spinefuse/rotation.hpp>
#include <spinefuse/spatial.hpp>

#include "json_util.hpp"

#include <cmath>
#include <set>
#include <sstream>

namespace spinefuse {

using detail::json;

const Landmark* LandmarkSet::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

const Landmark& LandmarkSet::at(const std::string& name) const {
  const Landmark* l = find(name);
  if (!l) throw Error(ErrorKind::Lookup, "landmark '" + name + "' not found in frame '" + frame + "'");
  return *l;
}

void LandmarkSet::check() const {
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (!seen.insert(e.name).second) throw Error(ErrorKind::Parameter, "duplicate landmark name '" + e.name + "'");
    if (!(e.sigma > 0.0) || !std::isfinite(e.sigma))
      throw Error(ErrorKind::Parameter, "landmark '" + e.name + "' needs sigma > 0");
    if (!e.position.allFinite()) throw Error(ErrorKind::Parameter, "landmark '" + e.name + "' has a non-finite position");
  }
}

std::vector<std::string> full_landmark_subset() { return {"C1", "C7", "T7", "L4", "L5"}; }
std::vector<std::string> reduced_landmark_subset() { return {"C1", "T7", "L5"}; }

std::vector<std::string> parse_landmark_subset(const std::string& spec) {
  if (spec == "full") return full_landmark_subset();
  if (spec == "reduced") return reduced_landmark_subset();
  const std::string prefix = "custom:";
  if (spec.rfind(prefix, 0) == 0) {
    std::vector<std::string> names;
    std::stringstream ss(spec.substr(prefix.size()));
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) names.push_back(item);
    }
    if (names.empty()) throw Error(ErrorKind::Config, "custom landmark subset is empty");
    return names;
  }
  throw Error(ErrorKind::Config, "unknown landmark subset '" + spec + "' (expected full, reduced or custom:<names>)");
}

RegistrationReport coarse_register(const LandmarkSet& source, const LandmarkSet& target,
                                   const std::vector<std::string>& subset) {
  source.check();
  target.check();
  if (subset.size() < 3) throw Error(ErrorKind::Degenerate, "coarse registration needs at least 3 landmarks");
  if (std::set<std::string>(subset.begin(), subset.end()).size() != subset.size())
    throw Error(ErrorKind::Config, "landmark subset repeats a name");

  const auto n = static_cast<Eigen::Index>(subset.size());
  Points s(n, 3), t(n, 3);
  Eigen::VectorXd sigma(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Landmark& ls = source.at(subset[i]);
    const Landmark& lt = target.at(subset[i]);
    s.row(i) = ls.position.transpose();
    t.row(i) = lt.position.transpose();
    // independent isotropic noise on both ends adds in quadrature
    sigma[i] = std::sqrt(ls.sigma * ls.sigma + lt.sigma * lt.sigma);
  }
  const auto est = weighted_similarity(s, t, sigma);

  RegistrationReport report;
  report.transform = est.transform;
  report.subset = subset;
  report.residuals.assign(est.residuals.data(), est.residuals.data() + n);
  double num = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) num += est.weights[i] * est.residuals[i] * est.residuals[i];
  report.rms = std::sqrt(num / est.weights.sum());
  report.converged = true;
  return report;
}

Points apply_transform(const Points& points, const SimilarityTransform& transform) {
  transform.check();
  if (transform.scale == 1.0 && transform.rotation == Eigen::Matrix3d::Identity() &&
      transform.translation.isZero(0.0))
    return points;
  return transform.apply_rows(points);
}

TriMesh apply_transform(const TriMesh& mesh, const SimilarityTransform& transform) {
  TriMesh out;
  out.vertices = apply_transform(mesh.vertices, transform);
  out.faces = mesh.faces;
  return out;
}

RegistrationReport icp_register(const Points& source, const TriMesh& target, const IcpConfig& config) {
  if (source.rows() == 0 || target.vertex_count() == 0 || target.face_count() == 0)
    throw Error(ErrorKind::StructuralInput, "icp_register: empty source or target");
  if (!source.allFinite()) throw Error(ErrorKind::StructuralInput, "icp_register: non-finite source point");
  if (config.max_iters < 1 || !(config.tol >= 0.0) || config.max_points < 1)
    throw Error(ErrorKind::Config, "icp_register: invalid configuration");

  const Eigen::Index stride = (source.rows() + config.max_points - 1) / config.max_points;
  Points src((source.rows() + stride - 1) / stride, 3);
  for (Eigen::Index i = 0, k = 0; i < source.rows(); i += stride, ++k) src.row(k) = source.row(i);

  const TriangleTree tree(target);
  Eigen::AlignedBox3d bbox;
  for (Eigen::Index i = 0; i < target.vertex_count(); ++i) bbox.extend(target.vertices.row(i).transpose().eval());
  const double diagonal = bbox.diagonal().norm();

  RegistrationReport report;
  if (config.align_centroids) report.transform.translation = centroid(target.vertices) - centroid(src);

  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(src.rows());
  Points moved(src.rows(), 3), matched(src.rows(), 3);
  for (int iter = 0;; ++iter) {
    moved = report.transform.apply_rows(src);
    double sq = 0.0;
    for (Eigen::Index i = 0; i < moved.rows(); ++i) {
      const auto hit = tree.closest_point(moved.row(i).transpose());
      matched.row(i) = hit.point.transpose();
      sq += hit.squared_distance;
    }
    const double rms = std::sqrt(sq / static_cast<double>(moved.rows()));
    report.rms_trace.push_back(rms);
    report.rms = rms;
    if (iter > 0 && report.rms_trace[iter - 1] - rms < config.tol) {
      report.converged = true;
      break;
    }
    if (iter == config.max_iters) break;

    const Eigen::Vector3d mc = centroid(moved);
    const Eigen::Vector3d tc = centroid(matched);
    const Points mc_rows = moved.rowwise() - mc.transpose();
    const Points tc_rows = matched.rowwise() - tc.transpose();
    SimilarityTransform step;
    step.rotation = fit_rotation(mc_rows, tc_rows, ones).rotation;
    step.translation = tc - step.rotation * mc;
    report.transform = compose(step, report.transform);
    report.iterations = iter + 1;
  }
  report.stalled = report.rms > config.stall_fraction * diagonal;
  return report;
}

RegistrationReport icp_register(const TriMesh& source, const TriMesh& target, const IcpConfig& config) {
  validate(source);
  return icp_register(source.vertices, target, config);
}

LandmarkSet read_landmarks(const std::filesystem::path& path) {
  const json j = detail::read_json(path);
  if (!j.is_object() || !j.contains("landmarks") || !j["landmarks"].is_array())
    detail::schema_fail(path, "expected an object with a 'landmarks' array");
  LandmarkSet set;
  if (j.contains("frame")) {
    if (!j["frame"].is_string()) detail::schema_fail(path, "'frame' must be a string");
    set.frame = j["frame"].get<std::string>();
  }
  for (const auto& e : j["landmarks"]) {
    if (!e.is_object() || !e.contains("name") || !e["name"].is_string() || !e.contains("position"))
      detail::schema_fail(path, "each landmark needs 'name' and 'position'");
    Landmark l;
    l.name = e["name"].get<std::string>();
    l.position = detail::vec3_from(e["position"], path, "landmark '" + l.name + "' position");
    if (e.contains("sigma")) {
      if (!e["sigma"].is_number()) detail::schema_fail(path, "landmark '" + l.name + "' sigma must be a number");
      l.sigma = e["sigma"].get<double>();
    }
    set.entries.push_back(std::move(l));
  }
  set.check();
  return set;
}

void write_landmarks(const std::filesystem::path& path, const LandmarkSet& set) {
  json arr = json::array();
  for (const auto& e : set.entries)
    arr.push_back(json{{"name", e.name}, {"position", detail::to_json(e.position)}, {"sigma", e.sigma}});
  detail::write_json(path, json{{"frame", set.frame}, {"landmarks", arr}});
}

SimilarityTransform read_transform(const std::filesystem::path& path) {
  return detail::transform_from(detail::read_json(path), path);
}

void write_transform(const std::filesystem::path& path, const SimilarityTransform& transform) {
  detail::write_json(path, detail::to_json(transform));
}

void write_registration_report(const std::filesystem::path& path, const RegistrationReport& report) {
  json residuals = json::object();
  for (std::size_t i = 0; i < report.subset.size() && i < report.residuals.size(); ++i)
    residuals[report.subset[i]] = report.residuals[i];
  json j{{"transform", detail::to_json(report.transform)},
         {"subset", report.subset},
         {"residuals_mm", residuals},
         {"rms_mm", report.rms}};
  if (!report.rms_trace.empty()) {
    j["iterations"] = report.iterations;
    j["rms_trace_mm"] = report.rms_trace;
    j["converged"] = report.converged;
    j["stalled"] = report.stalled;
  }
  detail::write_json(path, j);
}

}  // namespace spinefuse
