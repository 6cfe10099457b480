#pragma once

#include <spinefuse/mesh.hpp>
#include <spinefuse/similarity.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace spinefuse {

struct Landmark {
  std::string name;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double sigma = 1.0;  // noise std-dev, mm
};

struct LandmarkSet {
  std::string frame;
  std::vector<Landmark> entries;

  /// nullptr when absent.
  const Landmark* find(const std::string& name) const;
  /// Throws Error(Lookup).
  const Landmark& at(const std::string& name) const;
  /// Unique names, sigma > 0, finite positions; throws Error otherwise.
  void check() const;
};

/// Named landmark subsets used by the comparison protocol.
std::vector<std::string> full_landmark_subset();     // C1, C7, T7, L4, L5
std::vector<std::string> reduced_landmark_subset();  // C1, T7, L5
/// "full" | "reduced" | "custom:A,B,C".
std::vector<std::string> parse_landmark_subset(const std::string& spec);

struct RegistrationReport {
  SimilarityTransform transform;
  std::vector<std::string> subset;
  /// Per-landmark residual |t_i - (l R s_i + f)| (mm), aligned with `subset`.
  std::vector<double> residuals;
  /// sqrt of the 1/sigma^2-weighted mean of squared residuals (coarse) or of
  /// squared closest-point distances (ICP).
  double rms = 0.0;

  // ICP only
  int iterations = 0;
  std::vector<double> rms_trace;
  bool converged = false;
  /// Terminated on a residual plateau that is still far from zero.
  bool stalled = false;
};

RegistrationReport coarse_register(const LandmarkSet& source, const LandmarkSet& target,
                                   const std::vector<std::string>& subset);

TriMesh apply_transform(const TriMesh& mesh, const SimilarityTransform& transform);
Points apply_transform(const Points& points, const SimilarityTransform& transform);

struct IcpConfig {
  int max_iters = 50;
  double tol = 1e-6;         // stop when the RMS decrease falls below this (mm)
  int max_points = 5000;     // uniform subsampling cap on the source
  bool align_centroids = true;
  double stall_fraction = 0.01;  // plateau RMS above this fraction of the target diagonal flags `stalled`
};

/// Rigid (scale 1) point-to-point ICP against the closest points of the target surface.
RegistrationReport icp_register(const Points& source, const TriMesh& target, const IcpConfig& config = {});
RegistrationReport icp_register(const TriMesh& source, const TriMesh& target, const IcpConfig& config = {});

// JSON files
LandmarkSet read_landmarks(const std::filesystem::path& path);
void write_landmarks(const std::filesystem::path& path, const LandmarkSet& set);
SimilarityTransform read_transform(const std::filesystem::path& path);
void write_transform(const std::filesystem::path& path, const SimilarityTransform& transform);
void write_registration_report(const std::filesystem::path& path, const RegistrationReport& report);

}  // namespace spinefuse
