#pragma once

#include <spinefuse/mesh.hpp>
#include <spinefuse/registration.hpp>
#include <spinefuse/spatial.hpp>

#include <Eigen/Core>

#include <filesystem>
#include <vector>

namespace spinefuse {

enum class CorrespondenceKind { ClosestPoint, Fixed, Collision };

double correspondence_weight(CorrespondenceKind kind);

struct Correspondence {
  int vertex = 0;
  Eigen::Vector3d target = Eigen::Vector3d::Zero();
  CorrespondenceKind kind = CorrespondenceKind::ClosestPoint;
  double weight = 0.1;
};

struct FixedPair {
  int vertex = 0;
  Eigen::Vector3d target = Eigen::Vector3d::Zero();
};

struct SkinFitConfig {
  double w_fit = 1.0;
  double w_reg = 1.0;
  int outer_iters = 20;
  /// Relative residual accepted from the linear solve.
  double solver_tol = 1e-8;
  /// A vertex counts as colliding only when deeper than this inside W (mm).
  double collision_margin = 0.0;
  double energy_rel_tol = 1e-6;
  WeightScheme weights = WeightScheme::Cotangent;

  void check() const;
};

/// One correspondence per vertex of X. Precedence: Fixed, then Collision, then ClosestPoint.
/// Throws Error(InsideTest) when W is not closed.
std::vector<Correspondence> build_correspondences(const TriMesh& x, const TriangleTree& w,
                                                  const std::vector<FixedPair>& fixed = {}, double margin = 0.0);
std::vector<Correspondence> build_correspondences(const TriMesh& x, const TriMesh& w,
                                                  const std::vector<FixedPair>& fixed = {}, double margin = 0.0);

/// Pairs landmarks by name; each source landmark snaps to its nearest vertex of x.
std::vector<FixedPair> fixed_pairs_from_landmarks(const TriMesh& x, const LandmarkSet& on_x, const LandmarkSet& on_w);

/// sum_i A_i |L(X)_i - R_i L(Xhat)_i|^2 with L the area-normalized Laplacian of `weights`
/// (built on Xhat) and A_i = weights.area.
double bending_energy(const Points& x, const Points& xhat, const TriMesh& mesh, const VertexWeights& weights,
                      const std::vector<Eigen::Matrix3d>& rotations);

/// sum_i w_i A_i |x_i - t_i|^2
double fitting_energy(const Points& x, const std::vector<Correspondence>& corr, const Eigen::VectorXd& area);

/// Per-vertex rotations aligning the one-ring edges of xhat to those of x.
std::vector<Eigen::Matrix3d> fit_vertex_rotations(const Points& xhat, const Points& x, const Adjacency& adjacency);

struct SkinFitIteration {
  /// Total energy with this iteration's correspondences and rotations, before and after the solve.
  double energy_before = 0.0;
  double energy_after = 0.0;
  int collisions = 0;
  int fixed = 0;
};

struct SkinFitResult {
  TriMesh mesh;
  std::vector<SkinFitIteration> trace;
  bool converged = false;
  /// Iterations whose solve raised the energy beyond round-off.
  int monotonicity_violations = 0;
};

SkinFitResult fit_surface(const TriMesh& m, const TriMesh& w, const SkinFitConfig& config = {},
                          const std::vector<FixedPair>& fixed = {});

/// "iteration,energy_before,energy_after,collisions,fixed" rows.
void write_skinfit_trace(const std::filesystem::path& path, const std::vector<SkinFitIteration>& trace);

}  // namespace spinefuse
