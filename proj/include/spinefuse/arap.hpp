#pragma once

#include <spinefuse/mesh.hpp>
#include <spinefuse/sparse.hpp>

#include <Eigen/Core>

#include <filesystem>
#include <map>
#include <memory>
#include <utility>
#include <vector>

namespace spinefuse {

/// vertex index -> prescribed position (mm)
using HandleMap = std::map<int, Eigen::Vector3d>;

enum class GlobalMode {
  Solve,   // exact sparse solve of the position subproblem
  Jacobi,  // one literal per-vertex averaging sweep v_i = 1/|N(i)| sum_j (R_i p_j + v_j - R_j p_j)
};

struct ArapConfig {
  int max_iters = 100;
  double energy_rel_tol = 1e-6;
  WeightScheme weights = WeightScheme::Uniform;
  GlobalMode global_mode = GlobalMode::Solve;

  void check() const;
};

struct DeformState {
  Points rest;
  Points current;
  std::vector<Eigen::Matrix3d> rotations;
  HandleMap handles;
  Adjacency adjacency;
  /// Symmetric w_ij on every edge of the adjacency.
  Eigen::SparseMatrix<double> weights;

  /// Rest = mesh vertices, current = rest with handles snapped, rotations = I.
  static DeformState from_mesh(const TriMesh& mesh, HandleMap handles, WeightScheme scheme = WeightScheme::Uniform);
  /// Unit-weight edge graph, e.g. a polyline.
  static DeformState from_edges(Points rest, const std::vector<std::pair<int, int>>& edges, HandleMap handles);

  Eigen::Index size() const { return rest.rows(); }
  /// Handle indices valid, proper rotations, shapes consistent; throws Error otherwise.
  void check() const;
};

/// sum_i sum_{j in N(i)} w_ij |(v_i - v_j) - R_i (p_i - p_j)|^2
double arap_energy(const DeformState& state);

struct LocalStepResult {
  std::vector<Eigen::Matrix3d> rotations;
  /// Vertices whose one-ring covariance was rank deficient.
  std::vector<int> ambiguous;
};

LocalStepResult local_step(const DeformState& state);

/// Factorization of the position subproblem for one topology and handle set.
class GlobalStepSolver {
 public:
  explicit GlobalStepSolver(const DeformState& state);
  /// Positions minimizing the energy for the state's rotations, handles exactly at target.
  Points solve(const DeformState& state) const;

 private:
  std::vector<int> fixed_;
  std::unique_ptr<SpdSolver> solver_;
};

Points global_step(const DeformState& state);
/// Literal averaging update; handles stay at their targets.
Points jacobi_step(const DeformState& state);

struct ArapResult {
  TriMesh mesh;
  /// Energy after initialization (entry 0) and after every iteration (mm^2).
  std::vector<double> energy_trace;
  int iterations = 0;
  bool converged = false;
  /// Sub-step energy increases beyond round-off (expected 0 in Solve mode).
  int monotonicity_violations = 0;
  std::vector<int> ambiguous;
  std::vector<Eigen::Matrix3d> rotations;
};

ArapResult arap_deform(const TriMesh& mesh, const HandleMap& handles, const ArapConfig& config = {});
/// Continue from an explicit state (rest, adjacency and weights already set).
ArapResult arap_deform(DeformState state, const Faces& faces, const ArapConfig& config);

// {"handles": [{"vertex": int, "target": [x, y, z]}]}
HandleMap read_handles(const std::filesystem::path& path);
void write_handles(const std::filesystem::path& path, const HandleMap& handles);
/// "iteration,energy_mm2" rows.
void write_energy_trace(const std::filesystem::path& path, const std::vector<double>& trace);

}  // namespace spinefuse
