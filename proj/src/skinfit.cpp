#include <spinefuse/error.hpp>
#include <spinefuse/rotation.hpp>
#include <spinefuse/skinfit.hpp>
#include <spinefuse/sparse.hpp>

#include "json_util.hpp"

#include <charconv>
#include <cmath>
#include <limits>

namespace spinefuse {

namespace {

using SpMat = Eigen::SparseMatrix<double>;

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

Eigen::VectorXd inverse_area(const Eigen::VectorXd& area) {
  Eigen::VectorXd inv(area.size());
  for (Eigen::Index i = 0; i < area.size(); ++i) inv[i] = area[i] > 0.0 ? 1.0 / area[i] : 0.0;
  return inv;
}

}  // namespace

double correspondence_weight(CorrespondenceKind kind) {
  switch (kind) {
    case CorrespondenceKind::ClosestPoint: return 0.1;
    case CorrespondenceKind::Fixed: return 1.0;
    case CorrespondenceKind::Collision: return 100.0;
  }
  return 0.0;
}

void SkinFitConfig::check() const {
  if (!(w_fit >= 0.0) || !(w_reg >= 0.0) || !std::isfinite(w_fit) || !std::isfinite(w_reg))
    throw Error(ErrorKind::Config, "skinfit weights must be finite and >= 0");
  if (w_fit == 0.0 && w_reg == 0.0) throw Error(ErrorKind::Config, "skinfit weights w_fit and w_reg are both zero");
  if (outer_iters < 1) throw Error(ErrorKind::Config, "skinfit outer iterations must be >= 1");
  if (!(solver_tol > 0.0) || !(energy_rel_tol > 0.0)) throw Error(ErrorKind::Config, "skinfit tolerances must be > 0");
  if (!(collision_margin >= 0.0)) throw Error(ErrorKind::Config, "skinfit collision margin must be >= 0");
}

std::vector<Correspondence> build_correspondences(const TriMesh& x, const TriangleTree& w,
                                                  const std::vector<FixedPair>& fixed, double margin) {
  if (!is_closed(w.mesh())) throw Error(ErrorKind::InsideTest, "wrap surface W is not closed; inside test undefined");
  std::vector<Correspondence> out(static_cast<std::size_t>(x.vertex_count()));
  for (Eigen::Index i = 0; i < x.vertex_count(); ++i) {
    const Eigen::Vector3d p = x.vertices.row(i).transpose();
    const auto hit = w.closest_point(p);
    Correspondence& c = out[i];
    c.vertex = static_cast<int>(i);
    c.target = hit.point;
    c.kind = w.contains(p) && hit.squared_distance > margin * margin ? CorrespondenceKind::Collision
                                                                       : CorrespondenceKind::ClosestPoint;
    c.weight = correspondence_weight(c.kind);
  }
  for (const auto& f : fixed) {
    if (f.vertex < 0 || f.vertex >= x.vertex_count())
      throw Error(ErrorKind::StructuralInput, "fixed correspondence vertex " + std::to_string(f.vertex) + " out of range");
    out[f.vertex] = {f.vertex, f.target, CorrespondenceKind::Fixed, correspondence_weight(CorrespondenceKind::Fixed)};
  }
  return out;
}

std::vector<Correspondence> build_correspondences(const TriMesh& x, const TriMesh& w,
                                                  const std::vector<FixedPair>& fixed, double margin) {
  validate(x);
  validate(w);
  return build_correspondences(x, TriangleTree(w), fixed, margin);
}

std::vector<FixedPair> fixed_pairs_from_landmarks(const TriMesh& x, const LandmarkSet& on_x, const LandmarkSet& on_w) {
  on_x.check();
  on_w.check();
  std::vector<FixedPair> out;
  for (const auto& l : on_x.entries) {
    const Landmark& t = on_w.at(l.name);
    Eigen::Index best = 0;
    (x.vertices.rowwise() - l.position.transpose()).rowwise().squaredNorm().minCoeff(&best);
    out.push_back({static_cast<int>(best), t.position});
  }
  return out;
}

double bending_energy(const Points& x, const Points& xhat, const TriMesh& mesh, const VertexWeights& weights,
                      const std::vector<Eigen::Matrix3d>& rotations) {
  if (x.rows() != xhat.rows() || x.rows() != mesh.vertex_count() ||
      static_cast<Eigen::Index>(rotations.size()) != x.rows())
    throw Error(ErrorKind::StructuralInput, "bending_energy: X, Xhat, mesh and rotations disagree on vertex count");
  const Points lx = laplace_beltrami(mesh, x, weights);
  const Points lh = laplace_beltrami(mesh, xhat, weights);
  double e = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    e += weights.area[i] * (lx.row(i).transpose() - rotations[i] * lh.row(i).transpose()).squaredNorm();
  return e;
}

double fitting_energy(const Points& x, const std::vector<Correspondence>& corr, const Eigen::VectorXd& area) {
  double e = 0.0;
  for (const auto& c : corr) e += c.weight * area[c.vertex] * (x.row(c.vertex).transpose() - c.target).squaredNorm();
  return e;
}

std::vector<Eigen::Matrix3d> fit_vertex_rotations(const Points& xhat, const Points& x, const Adjacency& adjacency) {
  std::vector<Eigen::Matrix3d> out(static_cast<std::size_t>(x.rows()), Eigen::Matrix3d::Identity());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int j : adjacency.neighbors[i]) {
      const Eigen::Vector3d a = (xhat.row(j) - xhat.row(i)).transpose();
      const Eigen::Vector3d b = (x.row(j) - x.row(i)).transpose();
      cov.noalias() += a * b.transpose();
    }
    if (!adjacency.neighbors[i].empty()) out[i] = rotation_from_covariance<double>(cov).rotation;
  }
  return out;
}

SkinFitResult fit_surface(const TriMesh& m, const TriMesh& w, const SkinFitConfig& config,
                          const std::vector<FixedPair>& fixed) {
  config.check();
  validate(m);
  validate(w);
  const TriangleTree tree(w);
  const VertexWeights weights = make_weights(m, config.weights);
  const Adjacency adjacency = build_adjacency(m);
  const Eigen::Index n = m.vertex_count();

  // E(x) = w_fit sum c_i |x_i - t_i|^2 + w_reg sum (1/A_i) |(Lx)_i - R_i (L xhat)_i|^2, c_i = w_i A_i
  const SpMat lap = laplacian_matrix(weights);
  const Eigen::VectorXd inv_area = inverse_area(weights.area);
  const SpMat reg = SpMat(lap.transpose() * inv_area.asDiagonal() * lap);
  const Points lap_hat = lap * m.vertices;

  SkinFitResult result;
  Points x = m.vertices;
  double previous = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < config.outer_iters; ++iter) {
    const TriMesh current{x, m.faces};
    const auto corr = build_correspondences(current, tree, fixed, config.collision_margin);
    const auto rotations = fit_vertex_rotations(m.vertices, x, adjacency);

    Points b(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) b.row(i) = (rotations[i] * lap_hat.row(i).transpose()).transpose();

    auto total = [&](const Points& p) {
      return config.w_fit * fitting_energy(p, corr, weights.area) +
             config.w_reg * bending_energy(p, m.vertices, m, weights, rotations);
    };

    SkinFitIteration step;
    step.energy_before = total(x);
    for (const auto& c : corr) {
      step.collisions += c.kind == CorrespondenceKind::Collision;
      step.fixed += c.kind == CorrespondenceKind::Fixed;
    }

    Eigen::VectorXd diag(n);
    Points t(n, 3);
    for (const auto& c : corr) {
      diag[c.vertex] = c.weight * weights.area[c.vertex];
      t.row(c.vertex) = c.target.transpose();
    }
    SpMat fit_diag(n, n);
    fit_diag.reserve(Eigen::VectorXi::Ones(n));
    for (Eigen::Index i = 0; i < n; ++i) fit_diag.insert(i, i) = config.w_fit * diag[i];
    const SpMat system = config.w_reg * reg + fit_diag;
    const Eigen::MatrixXd rhs =
        config.w_fit * (diag.asDiagonal() * t) + config.w_reg * (lap.transpose() * (inv_area.asDiagonal() * b));
    const SpdSolver solver(system);
    Points next = solver.solve(rhs);
    const double residual = (system * next - rhs).norm();
    if (!next.allFinite() || residual > config.solver_tol * std::max(rhs.norm(), 1e-300))
      throw Error(ErrorKind::Solver, "skinfit linear solve residual " + fmt(residual) + " exceeds tolerance");

    step.energy_after = total(next);
    if (step.energy_after > step.energy_before * (1.0 + 1e-10) + 1e-18) ++result.monotonicity_violations;
    result.trace.push_back(step);
    x = std::move(next);

    const double change = std::abs(previous - step.energy_after);
    previous = step.energy_after;
    if (step.energy_after <= 1e-24 || change < config.energy_rel_tol * step.energy_after) {
      result.converged = true;
      break;
    }
  }
  result.mesh = TriMesh{x, m.faces};
  return result;
}

void write_skinfit_trace(const std::filesystem::path& path, const std::vector<SkinFitIteration>& trace) {
  std::string text = "iteration,energy_before,energy_after,collisions,fixed\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& s = trace[i];
    text += std::to_string(i + 1) + ',' + fmt(s.energy_before) + ',' + fmt(s.energy_after) + ',' +
            std::to_string(s.collisions) + ',' + std::to_string(s.fixed) + '\n';
  }
  detail::write_text(path, text);
}

}  // namespace spinefuse
