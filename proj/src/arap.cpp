#include <spinefuse/arap.hpp>
#include <spinefuse/error.hpp>
#include <spinefuse/rotation.hpp>

#include "json_util.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>

namespace spinefuse {

using detail::json;

namespace {

using SpMat = Eigen::SparseMatrix<double>;

// relative slack for energy comparisons that should hold exactly in real arithmetic
constexpr double kRoundoff = 1e-10;

bool increased(double before, double after) { return after > before + kRoundoff * std::max(1.0, before); }

SpMat unit_edge_weights(const Adjacency& adj) {
  std::vector<Eigen::Triplet<double>> t;
  for (std::size_t i = 0; i < adj.size(); ++i)
    for (int j : adj.neighbors[i]) t.emplace_back(static_cast<int>(i), j, 1.0);
  SpMat w(static_cast<Eigen::Index>(adj.size()), static_cast<Eigen::Index>(adj.size()));
  w.setFromTriplets(t.begin(), t.end());
  return w;
}

Points snapped(const Points& rest, const HandleMap& handles) {
  Points v = rest;
  for (const auto& [idx, target] : handles) {
    if (idx < 0 || idx >= rest.rows())
      throw Error(ErrorKind::StructuralInput, "handle vertex " + std::to_string(idx) + " out of range");
    v.row(idx) = target.transpose();
  }
  return v;
}

}  // namespace

void ArapConfig::check() const {
  if (max_iters < 1) throw Error(ErrorKind::Config, "ARAP max_iters must be >= 1");
  if (!(energy_rel_tol > 0.0)) throw Error(ErrorKind::Config, "ARAP energy_rel_tol must be > 0");
}

DeformState DeformState::from_mesh(const TriMesh& mesh, HandleMap handles, WeightScheme scheme) {
  DeformState s;
  s.adjacency = build_adjacency(mesh);
  s.weights = scheme == WeightScheme::Cotangent ? cotangent_weights(mesh).edge : unit_edge_weights(s.adjacency);
  s.rest = mesh.vertices;
  s.current = snapped(s.rest, handles);
  s.rotations.assign(static_cast<std::size_t>(s.rest.rows()), Eigen::Matrix3d::Identity());
  s.handles = std::move(handles);
  return s;
}

DeformState DeformState::from_edges(Points rest, const std::vector<std::pair<int, int>>& edges, HandleMap handles) {
  DeformState s;
  s.adjacency = Adjacency::from_edges(static_cast<int>(rest.rows()), edges);
  s.weights = unit_edge_weights(s.adjacency);
  s.rest = std::move(rest);
  s.current = snapped(s.rest, handles);
  s.rotations.assign(static_cast<std::size_t>(s.rest.rows()), Eigen::Matrix3d::Identity());
  s.handles = std::move(handles);
  return s;
}

void DeformState::check() const {
  const Eigen::Index n = rest.rows();
  if (current.rows() != n || static_cast<Eigen::Index>(rotations.size()) != n ||
      static_cast<Eigen::Index>(adjacency.size()) != n || weights.rows() != n)
    throw Error(ErrorKind::StructuralInput, "deform state arrays disagree on the vertex count");
  for (const auto& [idx, target] : handles) {
    if (idx < 0 || idx >= n) throw Error(ErrorKind::StructuralInput, "handle vertex " + std::to_string(idx) + " out of range");
    if (!target.allFinite()) throw Error(ErrorKind::StructuralInput, "handle target is not finite");
  }
  for (const auto& r : rotations) {
    if ((r.transpose() * r - Eigen::Matrix3d::Identity()).norm() > 1e-9 || r.determinant() <= 0.0)
      throw Error(ErrorKind::Parameter, "deform state holds an improper rotation");
  }
}

double arap_energy(const DeformState& state) {
  double energy = 0.0;
  for (Eigen::Index i = 0; i < state.size(); ++i) {
    const Eigen::Matrix3d& r = state.rotations[i];
    for (SpMat::InnerIterator it(state.weights, i); it; ++it) {
      const Eigen::Index j = it.row();
      const Eigen::Vector3d dv = (state.current.row(i) - state.current.row(j)).transpose();
      const Eigen::Vector3d dp = (state.rest.row(i) - state.rest.row(j)).transpose();
      energy += it.value() * (dv - r * dp).squaredNorm();
    }
  }
  return energy;
}

LocalStepResult local_step(const DeformState& state) {
  LocalStepResult out;
  out.rotations.resize(static_cast<std::size_t>(state.size()), Eigen::Matrix3d::Identity());
  for (Eigen::Index i = 0; i < state.size(); ++i) {
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    bool any = false;
    for (SpMat::InnerIterator it(state.weights, i); it; ++it) {
      const Eigen::Index j = it.row();
      const Eigen::Vector3d dp = (state.rest.row(i) - state.rest.row(j)).transpose();
      const Eigen::Vector3d dv = (state.current.row(i) - state.current.row(j)).transpose();
      cov.noalias() += it.value() * dp * dv.transpose();
      any = true;
    }
    if (!any) continue;  // isolated vertex: no energy terms
    const auto fit = rotation_from_covariance<double>(cov);
    out.rotations[i] = fit.rotation;
    if (fit.ambiguous) out.ambiguous.push_back(static_cast<int>(i));
  }
  return out;
}

GlobalStepSolver::GlobalStepSolver(const DeformState& state) {
  state.check();
  if (state.handles.empty())
    throw Error(ErrorKind::Solver, "ARAP global step is under-constrained: no handles (translation is free)");
  for (const auto& [idx, target] : state.handles) fixed_.push_back(idx);
  for (Eigen::Index i = 0; i < state.size(); ++i) {
    if (state.adjacency.neighbors[i].empty() && !state.handles.count(static_cast<int>(i)))
      fixed_.push_back(static_cast<int>(i));
  }
  // positive-form weighted graph Laplacian
  std::vector<Eigen::Triplet<double>> t;
  for (Eigen::Index i = 0; i < state.size(); ++i) {
    for (SpMat::InnerIterator it(state.weights, i); it; ++it) {
      t.emplace_back(it.row(), i, -it.value());
      t.emplace_back(i, i, it.value());
    }
  }
  SpMat lap(state.size(), state.size());
  lap.setFromTriplets(t.begin(), t.end());
  try {
    solver_ = std::make_unique<SpdSolver>(lap, fixed_);
  } catch (const SolverError& e) {
    throw SolverError(std::string("ARAP global step is under-constrained (a component has no handle): ") + e.what(),
                      e.pivot());
  }
}

Points GlobalStepSolver::solve(const DeformState& state) const {
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(state.size(), 3);
  for (Eigen::Index i = 0; i < state.size(); ++i) {
    for (SpMat::InnerIterator it(state.weights, i); it; ++it) {
      const Eigen::Index j = it.row();
      const Eigen::Vector3d dp = (state.rest.row(i) - state.rest.row(j)).transpose();
      rhs.row(i) += (0.5 * it.value() * (state.rotations[i] + state.rotations[j]) * dp).transpose();
    }
  }
  Eigen::MatrixXd fixed_values(static_cast<Eigen::Index>(fixed_.size()), 3);
  for (std::size_t k = 0; k < fixed_.size(); ++k) {
    auto h = state.handles.find(fixed_[k]);
    fixed_values.row(k) = h != state.handles.end() ? Eigen::RowVector3d(h->second.transpose())
                                                   : Eigen::RowVector3d(state.current.row(fixed_[k]));
  }
  return solver_->solve(rhs, fixed_values);
}

Points global_step(const DeformState& state) { return GlobalStepSolver(state).solve(state); }

Points jacobi_step(const DeformState& state) {
  state.check();
  if (state.handles.empty()) throw Error(ErrorKind::Solver, "ARAP global step is under-constrained: no handles");
  Points next = state.current;
  for (Eigen::Index i = 0; i < state.size(); ++i) {
    if (state.handles.count(static_cast<int>(i))) continue;
    const auto& nbrs = state.adjacency.neighbors[i];
    if (nbrs.empty()) continue;
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    for (int j : nbrs) {
      const Eigen::Vector3d pj = state.rest.row(j).transpose();
      sum += state.rotations[i] * pj + (state.current.row(j).transpose() - state.rotations[j] * pj);
    }
    next.row(i) = (sum / static_cast<double>(nbrs.size())).transpose();
  }
  return next;
}

ArapResult arap_deform(const TriMesh& mesh, const HandleMap& handles, const ArapConfig& config) {
  config.check();
  return arap_deform(DeformState::from_mesh(mesh, handles, config.weights), mesh.faces, config);
}

ArapResult arap_deform(DeformState state, const Faces& faces, const ArapConfig& config) {
  config.check();
  state.check();
  std::unique_ptr<GlobalStepSolver> solver;
  if (config.global_mode == GlobalMode::Solve) {
    solver = std::make_unique<GlobalStepSolver>(state);
  } else if (state.handles.empty()) {
    throw Error(ErrorKind::Solver, "ARAP global step is under-constrained: no handles");
  }

  ArapResult result;
  double energy = arap_energy(state);
  result.energy_trace.push_back(energy);
  for (int iter = 1; iter <= config.max_iters; ++iter) {
    LocalStepResult local = local_step(state);
    state.rotations = std::move(local.rotations);
    const double after_local = arap_energy(state);
    if (increased(energy, after_local)) ++result.monotonicity_violations;

    state.current = solver ? solver->solve(state) : jacobi_step(state);
    const double after_global = arap_energy(state);
    if (increased(after_local, after_global)) ++result.monotonicity_violations;

    result.energy_trace.push_back(after_global);
    result.iterations = iter;
    result.ambiguous = std::move(local.ambiguous);
    const double change = std::abs(energy - after_global);
    energy = after_global;
    if (change <= config.energy_rel_tol * std::max(energy, 1e-300) || energy < 1e-24) {
      result.converged = true;
      break;
    }
  }
  result.mesh.vertices = state.current;
  result.mesh.faces = faces;
  result.rotations = std::move(state.rotations);
  return result;
}

HandleMap read_handles(const std::filesystem::path& path) {
  const json j = detail::read_json(path);
  if (!j.is_object() || !j.contains("handles") || !j["handles"].is_array())
    detail::schema_fail(path, "expected an object with a 'handles' array");
  HandleMap handles;
  for (const auto& h : j["handles"]) {
    if (!h.is_object() || !h.contains("vertex") || !h["vertex"].is_number_integer() || !h.contains("target"))
      detail::schema_fail(path, "each handle needs an integer 'vertex' and a 'target'");
    const int v = h["vertex"].get<int>();
    if (v < 0) detail::schema_fail(path, "handle vertex must be non-negative");
    if (!handles.emplace(v, detail::vec3_from(h["target"], path, "handle target")).second)
      detail::schema_fail(path, "handle vertex " + std::to_string(v) + " listed twice");
  }
  return handles;
}

void write_handles(const std::filesystem::path& path, const HandleMap& handles) {
  json arr = json::array();
  for (const auto& [v, target] : handles) arr.push_back(json{{"vertex", v}, {"target", detail::to_json(target)}});
  detail::write_json(path, json{{"handles", arr}});
}

void write_energy_trace(const std::filesystem::path& path, const std::vector<double>& trace) {
  std::string text = "iteration,energy_mm2\n";
  char buf[64];
  for (std::size_t i = 0; i < trace.size(); ++i) {
    auto res = std::to_chars(buf, buf + sizeof buf, trace[i]);
    text += std::to_string(i) + ',' + std::string(buf, res.ptr) + '\n';
  }
  detail::write_text(path, text);
}

}  // namespace spinefuse
