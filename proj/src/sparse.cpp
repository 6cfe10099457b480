#include <spinefuse/error.hpp>
#include <spinefuse/sparse.hpp>

#include <algorithm>
#include <cmath>
#include <string>

namespace spinefuse {

namespace {

using SpMat = Eigen::SparseMatrix<double>;

void check_symmetric(const SpMat& a) {
  if (a.rows() != a.cols()) throw Error(ErrorKind::Parameter, "spd_solve: matrix is not square");
  const SpMat diff = SpMat(a.transpose()) - a;
  double max_diff = 0.0;
  for (Eigen::Index k = 0; k < diff.outerSize(); ++k)
    for (SpMat::InnerIterator it(diff, k); it; ++it) max_diff = std::max(max_diff, std::abs(it.value()));
  double scale = 1.0;
  for (Eigen::Index k = 0; k < a.outerSize(); ++k)
    for (SpMat::InnerIterator it(a, k); it; ++it) scale = std::max(scale, std::abs(it.value()));
  if (max_diff > 1e-12 * scale) throw Error(ErrorKind::Parameter, "spd_solve: matrix is not symmetric");
}

}  // namespace

SpdSolver::SpdSolver(const SpMat& matrix, std::vector<int> fixed) : n_(matrix.rows()), fixed_(std::move(fixed)) {
  check_symmetric(matrix);
  // full index -> position in the free / fixed block, -1 where not applicable
  std::vector<int> free_pos(n_, -1), fixed_pos(n_, -1);
  for (std::size_t k = 0; k < fixed_.size(); ++k) {
    const int f = fixed_[k];
    if (f < 0 || f >= n_) throw Error(ErrorKind::Parameter, "spd_solve: fixed index " + std::to_string(f) + " out of range");
    if (fixed_pos[f] >= 0) throw Error(ErrorKind::Parameter, "spd_solve: fixed index " + std::to_string(f) + " repeated");
    fixed_pos[f] = static_cast<int>(k);
  }
  for (int i = 0; i < n_; ++i) {
    if (fixed_pos[i] < 0) {
      free_pos[i] = static_cast<int>(free_.size());
      free_.push_back(i);
    }
  }
  if (free_.empty()) return;

  std::vector<Eigen::Triplet<double>> ff, fc;
  for (Eigen::Index k = 0; k < matrix.outerSize(); ++k) {
    for (SpMat::InnerIterator it(matrix, k); it; ++it) {
      const int r = static_cast<int>(it.row());
      const int c = static_cast<int>(it.col());
      if (free_pos[r] < 0) continue;
      if (free_pos[c] >= 0)
        ff.emplace_back(free_pos[r], free_pos[c], it.value());
      else
        fc.emplace_back(free_pos[r], fixed_pos[c], it.value());
    }
  }
  const auto nf = static_cast<Eigen::Index>(free_.size());
  SpMat a_ff(nf, nf);
  a_ff.setFromTriplets(ff.begin(), ff.end());
  free_fixed_.resize(nf, static_cast<Eigen::Index>(fixed_.size()));
  free_fixed_.setFromTriplets(fc.begin(), fc.end());

  auto ldlt = std::make_shared<Eigen::SimplicialLDLT<SpMat>>();
  ldlt->compute(a_ff);

  double diag_scale = 0.0;
  for (Eigen::Index i = 0; i < nf; ++i) diag_scale = std::max(diag_scale, std::abs(a_ff.coeff(i, i)));
  const auto pinv = ldlt->permutationPinv();
  if (ldlt->info() != Eigen::Success) {
    throw SolverError("spd_solve: factorization failed (matrix not positive definite)", -1);
  }
  const Eigen::VectorXd d = ldlt->vectorD();
  for (Eigen::Index k = 0; k < d.size(); ++k) {
    if (!(d[k] > 1e-12 * diag_scale)) {
      const int full = free_[pinv.indices()[k]];
      throw SolverError("spd_solve: matrix not positive definite at pivot " + std::to_string(full), full);
    }
  }
  ldlt_ = std::move(ldlt);
}

Eigen::MatrixXd SpdSolver::solve(const Eigen::MatrixXd& rhs, const Eigen::MatrixXd& fixed_values) const {
  if (rhs.rows() != n_) throw Error(ErrorKind::Parameter, "spd_solve: rhs has the wrong number of rows");
  if (!fixed_.empty() &&
      (fixed_values.rows() != static_cast<Eigen::Index>(fixed_.size()) || fixed_values.cols() != rhs.cols()))
    throw Error(ErrorKind::Parameter, "spd_solve: fixed_values shape does not match the fixed set");

  Eigen::MatrixXd x(n_, rhs.cols());
  for (std::size_t k = 0; k < fixed_.size(); ++k) x.row(fixed_[k]) = fixed_values.row(k);
  if (free_.empty()) return x;

  Eigen::MatrixXd b(static_cast<Eigen::Index>(free_.size()), rhs.cols());
  for (std::size_t k = 0; k < free_.size(); ++k) b.row(k) = rhs.row(free_[k]);
  if (!fixed_.empty()) b -= free_fixed_ * fixed_values;

  const Eigen::MatrixXd xf = ldlt_->solve(b);
  for (std::size_t k = 0; k < free_.size(); ++k) x.row(free_[k]) = xf.row(k);
  return x;
}

Eigen::MatrixXd spd_solve(const SparseSystem& system) {
  const SpdSolver solver(system.matrix, system.fixed);
  return solver.solve(system.rhs, system.fixed_values);
}

}  // namespace spinefuse
