#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <memory>
#include <vector>

namespace spinefuse {

struct SparseSystem {
  /// Symmetric; positive definite once the fixed rows/columns are removed.
  Eigen::SparseMatrix<double> matrix;
  /// One column per right-hand side.
  Eigen::MatrixXd rhs;
  /// Distinct indices whose values are prescribed; eliminated with an RHS update.
  std::vector<int> fixed;
  /// Prescribed values, one row per entry of `fixed`, same column count as rhs.
  Eigen::MatrixXd fixed_values;
};

/// Sparse LDL^T factorization of the free block of a symmetric matrix.
/// Immutable after construction; solve() may be called concurrently.
class SpdSolver {
 public:
  /// Throws Error(Parameter) for asymmetric input and SolverError when the
  /// free block is not positive definite (pivot reported in full indexing).
  explicit SpdSolver(const Eigen::SparseMatrix<double>& matrix, std::vector<int> fixed = {});

  /// Full-length solution: free entries solved, fixed entries copied from fixed_values.
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs, const Eigen::MatrixXd& fixed_values = {}) const;

  Eigen::Index size() const { return n_; }
  const std::vector<int>& fixed() const { return fixed_; }
  const std::vector<int>& free() const { return free_; }

 private:
  Eigen::Index n_ = 0;
  std::vector<int> fixed_;
  std::vector<int> free_;
  Eigen::SparseMatrix<double> free_fixed_;  // A restricted to free rows, fixed columns
  std::shared_ptr<const Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> ldlt_;
};

Eigen::MatrixXd spd_solve(const SparseSystem& system);

}  // namespace spinefuse
