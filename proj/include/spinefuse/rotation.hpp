#pragma once

#include <spinefuse/error.hpp>

#include <Eigen/Core>
#include <Eigen/SVD>

#include <cmath>

namespace spinefuse {

template <typename Scalar>
struct RotationFit {
  Eigen::Matrix<Scalar, 3, 3> rotation = Eigen::Matrix<Scalar, 3, 3>::Identity();
  /// Covariance rank < 2: the rotation is one of several equally good answers.
  bool ambiguous = false;
};

/// Relative singular-value threshold below which a covariance direction counts as empty.
template <typename Scalar>
constexpr Scalar rank_tolerance() {
  return Scalar(1e-12);
}

/// Proper rotation from the 3x3 cross-covariance H = sum_k w_k s_k t_k^T.
/// Minimizes sum_k w_k |t_k - R s_k|^2 over SO(3) (Kabsch with determinant correction).
template <typename Scalar>
RotationFit<Scalar> rotation_from_covariance(const Eigen::Matrix<Scalar, 3, 3>& cov) {
  using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
  RotationFit<Scalar> fit;
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (!(sv[0] > Scalar(0))) {
    fit.ambiguous = true;
    return fit;
  }
  fit.ambiguous = sv[1] <= rank_tolerance<Scalar>() * sv[0];
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  // flip the column paired with the smallest singular value when V U^T is a reflection
  if ((v * u.transpose()).determinant() < Scalar(0)) d(2, 2) = Scalar(-1);
  fit.rotation = v * d * u.transpose();
  return fit;
}

/// R = argmin sum_k w_k |target_k - R source_k|^2, rows are 3D vectors.
template <typename DerivedS, typename DerivedT, typename DerivedW>
RotationFit<typename DerivedS::Scalar> fit_rotation(const Eigen::MatrixBase<DerivedS>& source_edges,
                                                    const Eigen::MatrixBase<DerivedT>& target_edges,
                                                    const Eigen::MatrixBase<DerivedW>& weights) {
  using Scalar = typename DerivedS::Scalar;
  if (source_edges.cols() != 3 || target_edges.cols() != 3)
    throw Error(ErrorKind::Parameter, "fit_rotation: edges must be N x 3");
  if (source_edges.rows() != target_edges.rows() || source_edges.rows() != weights.size() ||
      source_edges.rows() < 1)
    throw Error(ErrorKind::Parameter, "fit_rotation: edge lists and weights must have equal length >= 1");
  Scalar total = 0;
  for (Eigen::Index k = 0; k < weights.size(); ++k) {
    if (!(weights(k) >= Scalar(0))) throw Error(ErrorKind::Parameter, "fit_rotation: weights must be >= 0");
    total += weights(k);
  }
  if (!(total > Scalar(0))) throw Error(ErrorKind::Parameter, "fit_rotation: weights are all zero");

  Eigen::Matrix<Scalar, 3, 3> cov = Eigen::Matrix<Scalar, 3, 3>::Zero();
  for (Eigen::Index k = 0; k < source_edges.rows(); ++k) {
    cov.noalias() += weights(k) * source_edges.row(k).transpose() * target_edges.row(k);
  }
  return rotation_from_covariance<Scalar>(cov);
}

/// Geodesic distance on SO(3), radians.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar rotation_angle_between(const Eigen::MatrixBase<DerivedA>& a,
                                                 const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  const Eigen::Matrix<Scalar, 3, 3> rel = a.transpose() * b;
  const Scalar c = (rel.trace() - Scalar(1)) / Scalar(2);
  // atan2 form keeps precision near zero where acos does not
  const Eigen::Matrix<Scalar, 3, 3> skew = (rel - rel.transpose()) / Scalar(2);
  const Scalar s = Eigen::Matrix<Scalar, 3, 1>(skew(2, 1), skew(0, 2), skew(1, 0)).norm();
  return std::atan2(s, c);
}

}  // namespace spinefuse
