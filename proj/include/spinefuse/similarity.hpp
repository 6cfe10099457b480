#pragma once

#include <spinefuse/error.hpp>
#include <spinefuse/rotation.hpp>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

namespace spinefuse {

/// x -> scale * rotation * x + translation.
template <typename Scalar>
struct SimilarityTransformT {
  using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
  using Mat3 = Eigen::Matrix<Scalar, 3, 3>;

  Scalar scale = Scalar(1);
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static SimilarityTransformT identity() { return {}; }

  Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }

  /// Rows are points.
  template <typename Derived>
  Eigen::Matrix<Scalar, Eigen::Dynamic, 3> apply_rows(const Eigen::MatrixBase<Derived>& points) const {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 3> out = (scale * (points * rotation.transpose()));
    out.rowwise() += translation.transpose();
    return out;
  }

  SimilarityTransformT inverse() const {
    SimilarityTransformT inv;
    inv.scale = Scalar(1) / scale;
    inv.rotation = rotation.transpose();
    inv.translation = -inv.scale * (inv.rotation * translation);
    return inv;
  }

  /// Throws Error(Parameter) unless scale > 0 and rotation is in SO(3) to 1e-9.
  void check() const {
    if (!(scale > Scalar(0)) || !std::isfinite(static_cast<double>(scale)))
      throw Error(ErrorKind::Parameter, "similarity transform scale must be positive and finite");
    if (!rotation.allFinite() || !translation.allFinite())
      throw Error(ErrorKind::Parameter, "similarity transform has non-finite entries");
    if ((rotation.transpose() * rotation - Mat3::Identity()).norm() >= Scalar(1e-9) ||
        rotation.determinant() <= Scalar(0))
      throw Error(ErrorKind::Parameter, "similarity transform rotation is not a proper rotation");
  }
};

using SimilarityTransform = SimilarityTransformT<double>;

/// compose(second, first): apply first, then second.
template <typename Scalar>
SimilarityTransformT<Scalar> compose(const SimilarityTransformT<Scalar>& second,
                                     const SimilarityTransformT<Scalar>& first) {
  SimilarityTransformT<Scalar> out;
  out.scale = second.scale * first.scale;
  out.rotation = second.rotation * first.rotation;
  out.translation = second.scale * (second.rotation * first.translation) + second.translation;
  return out;
}

template <typename Scalar>
struct SimilarityEstimate {
  SimilarityTransformT<Scalar> transform;
  /// |t_i - (l R s_i + f)| per correspondence.
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> residuals;
  /// Normalized weights 1/sigma_i^2.
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> weights;
};

namespace detail {

// Second-largest over largest eigenvalue of the weighted scatter of centered rows.
template <typename Scalar, typename Derived, typename DerivedW>
Scalar planarity_ratio(const Eigen::MatrixBase<Derived>& centered, const Eigen::MatrixBase<DerivedW>& w) {
  Eigen::Matrix<Scalar, 3, 3> scatter = Eigen::Matrix<Scalar, 3, 3>::Zero();
  for (Eigen::Index i = 0; i < centered.rows(); ++i)
    scatter.noalias() += w(i) * centered.row(i).transpose() * centered.row(i);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<Scalar, 3, 3>> eig(scatter, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();  // ascending
  if (!(ev[2] > Scalar(0))) return Scalar(0);
  return ev[1] / ev[2];
}

}  // namespace detail

/// Closed-form minimizer of sum_i (1/sigma_i^2) |t_i - l R s_i - f|^2 over l > 0, R in SO(3), f
/// (weighted Umeyama). Rows of source/target are corresponding points.
template <typename DerivedS, typename DerivedT, typename DerivedSig>
SimilarityEstimate<typename DerivedS::Scalar> weighted_similarity(const Eigen::MatrixBase<DerivedS>& source,
                                                                  const Eigen::MatrixBase<DerivedT>& target,
                                                                  const Eigen::MatrixBase<DerivedSig>& sigmas) {
  using Scalar = typename DerivedS::Scalar;
  using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
  using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Rows = Eigen::Matrix<Scalar, Eigen::Dynamic, 3>;

  const Eigen::Index n = source.rows();
  if (source.cols() != 3 || target.cols() != 3 || target.rows() != n || sigmas.size() != n)
    throw Error(ErrorKind::Parameter, "weighted_similarity: source, target and sigmas must have matching length");
  if (n < 3) throw Error(ErrorKind::Degenerate, "weighted_similarity: at least 3 correspondences required");
  if (!source.allFinite() || !target.allFinite())
    throw Error(ErrorKind::Parameter, "weighted_similarity: non-finite landmark coordinate");

  VecX w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(sigmas(i) > Scalar(0)) || !std::isfinite(static_cast<double>(sigmas(i))))
      throw Error(ErrorKind::Parameter, "weighted_similarity: sigma " + std::to_string(i) + " must be > 0");
    w(i) = Scalar(1) / (sigmas(i) * sigmas(i));
  }
  // normalizing keeps the result bit-stable under a common rescaling of every sigma
  w /= w.maxCoeff();
  const Scalar wsum = w.sum();

  const Vec3 s_bar = (source.transpose() * w) / wsum;
  const Vec3 t_bar = (target.transpose() * w) / wsum;
  const Rows s_c = source.rowwise() - s_bar.transpose();
  const Rows t_c = target.rowwise() - t_bar.transpose();

  if (detail::planarity_ratio<Scalar>(s_c, w) <= rank_tolerance<Scalar>() * Scalar(1e3) ||
      detail::planarity_ratio<Scalar>(t_c, w) <= rank_tolerance<Scalar>() * Scalar(1e3))
    throw Error(ErrorKind::Degenerate, "weighted_similarity: landmarks are collinear or coincident");

  Eigen::Matrix<Scalar, 3, 3> cov = Eigen::Matrix<Scalar, 3, 3>::Zero();
  Scalar s_var = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    cov.noalias() += w(i) * s_c.row(i).transpose() * t_c.row(i);
    s_var += w(i) * s_c.row(i).squaredNorm();
  }

  Eigen::JacobiSVD<Eigen::Matrix<Scalar, 3, 3>> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& u = svd.matrixU();
  const auto& v = svd.matrixV();
  Eigen::Matrix<Scalar, 3, 1> d = Eigen::Matrix<Scalar, 3, 1>::Ones();
  if ((v * u.transpose()).determinant() < Scalar(0)) d(2) = Scalar(-1);

  SimilarityEstimate<Scalar> est;
  est.transform.rotation = v * d.asDiagonal() * u.transpose();
  est.transform.scale = svd.singularValues().dot(d) / s_var;
  if (!(est.transform.scale > Scalar(0)))
    throw Error(ErrorKind::Degenerate, "weighted_similarity: non-positive optimal scale");
  est.transform.translation = t_bar - est.transform.scale * (est.transform.rotation * s_bar);

  est.residuals.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 s = source.row(i).transpose();
    est.residuals(i) = (target.row(i).transpose() - est.transform.apply(s)).norm();
  }
  est.weights = w;
  return est;
}

}  // namespace spinefuse
