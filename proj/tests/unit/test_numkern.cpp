#include <doctest.h>

#include <spinefuse/error.hpp>
#include <spinefuse/rotation.hpp>
#include <spinefuse/similarity.hpp>
#include <spinefuse/sparse.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Geometry>

#include <numbers>
#include <random>

using namespace spinefuse;
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3>;

namespace {

Eigen::Matrix3d rot(double deg, const Eigen::Vector3d& axis) {
  return Eigen::AngleAxisd(deg * std::numbers::pi / 180.0, axis.normalized()).toRotationMatrix();
}

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  return q.normalized().toRotationMatrix();
}

Points random_points(std::mt19937_64& rng, int n, double extent) {
  std::uniform_real_distribution<double> u(-extent, extent);
  Points p(n, 3);
  for (int i = 0; i < n; ++i) p.row(i) << u(rng), u(rng), u(rng);
  return p;
}

Eigen::SparseMatrix<double> sparse(const Eigen::MatrixXd& d) { return d.sparseView(); }

}  // namespace

TEST_CASE("fit_rotation") {
  Points s(3, 3);
  s << 1, 0, 0, 0, 2, 0, 0.3, 0.1, 1.5;
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(3);

  CHECK(fit_rotation(s, s, w).rotation.isApprox(Eigen::Matrix3d::Identity(), 1e-12));

  const Eigen::Matrix3d rz = rot(90, Eigen::Vector3d::UnitZ());
  const Points t = s * rz.transpose();
  CHECK((fit_rotation(s, t, w).rotation - rz).norm() < 1e-9);

  const auto refl = fit_rotation(s, Points(-s), w);
  CHECK(refl.rotation.determinant() == doctest::Approx(1.0));

  Points line(2, 3);
  line << 1, 0, 0, 2, 0, 0;
  const auto amb = fit_rotation(line, line, Eigen::VectorXd::Ones(2));
  CHECK(amb.ambiguous);
  CHECK(amb.rotation.determinant() == doctest::Approx(1.0));

  CHECK_THROWS_AS(fit_rotation(s, t, Eigen::VectorXd::Zero(3)), Error);
  CHECK_THROWS_AS(fit_rotation(s, t, Eigen::VectorXd::Constant(3, -1.0)), Error);

  std::mt19937_64 rng(7);
  for (int k = 0; k < 200; ++k) {
    const Points a = random_points(rng, 5, 10.0);
    const Points b = random_points(rng, 5, 10.0);
    const Eigen::Matrix3d r = fit_rotation(a, b, Eigen::VectorXd::Ones(5)).rotation;
    CHECK((r.transpose() * r - Eigen::Matrix3d::Identity()).norm() < 1e-12);
    CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("weighted_similarity recovers forward-constructed transforms") {
  Points s(5, 3);
  s << 0, 0, 0, 10, 0, 0, 0, 12, 0, 0, 0, 9, 4, 5, 6;
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(5);

  const auto id = weighted_similarity(s, s, ones);
  CHECK(id.transform.scale == doctest::Approx(1.0));
  CHECK(id.transform.rotation.isApprox(Eigen::Matrix3d::Identity(), 1e-12));
  CHECK(id.transform.translation.norm() < 1e-12);

  SimilarityTransform truth;
  truth.scale = 2.0;
  truth.rotation = rot(30, Eigen::Vector3d::UnitZ());
  truth.translation = {10, -5, 3};
  const auto est = weighted_similarity(s, truth.apply_rows(s), ones);
  CHECK(std::abs(est.transform.scale - 2.0) < 1e-9);
  CHECK((est.transform.rotation - truth.rotation).norm() < 1e-9);
  CHECK((est.transform.translation - truth.translation).norm() < 1e-9);
  CHECK(est.residuals.maxCoeff() < 1e-9);

  // round trip over random instances
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> scale(0.5, 2.0);
  for (int k = 0; k < 100; ++k) {
    SimilarityTransform t;
    t.scale = scale(rng);
    t.rotation = random_rotation(rng);
    t.translation = random_points(rng, 1, 100.0).row(0).transpose();
    const Points src = random_points(rng, 6, 50.0);
    const auto e = weighted_similarity(src, t.apply_rows(src), Eigen::VectorXd::Ones(6));
    CHECK(std::abs(e.transform.scale - t.scale) / t.scale < 1e-9);
    CHECK(rotation_angle_between(e.transform.rotation, t.rotation) < 1e-9);
    CHECK((e.transform.translation - t.translation).norm() < 1e-9);
  }
}

TEST_CASE("weighted_similarity weighting") {
  Points s(5, 3);
  s << 0, 0, 0, 10, 0, 0, 0, 12, 0, 0, 0, 9, 4, 5, 6;
  SimilarityTransform truth;
  truth.scale = 1.3;
  truth.rotation = rot(20, Eigen::Vector3d(1, 2, 3));
  truth.translation = {1, 2, 3};
  Points t = truth.apply_rows(s);
  t.row(4) += Eigen::RowVector3d(3, -2, 4);  // outlier

  Eigen::VectorXd sigma = Eigen::VectorXd::Ones(5);
  sigma[4] = 100.0;
  const auto weighted = weighted_similarity(s, t, sigma);
  const auto inliers = weighted_similarity(s.topRows(4), t.topRows(4), Eigen::VectorXd::Ones(4));
  CHECK(std::abs(weighted.transform.scale - inliers.transform.scale) < 1e-3);
  CHECK(rotation_angle_between(weighted.transform.rotation, inliers.transform.rotation) < 1e-3);
  CHECK((weighted.transform.translation - inliers.transform.translation).norm() < 1e-3);

  // invariance under relabeling and under a common sigma factor
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(5);
  perm.indices() << 3, 0, 4, 1, 2;
  const Points sp = perm * s;
  const Points tp = perm * t;
  const Eigen::VectorXd sigp = perm * sigma;
  const auto relabeled = weighted_similarity(sp, tp, sigp);
  CHECK(std::abs(relabeled.transform.scale - weighted.transform.scale) < 1e-12);
  CHECK((relabeled.transform.rotation - weighted.transform.rotation).norm() < 1e-12);
  const auto scaled = weighted_similarity(s, t, Eigen::VectorXd(7.5 * sigma));
  CHECK(std::abs(scaled.transform.scale - weighted.transform.scale) < 1e-12);
  CHECK((scaled.transform.translation - weighted.transform.translation).norm() < 1e-10);
}

TEST_CASE("weighted_similarity errors") {
  Points line(3, 3);
  line << 0, 0, 0, 1, 1, 1, 2, 2, 2;
  try {
    weighted_similarity(line, line, Eigen::VectorXd::Ones(3));
    FAIL("collinear input must fail");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Degenerate);
  }
  Points s(3, 3);
  s << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  Eigen::VectorXd sig = Eigen::VectorXd::Ones(3);
  sig[1] = 0.0;
  try {
    weighted_similarity(s, s, sig);
    FAIL("sigma <= 0 must fail");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parameter);
  }
}

TEST_CASE("similarity transform algebra") {
  std::mt19937_64 rng(5);
  SimilarityTransform a, b;
  a.scale = 1.7;
  a.rotation = random_rotation(rng);
  a.translation = {1, 2, 3};
  b.scale = 0.4;
  b.rotation = random_rotation(rng);
  b.translation = {-4, 0, 9};
  const Points p = random_points(rng, 10, 20.0);
  CHECK((compose(b, a).apply_rows(p) - b.apply_rows(a.apply_rows(p))).norm() < 1e-12);
  CHECK((a.inverse().apply_rows(a.apply_rows(p)) - p).norm() < 1e-12);
  SimilarityTransform bad;
  bad.scale = -1.0;
  CHECK_THROWS_AS(bad.check(), Error);
}

TEST_CASE("spd_solve") {
  {
    SparseSystem sys;
    sys.matrix = sparse(Eigen::MatrixXd::Identity(4, 4));
    sys.rhs = Eigen::Vector4d(1, -2, 3, 4);
    CHECK(spd_solve(sys).isApprox(sys.rhs, 1e-15));
  }
  {
    Eigen::Matrix2d a;
    a << 2, 1, 1, 2;
    SparseSystem sys{sparse(a), Eigen::Vector2d(3, 3), {}, {}};
    CHECK((spd_solve(sys) - Eigen::Vector2d(1, 1)).norm() < 1e-14);
  }
  {
    // path Laplacian on 3 nodes plus identity, dense oracle
    Eigen::Matrix3d a;
    a << 2, -1, 0, -1, 3, -1, 0, -1, 2;
    const Eigen::Vector3d b(1, 0, 0);
    const Eigen::Vector3d dense = a.llt().solve(b);
    SparseSystem sys{sparse(a), b, {}, {}};
    CHECK((spd_solve(sys) - dense).norm() < 1e-12);
  }
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int n : {5, 20, 50}) {
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = g(rng);
    const Eigen::MatrixXd a = m * m.transpose() + n * Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd b(n, 3);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < 3; ++j) b(i, j) = g(rng);
    const SpdSolver solver(sparse(a));
    const Eigen::MatrixXd x = solver.solve(b);
    CHECK((x - a.llt().solve(b)).norm() < 1e-10);
    CHECK((a * x - b).norm() / b.norm() < 1e-10);
  }
}

TEST_CASE("spd_solve eliminates fixed entries exactly") {
  // chain 0-1-2-3 Laplacian, ends fixed
  Eigen::Matrix4d l;
  l << 1, -1, 0, 0, -1, 2, -1, 0, 0, -1, 2, -1, 0, 0, -1, 1;
  const SpdSolver solver(sparse(l), {3, 0});
  Eigen::MatrixXd fixed(2, 1);
  fixed << 9.0, 0.0;
  const Eigen::MatrixXd x = solver.solve(Eigen::Vector4d::Zero(), fixed);
  CHECK(x(0) == 0.0);
  CHECK(x(3) == 9.0);
  CHECK(x(1) == doctest::Approx(3.0));
  CHECK(x(2) == doctest::Approx(6.0));
  CHECK_THROWS_AS(SpdSolver(sparse(l), {1, 1}), Error);
}

TEST_CASE("spd_solve reports the failing pivot") {
  Eigen::Matrix4d d = Eigen::Vector4d(1, 1, -1, 1).asDiagonal();
  try {
    SpdSolver s(sparse(d), {0});
    FAIL("indefinite matrix must fail");
  } catch (const SolverError& e) {
    CHECK(e.pivot() == 2);
  }
  // singular: free Laplacian has a null space
  Eigen::Matrix3d l;
  l << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  CHECK_THROWS_AS(SpdSolver(sparse(l)), SolverError);

  Eigen::Matrix2d asym;
  asym << 2, 1, 0, 2;
  try {
    SpdSolver s(sparse(asym));
    FAIL("asymmetric matrix must fail");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parameter);
  }
}
