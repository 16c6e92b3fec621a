#include "support.hpp"

#include <mvmom/linalg.hpp>

#include <cmath>
#include <numbers>

using namespace mvmom;
using testing::mat;
using testing::max_abs_diff;
using testing::vec;

TEST_CASE("truncated_svd of identity and diagonal matrices") {
  const auto id = linalg::truncated_svd(Matrix::Identity(3, 3), 2);
  CHECK(max_abs_diff(id.singular_values, vec({1, 1})) < 1e-14);
  CHECK(max_abs_diff(id.left.transpose() * id.left, Matrix::Identity(2, 2)) < 1e-12);

  const auto d = linalg::truncated_svd(Vector(vec({3, 2, 1})).asDiagonal().toDenseMatrix(), 2);
  CHECK(max_abs_diff(d.singular_values, vec({3, 2})) < 1e-14);
  CHECK(std::abs(std::abs(d.left(0, 0)) - 1.0) < 1e-14);
  CHECK(std::abs(std::abs(d.left(1, 1)) - 1.0) < 1e-14);
  CHECK(std::abs(d.left(2, 0)) + std::abs(d.left(2, 1)) < 1e-14);
}

TEST_CASE("truncated_svd of the two-topic pairs matrix") {
  // Symmetric [[a, b], [b, a]] has singular values a + b and a - b.
  const auto s = linalg::truncated_svd(mat({{0.3125, 0.1875}, {0.1875, 0.3125}}), 2);
  CHECK(max_abs_diff(s.singular_values, vec({0.5, 0.125})) < 1e-14);
}

TEST_CASE("truncated_svd rejects rank loss and bad k") {
  const Matrix rank_one = vec({1, 2, 3}) * vec({1, 1, 1}).transpose();
  CHECK(testing::error_of([&] { linalg::truncated_svd(rank_one, 2); }) == ErrorCode::kRankDeficient);
  CHECK(testing::error_of([&] { linalg::truncated_svd(Matrix::Zero(3, 3), 1); }) == ErrorCode::kRankDeficient);
  CHECK(testing::error_of([&] { linalg::truncated_svd(Matrix::Identity(3, 3), 4); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("truncated_svd reconstructs full-rank matrices") {
  Rng rng(11);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    const Index k = 1 + trial % 5;
    const Index m = k + trial % 4;
    Matrix a(m, k);
    for (Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
    const auto s = linalg::truncated_svd(a, k);
    const Matrix back = s.left * s.singular_values.asDiagonal() * s.right.transpose();
    CHECK((back - a).norm() <= 1e-8 * a.norm());
    for (Index i = 1; i < k; ++i) CHECK(s.singular_values(i) <= s.singular_values(i - 1));
    CHECK(max_abs_diff(s.right.transpose() * s.right, Matrix::Identity(k, k)) < 1e-10);
  }
}

TEST_CASE("real_eigendecomposition basic cases") {
  const auto d = linalg::real_eigendecomposition(mat({{2, 0}, {0, 5}}));
  CHECK(max_abs_diff(d.eigenvalues, vec({5, 2})) < 1e-14);
  CHECK(max_abs_diff(d.eigenvectors.cwiseAbs(), mat({{0, 1}, {1, 0}})) < 1e-14);

  const auto r = linalg::real_eigendecomposition(mat({{0, 1}, {1, 0}}));
  CHECK(max_abs_diff(r.eigenvalues, vec({1, -1})) < 1e-14);
  const double h = 1.0 / std::sqrt(2.0);
  CHECK(max_abs_diff(r.eigenvectors.col(0), vec({h, h})) < 1e-12);
  CHECK(std::abs(std::abs(r.eigenvectors(0, 1)) - h) < 1e-12);
  CHECK(std::abs(r.eigenvectors(0, 1) + r.eigenvectors(1, 1)) < 1e-12);
  CHECK(r.eigenvectors.col(1).cwiseAbs().maxCoeff() ==
        doctest::Approx(r.eigenvectors.col(1).maxCoeff()));
}

TEST_CASE("real_eigendecomposition rejects complex and repeated spectra") {
  CHECK(testing::error_of([] { linalg::real_eigendecomposition(mat({{0, -1}, {1, 0}})); }) ==
        ErrorCode::kDegenerateSpectrum);
  CHECK(testing::error_of([] { linalg::real_eigendecomposition(Matrix::Identity(3, 3)); }) ==
        ErrorCode::kDegenerateSpectrum);
}

TEST_CASE("real_eigendecomposition recovers a diagonalizable matrix") {
  Rng rng(5);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    const Index k = 2 + trial % 4;
    Matrix r(k, k);
    for (Index i = 0; i < r.size(); ++i) r.data()[i] = g(rng);
    r += 2.0 * Matrix::Identity(k, k);  // keep it well conditioned
    Vector lambda(k);
    for (Index i = 0; i < k; ++i) lambda(i) = static_cast<double>(i) - 0.37 * static_cast<double>(trial % 3);
    const Matrix a = r * lambda.asDiagonal() * r.inverse();
    const auto e = linalg::real_eigendecomposition(a);
    const auto got = testing::sorted(e.eigenvalues);
    const auto want = testing::sorted(lambda);
    for (Index i = 0; i < k; ++i) CHECK(std::abs(got[static_cast<std::size_t>(i)] - want[static_cast<std::size_t>(i)]) < 1e-8);
    for (Index j = 0; j < k; ++j) {
      CHECK(std::abs(e.eigenvectors.col(j).norm() - 1.0) < 1e-10);
      // Each eigenvector is parallel to one column of r.
      double best = 0.0;
      for (Index c = 0; c < k; ++c) {
        best = std::max(best, std::abs(e.eigenvectors.col(j).dot(r.col(c).normalized())));
      }
      CHECK(best > 1.0 - 1e-6);
    }
    const Matrix resid = a * e.eigenvectors - e.eigenvectors * e.eigenvalues.asDiagonal();
    CHECK(linalg::spectral_norm(resid) <= 1e-6 * linalg::spectral_norm(a));
  }
}

TEST_CASE("pseudoinverse_apply") {
  CHECK(max_abs_diff(linalg::pseudoinverse_apply(Matrix::Identity(3, 3), vec({1, 2, 3})), vec({1, 2, 3})) < 1e-14);
  CHECK(max_abs_diff(linalg::pseudoinverse_apply(mat({{2, 0}, {0, 0}}), vec({4, 7})), vec({2, 0})) < 1e-14);

  const Matrix m = mat({{0.6, 0.1}, {0.3, 0.2}, {0.1, 0.7}});
  const Vector mw = vec({0.35, 0.25, 0.40});
  CHECK(max_abs_diff(m * vec({0.5, 0.5}), mw) < 1e-15);
  CHECK(max_abs_diff(linalg::pseudoinverse_apply(m, mw), vec({0.5, 0.5})) < 1e-12);

  Rng rng(3);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 30; ++trial) {
    Matrix a(6, 3);
    Vector x(3);
    for (Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
    for (Index i = 0; i < 3; ++i) x(i) = g(rng);
    CHECK(max_abs_diff(linalg::pseudoinverse_apply(a, a * x), x) < 1e-8);
  }
}

TEST_CASE("sample_unit_sphere") {
  Rng rng(1);
  const Vector one = linalg::sample_unit_sphere(1, rng);
  CHECK(std::abs(std::abs(one(0)) - 1.0) < 1e-15);
  for (Index dim = 1; dim < 8; ++dim) CHECK(std::abs(linalg::sample_unit_sphere(dim, rng).norm() - 1.0) < 1e-12);

  Vector mean = Vector::Zero(3);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) mean += linalg::sample_unit_sphere(3, rng);
  mean /= draws;
  CHECK(mean.cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("sample_rotation is orthogonal and Haar in two dimensions") {
  Rng rng(2);
  const Matrix q1 = linalg::sample_rotation(1, rng);
  CHECK(std::abs(std::abs(q1(0, 0)) - 1.0) < 1e-15);
  for (Index k = 1; k < 7; ++k) {
    const Matrix q = linalg::sample_rotation(k, rng);
    CHECK((q.transpose() * q - Matrix::Identity(k, k)).norm() <= 1e-10);
  }

  const int draws = 100000;
  std::vector<double> u(draws);
  for (int i = 0; i < draws; ++i) {
    const Matrix q = linalg::sample_rotation(2, rng);
    double angle = std::atan2(q(1, 0), q(0, 0));
    if (angle < 0) angle += 2.0 * std::numbers::pi;
    u[static_cast<std::size_t>(i)] = angle / (2.0 * std::numbers::pi);
  }
  std::sort(u.begin(), u.end());
  double ks = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double x = u[static_cast<std::size_t>(i)];
    ks = std::max({ks, (i + 1.0) / draws - x, x - static_cast<double>(i) / draws});
  }
  CHECK(ks < 0.01);
}

TEST_CASE("leverage_scores") {
  linalg::LowRankBasis coord{Matrix::Identity(5, 2), Matrix::Identity(5, 2), vec({1, 1})};
  CHECK(max_abs_diff(linalg::leverage_scores(coord), vec({1, 1, 0, 0, 0})) < 1e-15);

  const Matrix h = 0.5 * mat({{1, 1}, {1, -1}, {1, 1}, {1, -1}});
  linalg::LowRankBasis had{h, h, vec({1, 1})};
  CHECK(max_abs_diff(linalg::leverage_scores(had), Vector::Constant(4, 0.5)) < 1e-15);

  Rng rng(9);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    Matrix a(8, 3);
    for (Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
    const auto b = linalg::truncated_svd(a, 3);
    const Vector s = linalg::leverage_scores(b);
    CHECK(std::abs(s.sum() - 3.0) < 1e-10);
    CHECK(s.minCoeff() >= 0.0);
    CHECK(s.maxCoeff() <= 1.0 + 1e-12);
  }
}
