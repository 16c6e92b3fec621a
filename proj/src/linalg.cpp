#include <mvmom/linalg.hpp>

#include <mvmom/error.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mvmom::linalg {

double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues()(0);
}

void canonicalize_signs(Matrix& columns) {
  for (Index j = 0; j < columns.cols(); ++j) {
    Index arg = 0;
    columns.col(j).cwiseAbs().maxCoeff(&arg);
    if (columns(arg, j) < 0) columns.col(j) *= -1.0;
  }
}

LowRankBasis truncated_svd(const Matrix& a, Index k, double rank_tol) {
  if (k < 1 || k > std::min(a.rows(), a.cols())) {
    fail(ErrorCode::kInvalidArgument, "truncated_svd: k must lie in [1, min(m, n)]");
  }
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  if (!(s(0) > 0.0) || s(k - 1) < rank_tol * s(0)) {
    fail(ErrorCode::kRankDeficient,
         "sigma_" + std::to_string(k) + " = " + std::to_string(s(k - 1)) +
             " is below the rank threshold relative to sigma_1 = " + std::to_string(s(0)));
  }
  return LowRankBasis{svd.matrixU().leftCols(k), svd.matrixV().leftCols(k), s.head(k)};
}

EigenDecomposition real_eigendecomposition(const Matrix& a, const Tolerances& tol) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    fail(ErrorCode::kDimensionMismatch, "real_eigendecomposition: matrix must be square and nonempty");
  }
  const Index k = a.rows();
  const double scale = spectral_norm(a);

  Eigen::EigenSolver<Matrix> solver(a, true);
  if (solver.info() != Eigen::Success) {
    fail(ErrorCode::kDegenerateSpectrum, "eigensolver did not converge");
  }
  const Eigen::VectorXcd& values = solver.eigenvalues();
  const Eigen::MatrixXcd& vectors = solver.eigenvectors();

  double max_imag = 0.0;
  for (Index i = 0; i < k; ++i) max_imag = std::max(max_imag, std::abs(values(i).imag()));
  const double imag_rel = scale > 0.0 ? max_imag / scale : max_imag;

  std::vector<Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index x, Index y) { return values(x).real() > values(y).real(); });

  EigenDecomposition out;
  out.eigenvalues.resize(k);
  out.eigenvectors.resize(k, k);
  for (Index j = 0; j < k; ++j) {
    const Index src = order[static_cast<std::size_t>(j)];
    out.eigenvalues(j) = values(src).real();
    Vector col = vectors.col(src).real();
    const double norm = col.norm();
    if (norm > 0.0) col /= norm;
    out.eigenvectors.col(j) = col;
  }
  canonicalize_signs(out.eigenvectors);
  out.max_imag_residue = imag_rel;

  double gap = std::numeric_limits<double>::infinity();
  for (Index j = 0; j + 1 < k; ++j) gap = std::min(gap, out.eigenvalues(j) - out.eigenvalues(j + 1));
  out.min_gap = k > 1 ? gap : std::numeric_limits<double>::infinity();

  if (imag_rel > tol.imag_residue) {
    fail(ErrorCode::kDegenerateSpectrum,
         "complex eigenvalues (relative imaginary residue " + std::to_string(imag_rel) + ")");
  }
  if (k > 1 && (out.min_gap < tol.gap_floor * scale || out.min_gap <= 0.0)) {
    fail(ErrorCode::kDegenerateSpectrum,
         "eigenvalues not separated (gap " + std::to_string(out.min_gap) + ")");
  }
  return out;
}

Vector pseudoinverse_apply(const Matrix& a, const Vector& b, double rank_tol) {
  if (a.rows() != b.size()) {
    fail(ErrorCode::kDimensionMismatch, "pseudoinverse_apply: rhs length does not match rows");
  }
  if (a.size() == 0) return Vector::Zero(a.cols());
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double cutoff = rank_tol * s(0);
  Vector coeffs = svd.matrixU().transpose() * b;
  for (Index i = 0; i < s.size(); ++i) {
    coeffs(i) = (s(i) > cutoff && s(i) > 0.0) ? coeffs(i) / s(i) : 0.0;
  }
  return svd.matrixV() * coeffs;
}

Vector sample_unit_sphere(Index dim, Rng& rng) {
  if (dim < 1) fail(ErrorCode::kInvalidArgument, "sample_unit_sphere: dim must be positive");
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(dim);
  double norm = 0.0;
  do {
    for (Index i = 0; i < dim; ++i) v(i) = normal(rng);
    norm = v.norm();
  } while (norm == 0.0);
  return v / norm;
}

Matrix sample_rotation(Index k, Rng& rng) {
  if (k < 1) fail(ErrorCode::kInvalidArgument, "sample_rotation: k must be positive");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(k, k);
  for (Index j = 0; j < k; ++j)
    for (Index i = 0; i < k; ++i) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(k, k);
  const Matrix& r = qr.matrixQR();
  for (Index j = 0; j < k; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  return q;
}

Vector leverage_scores(const LowRankBasis& basis) { return basis.left.rowwise().squaredNorm(); }

}  // namespace mvmom::linalg
