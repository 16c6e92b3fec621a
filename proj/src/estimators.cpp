#include <mvmom/estimators.hpp>

#include <mvmom/error.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace mvmom::estimators {

namespace {

bool retryable(const Error& e) {
  return e.code() == ErrorCode::kDegenerateSpectrum || e.code() == ErrorCode::kAmbiguousMatching;
}

// Top-k singular bases without a rank screen; rank problems surface later as
// SingularCore where the normalizing core is inverted.
linalg::LowRankBasis top_k(const Matrix& a, Index k) {
  if (k > std::min(a.rows(), a.cols())) {
    fail(ErrorCode::kRankDeficient, "k = " + std::to_string(k) + " exceeds the view dimension");
  }
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {svd.matrixU().leftCols(k), svd.matrixV().leftCols(k), svd.singularValues().head(k)};
}

Matrix theta_for_attempt(const EstimatorConfig& config, int attempt) {
  const Index k = config.k;
  switch (config.theta_policy) {
    case ThetaPolicy::kIdentity: return Matrix::Identity(k, k);
    case ThetaPolicy::kFixed:
      if (config.theta.rows() != k || config.theta.cols() != k) {
        fail(ErrorCode::kDimensionMismatch, "theta must be k x k");
      }
      if (std::abs(config.theta.determinant()) < 1e-12) fail(ErrorCode::kInvalidArgument, "theta must be invertible");
      return config.theta;
    case ThetaPolicy::kRandomRotation: {
      Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(attempt)));
      return linalg::sample_rotation(k, rng);
    }
  }
  return Matrix::Identity(k, k);
}

int attempts_for(const EstimatorConfig& config) {
  if (config.retry_limit < 1) fail(ErrorCode::kInvalidArgument, "retry limit must be at least 1");
  return config.theta_policy == ThetaPolicy::kRandomRotation ? config.retry_limit : 1;
}

// Inverse of the core U_a^T P_ab U_b, after the rank screen.
Matrix core_inverse(const Matrix& pairs, const Matrix& left, const Matrix& right, double tol) {
  const Matrix core = left.transpose() * pairs * right;
  Eigen::JacobiSVD<Matrix> svd(core);
  const Vector& s = svd.singularValues();
  const Index k = s.size();
  if (!(s(0) > 0.0) || s(k - 1) < tol * s(0)) {
    fail(ErrorCode::kSingularCore, "sigma_k of the projected pairs matrix is " + std::to_string(s(k - 1)) +
                                       " against sigma_1 = " + std::to_string(s(0)));
  }
  return core.inverse();
}

// One family of operators B_{a,b,c}(.) sharing the same bases and core.
struct OperatorFamily {
  const MomentSource* source;
  Index a, b, c;
  Matrix left, right, core_inv;

  Matrix operator()(const Vector& eta) const {
    return left.transpose() * source->triples(a, b, c, eta) * right * core_inv;
  }
};

OperatorFamily make_family(const MomentSource& src, Index a, Index b, Index c, const Matrix& left, const Matrix& right,
                           double tol) {
  return OperatorFamily{&src, a, b, c, left, right, core_inverse(src.pairs(a, b), left, right, tol)};
}

struct DiagonalRead {
  Vector diag;
  double off_ratio;
};

DiagonalRead congruence_diagonal(const Matrix& r_inv, const Matrix& op, const Matrix& r) {
  const Matrix d = r_inv * op * r;
  const Vector diag = d.diagonal();
  const Matrix off = d - Matrix(diag.asDiagonal());
  const double dn = diag.norm();
  return {diag, dn > 0.0 ? off.norm() / dn : (off.norm() > 0.0 ? std::numeric_limits<double>::infinity() : 0.0)};
}

// Reads L (rows i = diag(R^{-1} B(U theta_i) R)) and returns U Theta^{-1} L.
Matrix means_from_family(const OperatorFamily& family, const Matrix& direction_basis, const Matrix& theta,
                         const Matrix& r, const Matrix& r_inv, Matrix* l_out, Diagnostics& diag) {
  const Index k = theta.rows();
  Matrix l(k, k);
  for (Index i = 0; i < k; ++i) {
    const Vector eta = direction_basis * theta.row(i).transpose();
    const auto read = congruence_diagonal(r_inv, family(eta), r);
    l.row(i) = read.diag.transpose();
    diag.off_diagonal_ratio = std::max(diag.off_diagonal_ratio, read.off_ratio);
  }
  if (l_out) *l_out = l;
  return direction_basis * theta.partialPivLu().solve(l);
}

void record(Diagnostics& d, const linalg::EigenDecomposition& e) {
  d.eigen_gaps.push_back(e.min_gap);
  d.imag_residues.push_back(e.max_imag_residue);
}

Matrix invert_eigenvectors(const Matrix& r) {
  Eigen::FullPivLU<Matrix> lu(r);
  if (!lu.isInvertible()) fail(ErrorCode::kDegenerateSpectrum, "eigenvector matrix is singular");
  return lu.inverse();
}

// perm[j] = index of the candidate eigenvalue matched to reference j.
std::vector<Index> match_eigenvalues(const Vector& reference, const Vector& candidate, double floor) {
  const Index k = reference.size();
  const double scale = std::max(reference.cwiseAbs().maxCoeff(), candidate.cwiseAbs().maxCoeff());
  for (Index i = 0; i < k; ++i) {
    for (Index j = i + 1; j < k; ++j) {
      if (std::abs(reference(i) - reference(j)) < floor * scale ||
          std::abs(candidate(i) - candidate(j)) < floor * scale) {
        fail(ErrorCode::kAmbiguousMatching, "eigenvalues closer than the gap floor during cross-view matching");
      }
    }
  }
  struct Pair {
    double dist;
    Index ref, cand;
  };
  std::vector<Pair> pairs;
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j) pairs.push_back({std::abs(reference(i) - candidate(j)), i, j});
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) { return x.dist < y.dist; });
  std::vector<Index> perm(static_cast<std::size_t>(k), -1);
  std::vector<bool> used(static_cast<std::size_t>(k), false);
  for (const auto& p : pairs) {
    if (perm[static_cast<std::size_t>(p.ref)] >= 0 || used[static_cast<std::size_t>(p.cand)]) continue;
    perm[static_cast<std::size_t>(p.ref)] = p.cand;
    used[static_cast<std::size_t>(p.cand)] = true;
  }
  return perm;
}

void finish_weights(MultiViewEstimate& est, const MomentSource& src, const EstimatorConfig& config) {
  const Vector w = estimate_mixing_weights(est.means[2], src.mean(2));
  est.diagnostics.simplex_distance = (w - project_to_simplex(w)).norm();
  est.mixing_weights = config.project_simplex ? project_to_simplex(w) : w;
}

void check_sources(const MomentSource& src, const EstimatorConfig& config, Index views) {
  if (config.k < 1) fail(ErrorCode::kInvalidArgument, "k must be positive");
  if (src.num_views() < views) {
    fail(ErrorCode::kDimensionMismatch, "need at least " + std::to_string(views) + " views");
  }
  for (Index v = 0; v < views; ++v) {
    if (src.dim(v) < config.k) {
      fail(ErrorCode::kRankDeficient, "view " + std::to_string(v + 1) + " has dimension " +
                                          std::to_string(src.dim(v)) + " < k");
    }
  }
}

// State shared by algorithm_b and estimate_all_views for the view-3 pass.
struct ViewThreePass {
  linalg::LowRankBasis p12;
  linalg::LowRankBasis p13_dir;
  OperatorFamily family_123;
  Matrix r1, r1_inv;
  Matrix l3, m3;
};

ViewThreePass run_view_three(const MomentSource& src, const EstimatorConfig& config, const Matrix& theta,
                             Diagnostics& diag) {
  const Index k = config.k;
  auto p12 = top_k(src.pairs(0, 1), k);
  auto family = make_family(src, 0, 1, 2, p12.left, p12.right, config.core_rank_tol);
  auto p13_dir = linalg::truncated_svd(src.basis_pairs(0, 2), k, config.tol.rank);
  diag.pairs_singular_values = p12.singular_values;
  diag.direction_singular_values = p13_dir.singular_values;

  const Vector eta1 = p13_dir.right * theta.row(0).transpose();
  const auto eig = linalg::real_eigendecomposition(family(eta1), config.tol);
  record(diag, eig);
  Matrix r1 = eig.eigenvectors;
  Matrix r1_inv = invert_eigenvectors(r1);

  Matrix l3;
  Matrix m3 = means_from_family(family, p13_dir.right, theta, r1, r1_inv, &l3, diag);
  return {std::move(p12), std::move(p13_dir), std::move(family), std::move(r1), std::move(r1_inv), std::move(l3),
          std::move(m3)};
}

}  // namespace

ObservableOperator build_operator(const Matrix& pairs, const Matrix& contraction, const Matrix& left_basis,
                                  const Matrix& right_basis, const Vector& eta, double core_rank_tol) {
  if (pairs.rows() != contraction.rows() || pairs.cols() != contraction.cols() ||
      left_basis.rows() != pairs.rows() || right_basis.rows() != pairs.cols() ||
      left_basis.cols() != right_basis.cols()) {
    fail(ErrorCode::kDimensionMismatch, "build_operator: inconsistent shapes");
  }
  const Matrix core_inv = core_inverse(pairs, left_basis, right_basis, core_rank_tol);
  Matrix b = left_basis.transpose() * contraction * right_basis * core_inv;
  if (!b.allFinite()) fail(ErrorCode::kSingularCore, "operator is not finite");
  return {std::move(b), eta, left_basis, right_basis};
}

ObservableOperator build_operator(const MomentSet& moments, const linalg::LowRankBasis& bases, const Vector& eta,
                                  double core_rank_tol) {
  for (const auto& c : moments.triples_contractions) {
    if (c.direction.size() == eta.size() && c.direction == eta) {
      return build_operator(moments.pairs_12, c.contracted, bases.left, bases.right, eta, core_rank_tol);
    }
  }
  const TableMoments table(moments);
  return build_operator(moments.pairs_12, table.triples(0, 1, 2, eta), bases.left, bases.right, eta, core_rank_tol);
}

TopicEstimate algorithm_a(const MomentSource& src, const EstimatorConfig& config) {
  check_sources(src, config, 3);
  const Index k = config.k;
  const Index d = src.dim(0);
  if (src.dim(1) != d || src.dim(2) != d) fail(ErrorCode::kDimensionMismatch, "topic views must share a vocabulary");

  const Matrix pairs = src.pairs(0, 1);
  const auto bases = top_k(pairs, k);
  const Matrix core_inv = core_inverse(pairs, bases.left, bases.right, config.core_rank_tol);

  std::vector<Index> leverage_order;
  if (config.eta.policy == EtaPolicy::kLeverage) {
    const Vector scores = linalg::leverage_scores(bases);
    leverage_order.resize(static_cast<std::size_t>(d));
    std::iota(leverage_order.begin(), leverage_order.end(), Index{0});
    std::stable_sort(leverage_order.begin(), leverage_order.end(),
                     [&](Index x, Index y) { return scores(x) > scores(y); });
  }
  if (config.eta.policy == EtaPolicy::kCoordinate && (config.eta.coordinate < 0 || config.eta.coordinate >= d)) {
    fail(ErrorCode::kInvalidArgument, "coordinate direction outside the vocabulary");
  }

  int attempts = 1;
  if (config.eta.policy == EtaPolicy::kRandom) attempts = config.retry_limit;
  if (config.eta.policy == EtaPolicy::kLeverage) attempts = static_cast<int>(std::min<Index>(config.retry_limit, d));
  if (attempts < 1) fail(ErrorCode::kInvalidArgument, "retry limit must be at least 1");

  TopicEstimate out;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    Vector eta;
    switch (config.eta.policy) {
      case EtaPolicy::kRandom: {
        Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(attempt)));
        eta = bases.left * linalg::sample_unit_sphere(k, rng);
        break;
      }
      case EtaPolicy::kCoordinate: eta = Vector::Unit(d, config.eta.coordinate); break;
      case EtaPolicy::kLeverage: eta = Vector::Unit(d, leverage_order[static_cast<std::size_t>(attempt)]); break;
    }
    try {
      const Matrix b = bases.left.transpose() * src.triples(0, 1, 2, eta) * bases.right * core_inv;
      const auto eig = linalg::real_eigendecomposition(b, config.tol);
      record(out.diagnostics, eig);
      const Matrix lifted = bases.left * eig.eigenvectors;
      const Vector mass = lifted.colwise().sum().transpose();
      if ((mass.cwiseAbs().array() < 1e-12).any()) {
        fail(ErrorCode::kDegenerateSpectrum, "an eigenvector lifts to a zero-mass column");
      }
      out.means = lifted * mass.cwiseInverse().asDiagonal();
      out.eta = eta;
      out.eigenvalues = eig.eigenvalues;
      out.diagnostics.pairs_singular_values = bases.singular_values;
      out.diagnostics.retries = attempt;
      out.diagnostics.negative_mass = (out.means.array() < -0.01).any();
      if (out.diagnostics.negative_mass) out.diagnostics.warnings.emplace_back("NegativeMass");
      if (config.project_simplex) {
        for (Index j = 0; j < k; ++j) out.means.col(j) = project_to_simplex(out.means.col(j));
      }
      return out;
    } catch (const Error& e) {
      if (!retryable(e) || attempt + 1 >= attempts) throw;
    }
  }
  fail(ErrorCode::kDegenerateSpectrum, "no direction produced a separated spectrum");
}

MultiViewEstimate algorithm_b(const MomentSource& src, const EstimatorConfig& config) {
  check_sources(src, config, 3);
  const int attempts = attempts_for(config);
  for (int attempt = 0; attempt < attempts; ++attempt) {
    try {
      MultiViewEstimate est;
      const Matrix theta = theta_for_attempt(config, attempt);
      auto pass = run_view_three(src, config, theta, est.diagnostics);
      est.means.assign(static_cast<std::size_t>(src.num_views()), Matrix());
      est.means[2] = pass.m3;
      est.factors.u1 = pass.p12.left;
      est.factors.u2 = pass.p12.right;
      est.factors.u3 = pass.p13_dir.right;
      est.factors.theta = theta;
      est.factors.r1 = pass.r1;
      est.factors.l = pass.l3;
      est.diagnostics.retries = attempt;
      est.diagnostics.off_diagonal_warning = est.diagnostics.off_diagonal_ratio > config.off_diagonal_warn;
      if (est.diagnostics.off_diagonal_warning) est.diagnostics.warnings.emplace_back("OffDiagonalResidue");
      finish_weights(est, src, config);
      return est;
    } catch (const Error& e) {
      if (!retryable(e) || attempt + 1 >= attempts) throw;
    }
  }
  fail(ErrorCode::kDegenerateSpectrum, "retries exhausted");
}

MultiViewEstimate estimate_all_views(const MomentSource& src, const EstimatorConfig& config) {
  check_sources(src, config, 3);
  const Index views = src.num_views();
  const Index k = config.k;
  const int attempts = attempts_for(config);
  for (int attempt = 0; attempt < attempts; ++attempt) {
    try {
      MultiViewEstimate est;
      Diagnostics& diag = est.diagnostics;
      const Matrix theta = theta_for_attempt(config, attempt);
      auto pass = run_view_three(src, config, theta, diag);
      est.means.assign(static_cast<std::size_t>(views), Matrix());
      est.means[2] = pass.m3;

      // Views v >= 2 (1-based) share R1 through B_{1,c,v}.
      Matrix l2;
      for (Index v = 1; v < views; ++v) {
        if (v == 2) continue;
        const Index c = (v == 1) ? 2 : 1;
        const Matrix right_c =
            (c == 1) ? pass.p12.right : top_k(src.pairs(0, c), k).right;
        const auto family = make_family(src, 0, c, v, pass.p12.left, right_c, config.core_rank_tol);
        const auto dir = linalg::truncated_svd(src.basis_pairs(0, v), k, config.tol.rank);
        est.means[static_cast<std::size_t>(v)] =
            means_from_family(family, dir.right, theta, pass.r1, pass.r1_inv, v == 1 ? &l2 : nullptr, diag);
      }

      // View 1: eigenvectors of B_{3,1,2}, put in R1's order by matching
      // eigenvalues against those read off B_{1,3,2}, then used on B_{3,2,1}.
      const auto p31 = top_k(src.pairs(2, 0), k);
      const auto family_312 = make_family(src, 2, 0, 1, p31.left, p31.right, config.core_rank_tol);
      const auto dir2 = linalg::truncated_svd(src.basis_pairs(0, 1), k, config.tol.rank);
      const Vector eta2 = dir2.right * theta.row(0).transpose();
      const auto eig3 = linalg::real_eigendecomposition(family_312(eta2), config.tol);
      record(diag, eig3);
      const auto perm = match_eigenvalues(l2.row(0).transpose(), eig3.eigenvalues, config.tol.gap_floor);
      Matrix r3(k, k);
      for (Index j = 0; j < k; ++j) r3.col(j) = eig3.eigenvectors.col(perm[static_cast<std::size_t>(j)]);
      const Matrix r3_inv = invert_eigenvectors(r3);

      const auto p32 = top_k(src.pairs(2, 1), k);
      const auto family_321 = make_family(src, 2, 1, 0, p31.left, p32.right, config.core_rank_tol);
      const auto dir1 = linalg::truncated_svd(src.basis_pairs(2, 0), k, config.tol.rank);
      est.means[0] = means_from_family(family_321, dir1.right, theta, r3, r3_inv, nullptr, diag);

      est.factors = {pass.p12.left, pass.p12.right, pass.p13_dir.right, theta, pass.r1, pass.l3, p31.left, r3};
      diag.retries = attempt;
      diag.off_diagonal_warning = diag.off_diagonal_ratio > config.off_diagonal_warn;
      if (diag.off_diagonal_warning) diag.warnings.emplace_back("OffDiagonalResidue");
      finish_weights(est, src, config);
      return est;
    } catch (const Error& e) {
      if (!retryable(e) || attempt + 1 >= attempts) throw;
    }
  }
  fail(ErrorCode::kDegenerateSpectrum, "retries exhausted");
}

Vector estimate_mixing_weights(const Matrix& m3_hat, const Vector& mean_view3) {
  if (m3_hat.rows() != mean_view3.size()) fail(ErrorCode::kDimensionMismatch, "mean length does not match M3 rows");
  return linalg::pseudoinverse_apply(m3_hat, mean_view3);
}

std::vector<Matrix> recover_covariances(const MomentSource& src, const MultiViewEstimate& est) {
  const auto& f = est.factors;
  if (f.r1.size() == 0 || est.means.size() < 3 || est.means[2].size() == 0) {
    fail(ErrorCode::kInvalidArgument, "covariance recovery needs a view-3 estimate");
  }
  const Index k = f.r1.cols();
  const Index d = src.dim(2);
  const Matrix core_inv = core_inverse(src.pairs(0, 1), f.u1, f.u2, 0.0);
  const Matrix r_inv = invert_eigenvectors(f.r1);
  const Matrix& m3 = est.means[2];

  std::vector<Matrix> out(static_cast<std::size_t>(k), Matrix::Zero(d, d));
  for (Index i = 0; i < d; ++i) {
    for (Index j = i; j < d; ++j) {
      const Matrix q = src.fourth(0, 1, 2, Vector::Unit(d, i), Vector::Unit(d, j));
      const Matrix op = f.u1.transpose() * q * f.u2 * core_inv;
      const Vector lambda = (r_inv * op * f.r1).diagonal();
      for (Index t = 0; t < k; ++t) {
        const double value = lambda(t) - m3(i, t) * m3(j, t);
        out[static_cast<std::size_t>(t)](i, j) = value;
        out[static_cast<std::size_t>(t)](j, i) = value;
      }
    }
  }
  return out;
}

HmmEstimate recover_hmm(const MomentSource& src, const EstimatorConfig& config) {
  const auto est = estimate_all_views(src, config);
  const Index k = config.k;
  HmmEstimate out;
  out.diagnostics = est.diagnostics;
  out.observation_means = est.means[1];

  const Matrix projected_o = est.factors.y3.transpose() * out.observation_means;
  const Matrix raw = projected_o.partialPivLu().solve(est.factors.r3);
  out.raw_column_sums = raw.colwise().sum().transpose();
  out.transition = raw;
  for (Index j = 0; j < k; ++j) {
    if (std::abs(out.raw_column_sums(j)) < 1e-300) fail(ErrorCode::kDegenerateSpectrum, "transition column has zero mass");
    out.transition.col(j) /= out.raw_column_sums(j);
  }
  out.diagnostics.non_stochastic = (out.transition.array() < -0.05).any();
  if (out.diagnostics.non_stochastic) out.diagnostics.warnings.emplace_back("NonStochastic");
  out.transition_projected = out.transition.cwiseMax(0.0);
  for (Index j = 0; j < k; ++j) {
    const double s = out.transition_projected.col(j).sum();
    if (s > 0.0) out.transition_projected.col(j) /= s;
  }
  out.mixing_weights = *est.mixing_weights;
  const Matrix& t_used = config.project_simplex ? out.transition_projected : out.transition;
  out.initial = linalg::pseudoinverse_apply(t_used, out.mixing_weights);
  if (config.project_simplex) out.initial = project_to_simplex(out.initial);
  return out;
}

SampleBatch lift_second_order(const SampleBatch& batch) {
  std::vector<RowMatrix> views;
  for (Index v = 0; v < batch.num_views(); ++v) {
    const RowMatrix x = batch.dense_view(v);
    const Index d = x.cols();
    RowMatrix y(x.rows(), d + d * (d + 1) / 2);
    y.leftCols(d) = x;
    Index col = d;
    for (Index i = 0; i < d; ++i) {
      for (Index j = i; j < d; ++j) y.col(col++) = x.col(i).cwiseProduct(x.col(j));
    }
    views.push_back(std::move(y));
  }
  return SampleBatch::dense(std::move(views));
}

Vector project_to_simplex(const Vector& v) {
  const Index n = v.size();
  if (n == 0) return v;
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double shift = 0.0;
  for (Index i = 0; i < n; ++i) {
    cumulative += u[static_cast<std::size_t>(i)];
    const double candidate = (cumulative - 1.0) / static_cast<double>(i + 1);
    if (u[static_cast<std::size_t>(i)] - candidate > 0.0) shift = candidate;
  }
  return (v.array() - shift).cwiseMax(0.0).matrix();
}

}  // namespace mvmom::estimators
