#include <mvmom/moments.hpp>

#include <mvmom/error.hpp>

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <string>

namespace mvmom {

// ---------------------------------------------------------------------------
// SampleBatch

SampleBatch SampleBatch::dense(std::vector<RowMatrix> views) {
  SampleBatch b;
  b.one_hot_ = false;
  b.rows_ = views.empty() ? 0 : views.front().rows();
  for (const auto& v : views) {
    if (v.rows() != b.rows_) fail(ErrorCode::kDimensionMismatch, "all views must have the same row count");
    b.dims_.push_back(v.cols());
  }
  b.dense_ = std::move(views);
  return b;
}

SampleBatch SampleBatch::one_hot(std::vector<std::vector<std::int32_t>> tokens, std::vector<Index> dims) {
  if (tokens.size() != dims.size()) fail(ErrorCode::kDimensionMismatch, "one token list per view required");
  SampleBatch b;
  b.one_hot_ = true;
  b.rows_ = tokens.empty() ? 0 : static_cast<Index>(tokens.front().size());
  for (std::size_t v = 0; v < tokens.size(); ++v) {
    if (static_cast<Index>(tokens[v].size()) != b.rows_) {
      fail(ErrorCode::kDimensionMismatch, "all views must have the same row count");
    }
    for (auto t : tokens[v]) {
      if (t < 0 || t >= dims[v]) {
        fail(ErrorCode::kDimensionMismatch, "token id " + std::to_string(t) + " outside [0, " +
                                                std::to_string(dims[v]) + ")");
      }
    }
  }
  b.dims_ = std::move(dims);
  b.tokens_ = std::move(tokens);
  return b;
}

const RowMatrix& SampleBatch::view(Index v) const {
  if (one_hot_) fail(ErrorCode::kInvalidArgument, "dense view requested from a one-hot batch");
  return dense_.at(static_cast<std::size_t>(v));
}

const std::vector<std::int32_t>& SampleBatch::tokens(Index v) const {
  if (!one_hot_) fail(ErrorCode::kInvalidArgument, "token ids requested from a dense batch");
  return tokens_.at(static_cast<std::size_t>(v));
}

RowMatrix SampleBatch::dense_view(Index v) const {
  if (!one_hot_) return view(v);
  const auto& t = tokens(v);
  RowMatrix out = RowMatrix::Zero(rows_, dim(v));
  for (Index n = 0; n < rows_; ++n) out(n, t[static_cast<std::size_t>(n)]) = 1.0;
  return out;
}

SampleBatch SampleBatch::subset(const std::vector<Index>& rows) const {
  SampleBatch out;
  out.one_hot_ = one_hot_;
  out.rows_ = static_cast<Index>(rows.size());
  out.dims_ = dims_;
  if (one_hot_) {
    for (const auto& t : tokens_) {
      std::vector<std::int32_t> sel;
      sel.reserve(rows.size());
      for (Index r : rows) sel.push_back(t.at(static_cast<std::size_t>(r)));
      out.tokens_.push_back(std::move(sel));
    }
  } else {
    for (const auto& m : dense_) {
      RowMatrix sel(out.rows_, m.cols());
      for (std::size_t i = 0; i < rows.size(); ++i) sel.row(static_cast<Index>(i)) = m.row(rows[i]);
      out.dense_.push_back(std::move(sel));
    }
  }
  return out;
}

SampleBatch SampleBatch::select_views(const std::vector<Index>& views) const {
  SampleBatch out;
  out.one_hot_ = one_hot_;
  out.rows_ = rows_;
  for (Index v : views) {
    out.dims_.push_back(dim(v));
    if (one_hot_) {
      out.tokens_.push_back(tokens(v));
    } else {
      out.dense_.push_back(view(v));
    }
  }
  return out;
}

bool SampleBatch::operator==(const SampleBatch& other) const {
  if (one_hot_ != other.one_hot_ || rows_ != other.rows_ || dims_ != other.dims_) return false;
  if (one_hot_) return tokens_ == other.tokens_;
  for (std::size_t v = 0; v < dense_.size(); ++v) {
    if (dense_[v] != other.dense_[v]) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Accumulation

namespace {

constexpr Index kLeafRows = 1024;

void check_views(const SampleBatch& batch, std::initializer_list<Index> views) {
  if (batch.size() == 0) fail(ErrorCode::kEmptyBatch, "batch has no rows");
  for (Index v : views) {
    if (v < 0 || v >= batch.num_views()) {
      fail(ErrorCode::kInvalidArgument, "view index " + std::to_string(v + 1) + " out of range");
    }
  }
}

int depth_for(int threads) {
  int depth = 0;
  while ((1 << depth) < threads) ++depth;
  return depth;
}

// Sum of leaf(lo, hi) over a balanced binary tree of row ranges. The tree
// shape depends only on the row count.
template <class Leaf>
Matrix pairwise_sum(Index lo, Index hi, const Leaf& leaf, int parallel_depth) {
  if (hi - lo <= kLeafRows) return leaf(lo, hi);
  const Index mid = lo + (hi - lo) / 2;
  if (parallel_depth > 0) {
    auto left_future = std::async(std::launch::async, [&] { return pairwise_sum(lo, mid, leaf, parallel_depth - 1); });
    Matrix right = pairwise_sum(mid, hi, leaf, parallel_depth - 1);
    Matrix left = left_future.get();
    left += right;
    return left;
  }
  Matrix left = pairwise_sum(lo, mid, leaf, 0);
  left += pairwise_sum(mid, hi, leaf, 0);
  return left;
}

// Per-row scalar <eta, x_c>.
Vector projections(const SampleBatch& batch, Index c, const Vector& eta) {
  if (eta.size() != batch.dim(c)) {
    fail(ErrorCode::kDimensionMismatch, "direction has length " + std::to_string(eta.size()) +
                                            ", view has dimension " + std::to_string(batch.dim(c)));
  }
  if (batch.is_one_hot()) {
    const auto& t = batch.tokens(c);
    Vector s(batch.size());
    for (Index n = 0; n < batch.size(); ++n) s(n) = eta(t[static_cast<std::size_t>(n)]);
    return s;
  }
  return batch.view(c) * eta;
}

// (1/N) sum_n s_n x_a x_b^T, or without weights when `weights` is null.
Matrix weighted_cross(const SampleBatch& batch, Index a, Index b, const Vector* weights,
                      const AccumulateOptions& opts) {
  const Index n = batch.size();
  const Index da = batch.dim(a);
  const Index db = batch.dim(b);
  Matrix total;
  if (batch.is_one_hot()) {
    const auto& ta = batch.tokens(a);
    const auto& tb = batch.tokens(b);
    auto leaf = [&](Index lo, Index hi) {
      Matrix acc = Matrix::Zero(da, db);
      for (Index r = lo; r < hi; ++r) {
        const auto i = static_cast<std::size_t>(r);
        acc(ta[i], tb[i]) += weights ? (*weights)(r) : 1.0;
      }
      return acc;
    };
    total = pairwise_sum(0, n, leaf, depth_for(opts.threads));
  } else {
    const RowMatrix& xa = batch.view(a);
    const RowMatrix& xb = batch.view(b);
    auto leaf = [&](Index lo, Index hi) -> Matrix {
      const Index len = hi - lo;
      if (weights) {
        return xa.middleRows(lo, len).transpose() * weights->segment(lo, len).asDiagonal() *
               xb.middleRows(lo, len);
      }
      return xa.middleRows(lo, len).transpose() * xb.middleRows(lo, len);
    };
    total = pairwise_sum(0, n, leaf, depth_for(opts.threads));
  }
  return total / static_cast<double>(n);
}

}  // namespace

Matrix empirical_pairs(const SampleBatch& batch, Index view_a, Index view_b, const AccumulateOptions& opts) {
  check_views(batch, {view_a, view_b});
  if (view_a == view_b) fail(ErrorCode::kInvalidArgument, "pairs need two distinct views");
  return weighted_cross(batch, view_a, view_b, nullptr, opts);
}

Matrix empirical_triples_contraction(const SampleBatch& batch, const Vector& eta, Index view_a, Index view_b,
                                     Index view_c, const AccumulateOptions& opts) {
  check_views(batch, {view_a, view_b, view_c});
  const Vector s = projections(batch, view_c, eta);
  return weighted_cross(batch, view_a, view_b, &s, opts);
}

Matrix empirical_fourth_contraction(const SampleBatch& batch, const Vector& phi, const Vector& psi, Index view_a,
                                    Index view_b, Index view_c, const AccumulateOptions& opts) {
  check_views(batch, {view_a, view_b, view_c});
  const Vector s = projections(batch, view_c, phi).cwiseProduct(projections(batch, view_c, psi));
  return weighted_cross(batch, view_a, view_b, &s, opts);
}

Vector empirical_mean(const SampleBatch& batch, Index view) {
  check_views(batch, {view});
  const Index d = batch.dim(view);
  Matrix total;
  if (batch.is_one_hot()) {
    const auto& t = batch.tokens(view);
    auto leaf = [&](Index lo, Index hi) {
      Matrix acc = Matrix::Zero(d, 1);
      for (Index r = lo; r < hi; ++r) acc(t[static_cast<std::size_t>(r)], 0) += 1.0;
      return acc;
    };
    total = pairwise_sum(0, batch.size(), leaf, 0);
  } else {
    const RowMatrix& x = batch.view(view);
    auto leaf = [&](Index lo, Index hi) -> Matrix {
      return x.middleRows(lo, hi - lo).colwise().sum().transpose();
    };
    total = pairwise_sum(0, batch.size(), leaf, 0);
  }
  return total.col(0) / static_cast<double>(batch.size());
}

std::pair<SampleBatch, SampleBatch> split_batch(const SampleBatch& batch, double fraction, Rng& rng) {
  if (batch.size() < 2) fail(ErrorCode::kEmptyBatch, "splitting needs at least two rows");
  if (!(fraction > 0.0 && fraction < 1.0)) fail(ErrorCode::kInvalidArgument, "split fraction must lie in (0, 1)");
  const Index n = batch.size();
  Index first = static_cast<Index>(std::llround(fraction * static_cast<double>(n)));
  first = std::clamp<Index>(first, 1, n - 1);

  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Index> a(perm.begin(), perm.begin() + first);
  std::vector<Index> b(perm.begin() + first, perm.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return {batch.subset(a), batch.subset(b)};
}

// ---------------------------------------------------------------------------
// Population moments

namespace {

void check_param_views(const MultiViewMixtureParams& p, std::initializer_list<Index> views) {
  for (Index v : views) {
    if (v < 0 || v >= p.num_views()) {
      fail(ErrorCode::kInvalidArgument, "view index " + std::to_string(v + 1) + " out of range");
    }
  }
}

void check_distinct(Index a, Index b) {
  if (a == b) fail(ErrorCode::kInvalidArgument, "moments need distinct views");
}

}  // namespace

Matrix population_pairs(const MultiViewMixtureParams& p, Index a, Index b) {
  check_param_views(p, {a, b});
  check_distinct(a, b);
  return p.means[a] * p.weights.asDiagonal() * p.means[b].transpose();
}

Matrix population_triples(const MultiViewMixtureParams& p, Index a, Index b, Index c, const Vector& eta) {
  check_param_views(p, {a, b, c});
  check_distinct(a, b);
  check_distinct(a, c);
  check_distinct(b, c);
  if (eta.size() != p.dim(c)) fail(ErrorCode::kDimensionMismatch, "direction length does not match view dimension");
  const Vector diag = (p.means[c].transpose() * eta).cwiseProduct(p.weights);
  return p.means[a] * diag.asDiagonal() * p.means[b].transpose();
}

Matrix population_fourth(const MultiViewMixtureParams& p, Index a, Index b, Index c, const Vector& phi,
                         const Vector& psi) {
  check_param_views(p, {a, b, c});
  check_distinct(a, b);
  check_distinct(a, c);
  check_distinct(b, c);
  if (phi.size() != p.dim(c) || psi.size() != p.dim(c)) {
    fail(ErrorCode::kDimensionMismatch, "direction length does not match view dimension");
  }
  const Matrix& mc = p.means[c];
  const Index k = p.k();
  Vector second(k);
  for (Index t = 0; t < k; ++t) {
    const double mean_part = phi.dot(mc.col(t)) * psi.dot(mc.col(t));
    double cov_part = 0.0;
    if (p.has_covariances()) {
      cov_part = phi.dot(p.covariances[c][t] * psi);
    } else if (p.family == Family::kTopic) {
      // One-hot: E[x x^T | h] = diag(mu), so the covariance is diag(mu) - mu mu^T.
      cov_part = phi.cwiseProduct(psi).dot(mc.col(t)) - mean_part;
    } else if (p.family == Family::kPointMass) {
      cov_part = 0.0;
    } else {
      fail(ErrorCode::kMissingFourthMoments, "gaussian parameters carry no covariances");
    }
    second(t) = mean_part + cov_part;
  }
  return p.means[a] * second.cwiseProduct(p.weights).asDiagonal() * p.means[b].transpose();
}

MomentSet population_moments(const MultiViewMixtureParams& params, const std::vector<Vector>& directions,
                             const std::vector<std::pair<Vector, Vector>>& fourth_directions) {
  params.validate();
  if (params.num_views() < 3) fail(ErrorCode::kDimensionMismatch, "population moments need three views");
  MomentSet set;
  set.pairs_12 = population_pairs(params, 0, 1);
  set.pairs_13 = population_pairs(params, 0, 2);
  for (const auto& eta : directions) {
    set.triples_contractions.push_back({eta, population_triples(params, 0, 1, 2, eta)});
  }
  for (const auto& [phi, psi] : fourth_directions) {
    set.fourth_contractions.push_back({phi, psi, population_fourth(params, 0, 1, 2, phi, psi)});
  }
  set.mean_view3 = params.means[2] * params.weights;
  set.sample_count = 0;
  return set;
}

MomentSet empirical_moments(const SampleBatch& batch, const std::vector<Vector>& directions,
                            const std::vector<std::pair<Vector, Vector>>& fourth_directions,
                            const AccumulateOptions& opts) {
  check_views(batch, {0, 1, 2});
  MomentSet set;
  set.pairs_12 = empirical_pairs(batch, 0, 1, opts);
  set.pairs_13 = empirical_pairs(batch, 0, 2, opts);
  for (const auto& eta : directions) {
    set.triples_contractions.push_back({eta, empirical_triples_contraction(batch, eta, 0, 1, 2, opts)});
  }
  for (const auto& [phi, psi] : fourth_directions) {
    set.fourth_contractions.push_back({phi, psi, empirical_fourth_contraction(batch, phi, psi, 0, 1, 2, opts)});
  }
  set.mean_view3 = empirical_mean(batch, 2);
  set.sample_count = static_cast<std::size_t>(batch.size());
  return set;
}

std::vector<Vector> coordinate_directions(Index d) {
  std::vector<Vector> out;
  for (Index i = 0; i < d; ++i) out.push_back(Vector::Unit(d, i));
  return out;
}

std::vector<std::pair<Vector, Vector>> coordinate_pairs(Index d) {
  std::vector<std::pair<Vector, Vector>> out;
  for (Index i = 0; i < d; ++i)
    for (Index j = i; j < d; ++j) out.emplace_back(Vector::Unit(d, i), Vector::Unit(d, j));
  return out;
}

// ---------------------------------------------------------------------------
// Moment sources

PopulationMoments::PopulationMoments(MultiViewMixtureParams params) : params_(std::move(params)) {
  params_.validate();
}

Matrix PopulationMoments::pairs(Index a, Index b) const { return population_pairs(params_, a, b); }

Matrix PopulationMoments::triples(Index a, Index b, Index c, const Vector& eta) const {
  return population_triples(params_, a, b, c, eta);
}

Matrix PopulationMoments::fourth(Index a, Index b, Index c, const Vector& phi, const Vector& psi) const {
  return population_fourth(params_, a, b, c, phi, psi);
}

Vector PopulationMoments::mean(Index v) const {
  if (v < 0 || v >= params_.num_views()) fail(ErrorCode::kInvalidArgument, "view index out of range");
  return params_.means[v] * params_.weights;
}

EmpiricalMoments::EmpiricalMoments(SampleBatch batch, const SplitOptions& split, AccumulateOptions opts)
    : opts_(opts) {
  if (batch.size() == 0) fail(ErrorCode::kEmptyBatch, "batch has no rows");
  full_ = std::make_shared<const SampleBatch>(std::move(batch));
  if (split.enabled && full_->size() >= 2) {
    Rng rng(split.seed);
    auto [first, second] = split_batch(*full_, split.fraction, rng);
    basis_part_ = std::make_shared<const SampleBatch>(std::move(first));
    operator_part_ = std::make_shared<const SampleBatch>(std::move(second));
  } else {
    basis_part_ = full_;
    operator_part_ = full_;
  }
}

Matrix EmpiricalMoments::pairs(Index a, Index b) const { return empirical_pairs(*operator_part_, a, b, opts_); }

Matrix EmpiricalMoments::basis_pairs(Index a, Index c) const { return empirical_pairs(*basis_part_, a, c, opts_); }

Matrix EmpiricalMoments::triples(Index a, Index b, Index c, const Vector& eta) const {
  return empirical_triples_contraction(*operator_part_, eta, a, b, c, opts_);
}

Matrix EmpiricalMoments::fourth(Index a, Index b, Index c, const Vector& phi, const Vector& psi) const {
  return empirical_fourth_contraction(*operator_part_, phi, psi, a, b, c, opts_);
}

Vector EmpiricalMoments::mean(Index v) const { return empirical_mean(*full_, v); }

TableMoments::TableMoments(MomentSet set) : set_(std::move(set)) {
  const Index d = set_.pairs_12.rows();
  if (set_.pairs_13.rows() != d) {
    fail(ErrorCode::kDimensionMismatch, "pairs_12 and pairs_13 disagree on the view-1 dimension");
  }
  const Index d3 = set_.pairs_13.cols();
  directions_.resize(d3, static_cast<Index>(set_.triples_contractions.size()));
  for (std::size_t i = 0; i < set_.triples_contractions.size(); ++i) {
    const auto& c = set_.triples_contractions[i];
    if (c.direction.size() != d3 || c.contracted.rows() != d || c.contracted.cols() != set_.pairs_12.cols()) {
      fail(ErrorCode::kDimensionMismatch, "triples contraction has inconsistent shape");
    }
    directions_.col(static_cast<Index>(i)) = c.direction;
  }
}

Index TableMoments::dim(Index view) const {
  switch (view) {
    case 0: return set_.pairs_12.rows();
    case 1: return set_.pairs_12.cols();
    case 2: return set_.pairs_13.cols();
    default: fail(ErrorCode::kInvalidArgument, "moment tables only hold views 1-3");
  }
}

Matrix TableMoments::pairs(Index a, Index b) const {
  if (a == 0 && b == 1) return set_.pairs_12;
  if (a == 0 && b == 2) return set_.pairs_13;
  if (a == 1 && b == 0) return set_.pairs_12.transpose();
  if (a == 2 && b == 0) return set_.pairs_13.transpose();
  fail(ErrorCode::kInvalidArgument, "moment table has no pairs for views " + std::to_string(a + 1) + "," +
                                        std::to_string(b + 1));
}

Matrix TableMoments::triples(Index a, Index b, Index c, const Vector& eta) const {
  if (a != 0 || b != 1 || c != 2) {
    fail(ErrorCode::kInvalidArgument, "moment table only holds contractions for views (1, 2, 3)");
  }
  if (directions_.cols() == 0) fail(ErrorCode::kInvalidArgument, "moment table holds no triples contractions");
  if (eta.size() != directions_.rows()) fail(ErrorCode::kDimensionMismatch, "direction length mismatch");
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(directions_);
  const Vector coeffs = cod.solve(eta);
  if ((directions_ * coeffs - eta).norm() > 1e-9 * std::max(1.0, eta.norm())) {
    fail(ErrorCode::kInvalidArgument, "direction lies outside the span of the stored contractions");
  }
  Matrix out = Matrix::Zero(set_.pairs_12.rows(), set_.pairs_12.cols());
  for (Index i = 0; i < coeffs.size(); ++i) {
    if (coeffs(i) != 0.0) out += coeffs(i) * set_.triples_contractions[static_cast<std::size_t>(i)].contracted;
  }
  return out;
}

Matrix TableMoments::fourth(Index a, Index b, Index c, const Vector& phi, const Vector& psi) const {
  if (a != 0 || b != 1 || c != 2) {
    fail(ErrorCode::kInvalidArgument, "moment table only holds contractions for views (1, 2, 3)");
  }
  for (const auto& f : set_.fourth_contractions) {
    if ((f.phi == phi && f.psi == psi) || (f.phi == psi && f.psi == phi)) return f.contracted;
  }
  // Bilinear expansion over stored coordinate pairs.
  const Index d = dim(2);
  auto coordinate = [&](const Vector& v) -> Index {
    Index arg = -1;
    if (v.size() != d) return -1;
    for (Index i = 0; i < d; ++i) {
      if (v(i) == 1.0 && arg < 0) {
        arg = i;
      } else if (v(i) != 0.0) {
        return -1;
      }
    }
    return arg;
  };
  std::vector<std::vector<const Matrix*>> grid(static_cast<std::size_t>(d),
                                               std::vector<const Matrix*>(static_cast<std::size_t>(d), nullptr));
  for (const auto& f : set_.fourth_contractions) {
    const Index i = coordinate(f.phi);
    const Index j = coordinate(f.psi);
    if (i < 0 || j < 0) continue;
    grid[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = &f.contracted;
    grid[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = &f.contracted;
  }
  Matrix out = Matrix::Zero(set_.pairs_12.rows(), set_.pairs_12.cols());
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < d; ++j) {
      const double w = phi(i) * psi(j);
      if (w == 0.0) continue;
      const Matrix* m = grid[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      if (!m) fail(ErrorCode::kMissingFourthMoments, "moment table lacks the fourth-order contraction needed");
      out += w * *m;
    }
  }
  return out;
}

Vector TableMoments::mean(Index v) const {
  if (v != 2) fail(ErrorCode::kInvalidArgument, "moment table only holds the mean of view 3");
  return set_.mean_view3;
}

}  // namespace mvmom
