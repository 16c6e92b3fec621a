#include <mvmom/eval.hpp>

#include <mvmom/error.hpp>
#include <mvmom/models.hpp>

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <string>

namespace mvmom::eval {

std::vector<Index> min_cost_assignment(const Matrix& cost) {
  const Index n = cost.rows();
  if (cost.cols() != n) fail(ErrorCode::kDimensionMismatch, "assignment needs a square cost matrix");
  if (n == 0) return {};
  // Potentials method, 1-based internally.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<Index> match(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
  for (Index row = 1; row <= n; ++row) {
    match[0] = row;
    Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n + 1), inf);
    std::vector<bool> used(static_cast<std::size_t>(n + 1), false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const Index i0 = match[static_cast<std::size_t>(j0)];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (used[ju]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[ju];
        if (cur < minv[ju]) {
          minv[ju] = cur;
          way[ju] = j0;
        }
        if (minv[ju] < delta) {
          delta = minv[ju];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (used[ju]) {
          u[static_cast<std::size_t>(match[ju])] += delta;
          v[ju] -= delta;
        } else {
          minv[ju] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      const Index j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Index> result(static_cast<std::size_t>(n));
  for (Index j = 1; j <= n; ++j) result[static_cast<std::size_t>(match[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return result;
}

namespace {

struct PairCosts {
  Matrix cost;    // (estimate j, truth i)
  Matrix scale;   // optimal scalar per pair (1 without scaling)
};

PairCosts pair_costs(const Matrix& est, const Matrix& truth, bool allow_scaling) {
  if (est.rows() != truth.rows() || est.cols() != truth.cols()) {
    fail(ErrorCode::kDimensionMismatch, "estimate is " + std::to_string(est.rows()) + "x" +
                                            std::to_string(est.cols()) + ", truth is " +
                                            std::to_string(truth.rows()) + "x" + std::to_string(truth.cols()));
  }
  const Index k = est.cols();
  PairCosts pc{Matrix(k, k), Matrix::Ones(k, k)};
  for (Index j = 0; j < k; ++j) {
    const double sq = est.col(j).squaredNorm();
    if (allow_scaling && sq == 0.0) {
      fail(ErrorCode::kZeroColumn, "estimate column " + std::to_string(j + 1) + " is zero");
    }
    for (Index i = 0; i < k; ++i) {
      const double c = allow_scaling ? est.col(j).dot(truth.col(i)) / sq : 1.0;
      pc.scale(j, i) = c;
      pc.cost(j, i) = (c * est.col(j) - truth.col(i)).norm();
    }
  }
  return pc;
}

AlignmentResult finish(const PairCosts& pc, const Matrix& truth, const std::vector<Index>& perm, bool allow_scaling) {
  const Index k = truth.cols();
  AlignmentResult out;
  out.permutation = perm;
  out.per_column_error.resize(k);
  Vector scales(k);
  for (Index j = 0; j < k; ++j) {
    const Index i = perm[static_cast<std::size_t>(j)];
    out.per_column_error(j) = pc.cost(j, i);
    scales(j) = pc.scale(j, i);
  }
  if (allow_scaling) out.scales = scales;
  out.total_cost = out.per_column_error.sum();
  double denom = 0.0;
  for (Index i = 0; i < k; ++i) denom = std::max(denom, truth.col(i).norm());
  out.relative_error = denom > 0.0 ? Vector(out.per_column_error / denom) : out.per_column_error;
  return out;
}

}  // namespace

AlignmentResult align_columns(const Matrix& estimate, const Matrix& truth, bool allow_scaling) {
  const auto pc = pair_costs(estimate, truth, allow_scaling);
  return finish(pc, truth, min_cost_assignment(pc.cost), allow_scaling);
}

std::vector<AlignmentResult> align_views(const std::vector<Matrix>& estimates, const std::vector<Matrix>& truths,
                                         bool allow_scaling) {
  if (estimates.size() != truths.size() || estimates.empty()) {
    fail(ErrorCode::kDimensionMismatch, "need one estimate per true view");
  }
  std::vector<PairCosts> costs;
  Matrix total = Matrix::Zero(truths.front().cols(), truths.front().cols());
  for (std::size_t v = 0; v < truths.size(); ++v) {
    costs.push_back(pair_costs(estimates[v], truths[v], allow_scaling));
    if (costs.back().cost.rows() != total.rows()) fail(ErrorCode::kDimensionMismatch, "views disagree on k");
    total += costs.back().cost;
  }
  const auto perm = min_cost_assignment(total);
  std::vector<AlignmentResult> out;
  for (std::size_t v = 0; v < truths.size(); ++v) out.push_back(finish(costs[v], truths[v], perm, allow_scaling));
  return out;
}

Matrix permute_columns(const Matrix& m, const std::vector<Index>& perm) {
  Matrix out(m.rows(), static_cast<Index>(perm.size()));
  for (std::size_t j = 0; j < perm.size(); ++j) out.col(static_cast<Index>(j)) = m.col(perm[j]);
  return out;
}

double loglog_slope(const std::vector<Index>& sizes, const std::vector<double>& errors) {
  if (sizes.size() != errors.size() || sizes.size() < 2) {
    fail(ErrorCode::kInvalidArgument, "slope fit needs at least two grid points");
  }
  const auto n = static_cast<double>(sizes.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const double x = std::log(static_cast<double>(sizes[i]));
    const double y = std::log(std::max(errors[i], kErrorFloor));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = n * sxx - sx * sx;
  if (denom <= 0.0) fail(ErrorCode::kInvalidArgument, "slope fit needs distinct grid sizes");
  return (n * sxy - sx * sy) / denom;
}

ConvergenceReport convergence_study(const Trial& trial, const std::vector<Index>& sizes,
                                    const std::vector<std::uint64_t>& seeds, int threads) {
  if (sizes.empty() || seeds.empty()) fail(ErrorCode::kInvalidArgument, "empty convergence grid");
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    if (sizes[i] <= sizes[i - 1]) fail(ErrorCode::kInvalidArgument, "grid sizes must increase");
  }
  ConvergenceReport report;
  for (Index n : sizes)
    for (auto s : seeds) report.grid.push_back({n, s, 0.0});

  const std::size_t workers = static_cast<std::size_t>(std::max(1, threads));
  for (std::size_t start = 0; start < report.grid.size(); start += workers) {
    const std::size_t stop = std::min(report.grid.size(), start + workers);
    std::vector<std::future<double>> running;
    for (std::size_t c = start; c < stop; ++c) {
      const auto cell = report.grid[c];
      running.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred,
                                   [&trial, cell] { return trial(cell.n, cell.seed); }));
    }
    for (std::size_t c = start; c < stop; ++c) report.grid[c].error = running[c - start].get();
  }

  report.sizes = sizes;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    std::vector<double> errs;
    for (const auto& cell : report.grid)
      if (cell.n == sizes[i]) errs.push_back(cell.error);
    std::sort(errs.begin(), errs.end());
    const std::size_t m = errs.size();
    report.medians.push_back(m % 2 ? errs[m / 2] : 0.5 * (errs[m / 2 - 1] + errs[m / 2]));
  }
  report.slope = sizes.size() >= 2 ? loglog_slope(sizes, report.medians) : 0.0;
  return report;
}

namespace {

std::vector<std::uint64_t> seed_list(int seeds, std::uint64_t base) {
  std::vector<std::uint64_t> out;
  for (int s = 0; s < seeds; ++s) out.push_back(derive_seed(base, static_cast<std::uint64_t>(s)));
  return out;
}

}  // namespace

ConvergenceReport convergence_study(const MultiViewMixtureParams& model, Estimator estimator,
                                    const std::vector<Index>& sizes, int seeds, std::uint64_t base_seed,
                                    int threads) {
  model.validate();
  Trial trial = [&model, estimator](Index n, std::uint64_t seed) {
    Rng rng(seed);
    estimators::EstimatorConfig cfg;
    cfg.k = model.k();
    cfg.seed = derive_seed(seed, 17);
    if (estimator == Estimator::kAlgorithmA) {
      const SampleBatch batch = models::sample_topic_documents(model, n, 3, rng);
      const EmpiricalMoments moments(batch, SplitOptions{false, 0.5, 0});
      const auto est = estimators::algorithm_a(moments, cfg);
      return align_columns(est.means, model.means[0], true).max_error();
    }
    const SampleBatch batch = models::sample_mixture(model, n, rng);
    const EmpiricalMoments moments(batch, SplitOptions{true, 0.5, derive_seed(seed, 29)});
    const auto est = estimators::algorithm_b(moments, cfg);
    return align_columns(est.means[2], model.means[2], false).max_relative_error();
  };
  return convergence_study(trial, sizes, seed_list(seeds, base_seed), threads);
}

ConvergenceReport convergence_study(const HmmParams& model, const std::vector<Index>& sizes, int seeds,
                                    std::uint64_t base_seed, int threads) {
  model.validate();
  Trial trial = [&model](Index n, std::uint64_t seed) {
    Rng rng(seed);
    estimators::EstimatorConfig cfg;
    cfg.k = model.k();
    cfg.seed = derive_seed(seed, 17);
    const SampleBatch batch = models::sample_hmm_triples(model, n, rng);
    const EmpiricalMoments moments(batch, SplitOptions{true, 0.5, derive_seed(seed, 29)});
    const auto est = estimators::recover_hmm(moments, cfg);
    return align_columns(est.observation_means, model.observation, false).max_error();
  };
  return convergence_study(trial, sizes, seed_list(seeds, base_seed), threads);
}

NonidentReport nonident_demo(double p) {
  if (!(p > 0.0 && p < 1.0)) fail(ErrorCode::kInvalidArgument, "p must lie in (0, 1)");
  NonidentReport r;
  r.p = p;
  r.m.resize(2, 2);
  r.m << p, 1.0 - p,
         1.0 - p, p;
  r.w = Vector::Constant(2, 0.5);
  const double root = std::sqrt(1.0 + 4.0 * p * (1.0 - p));
  r.q.resize(2, 2);
  r.q << p, (1.0 + root) / 2.0,
         1.0 - p, (1.0 - root) / 2.0;

  Eigen::FullPivLU<Matrix> lu(r.q);
  if (!lu.isInvertible()) fail(ErrorCode::kConditionViolated, "Q is singular");
  r.m_tilde = r.m * lu.inverse();
  r.w_tilde = r.q * r.w;

  r.column_sum_residual = (r.q.colwise().sum().array() - 1.0).abs().maxCoeff();
  const Vector mw = r.m * r.w;
  const Matrix back = r.q * r.w.asDiagonal() * r.m.transpose() * mw.cwiseInverse().asDiagonal();
  r.min_nonnegative_entry = std::min({r.m_tilde.minCoeff(), back.minCoeff(), r.w_tilde.minCoeff()});
  Matrix qwq = r.q * r.w.asDiagonal() * r.q.transpose();
  qwq.diagonal().setZero();
  r.off_diagonal_residual = qwq.cwiseAbs().maxCoeff();

  MultiViewMixtureParams original{r.w, {r.m, r.m, r.m}, {}, Family::kTopic};
  // The alternative need not be a valid topic model when the conditions fail,
  // so its moments are formed without validation.
  r.pairs = r.m * r.w.asDiagonal() * r.m.transpose();
  r.pairs_tilde = r.m_tilde * r.w_tilde.asDiagonal() * r.m_tilde.transpose();
  r.eta = Vector::Unit(2, 0);
  r.triples = population_triples(original, 0, 1, 2, r.eta);
  r.triples_tilde = r.m_tilde * (r.m_tilde.transpose() * r.eta).cwiseProduct(r.w_tilde).asDiagonal() *
                    r.m_tilde.transpose();
  r.pairs_discrepancy = (r.pairs - r.pairs_tilde).cwiseAbs().maxCoeff();
  r.triples_discrepancy = (r.triples - r.triples_tilde).cwiseAbs().maxCoeff();

  constexpr double tol = 1e-9;
  if (r.column_sum_residual > tol) fail(ErrorCode::kConditionViolated, "columns of Q do not sum to 1");
  if (r.min_nonnegative_entry < -tol) {
    fail(ErrorCode::kConditionViolated, "alternative parameters have negative entries (p = " + std::to_string(p) + ")");
  }
  if (r.off_diagonal_residual > tol) fail(ErrorCode::kConditionViolated, "Q diag(w) Q^T is not diagonal");
  return r;
}

}  // namespace mvmom::eval
