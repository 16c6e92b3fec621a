#pragma once

#include <mvmom/estimators.hpp>
#include <mvmom/params.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace mvmom::eval {

/// Matching of estimated columns to true columns. permutation[j] is the true
/// column that estimate column j is compared against.
struct AlignmentResult {
  std::vector<Index> permutation;
  std::optional<Vector> scales;
  Vector per_column_error;   // ||c_j mu_hat_j - mu_perm(j)||_2
  Vector relative_error;     // per_column_error / max_j ||mu_j||_2
  double total_cost = 0.0;

  double max_error() const { return per_column_error.size() ? per_column_error.maxCoeff() : 0.0; }
  double max_relative_error() const { return relative_error.size() ? relative_error.maxCoeff() : 0.0; }
};

/// Optimal assignment (Hungarian method) for a square cost matrix;
/// result[row] = assigned column.
std::vector<Index> min_cost_assignment(const Matrix& cost);

/// Throws ZeroColumn if allow_scaling and an estimate column is zero.
AlignmentResult align_columns(const Matrix& estimate, const Matrix& truth, bool allow_scaling);

/// One permutation for all views, minimizing the summed column costs.
std::vector<AlignmentResult> align_views(const std::vector<Matrix>& estimates, const std::vector<Matrix>& truths,
                                         bool allow_scaling);

/// Column j of the result is column perm[j] of m.
Matrix permute_columns(const Matrix& m, const std::vector<Index>& perm);

struct ConvergenceCell {
  Index n = 0;
  std::uint64_t seed = 0;
  double error = 0.0;
};

struct ConvergenceReport {
  std::vector<ConvergenceCell> grid;
  std::vector<Index> sizes;
  std::vector<double> medians;  // per entry of `sizes`
  double slope = 0.0;           // least-squares slope of log median vs log N
};

/// Errors below this are treated as exact in the slope fit.
inline constexpr double kErrorFloor = 1e-14;

using Trial = std::function<double(Index n, std::uint64_t seed)>;

/// Runs trial(n, seed) on every cell; cells may run on `threads` workers and
/// are merged in grid order.
ConvergenceReport convergence_study(const Trial& trial, const std::vector<Index>& sizes,
                                    const std::vector<std::uint64_t>& seeds, int threads = 1);

enum class Estimator { kAlgorithmA, kAlgorithmB };

/// Algorithm A error: max column error after optimal scaling. Algorithm B
/// error: max column error of M3 relative to max_j ||mu_3j||.
ConvergenceReport convergence_study(const MultiViewMixtureParams& model, Estimator estimator,
                                    const std::vector<Index>& sizes, int seeds, std::uint64_t base_seed,
                                    int threads = 1);

/// Error of the recovered observation matrix O.
ConvergenceReport convergence_study(const HmmParams& model, const std::vector<Index>& sizes, int seeds,
                                    std::uint64_t base_seed, int threads = 1);

double loglog_slope(const std::vector<Index>& sizes, const std::vector<double>& errors);

struct NonidentReport {
  double p = 0.0;
  Matrix m, m_tilde, q;
  Vector w, w_tilde;
  Matrix pairs, pairs_tilde;
  Vector eta;
  Matrix triples, triples_tilde;
  double pairs_discrepancy = 0.0;
  double triples_discrepancy = 0.0;
  double column_sum_residual = 0.0;   // ||1^T Q - 1^T||_inf
  double min_nonnegative_entry = 0.0; // over M Q^{-1}, Q diag(w) M^T diag(Mw)^{-1}, Q w
  double off_diagonal_residual = 0.0; // of Q diag(w) Q^T
};

/// Two topic models with equal pair moments and different triple moments.
/// Throws ConditionViolated when the construction is invalid for p.
NonidentReport nonident_demo(double p);

}  // namespace mvmom::eval
