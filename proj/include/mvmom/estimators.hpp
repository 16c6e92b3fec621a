#pragma once

#include <mvmom/linalg.hpp>
#include <mvmom/moments.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mvmom::estimators {

/// B(eta) = (U_a^T P_abc(eta) U_b) (U_a^T P_ab U_b)^{-1}.
struct ObservableOperator {
  Matrix matrix;        // k x k
  Vector direction;     // eta
  Matrix left_basis;    // U_a
  Matrix right_basis;   // U_b
};

/// Throws SingularCore if sigma_k(U_a^T P_ab U_b) < core_rank_tol * sigma_1.
ObservableOperator build_operator(const Matrix& pairs, const Matrix& contraction, const Matrix& left_basis,
                                  const Matrix& right_basis, const Vector& eta, double core_rank_tol = 1e-10);
/// Looks up (or forms by linearity) the contraction for eta in the set.
ObservableOperator build_operator(const MomentSet& moments, const linalg::LowRankBasis& bases, const Vector& eta,
                                  double core_rank_tol = 1e-10);

enum class EtaPolicy { kRandom, kCoordinate, kLeverage };

struct EtaChoice {
  EtaPolicy policy = EtaPolicy::kRandom;
  Index coordinate = 0;  // 0-based, for kCoordinate
};

enum class ThetaPolicy { kRandomRotation, kIdentity, kFixed };

struct EstimatorConfig {
  Index k = 2;
  EtaChoice eta;
  ThetaPolicy theta_policy = ThetaPolicy::kRandomRotation;
  Matrix theta;  // used with kFixed
  std::uint64_t seed = 0;
  int retry_limit = 10;  // total number of attempts with fresh randomness
  Tolerances tol;
  double core_rank_tol = 1e-10;
  double off_diagonal_warn = 0.1;
  bool project_simplex = false;
};

struct Diagnostics {
  std::vector<double> eigen_gaps;
  std::vector<double> imag_residues;
  Vector pairs_singular_values;        // top-k singular values of P_12
  Vector direction_singular_values;    // top-k singular values of P_13 (direction basis)
  int retries = 0;
  double off_diagonal_ratio = 0.0;     // worst ||offdiag|| / ||diag|| after congruence
  bool off_diagonal_warning = false;
  bool negative_mass = false;
  bool non_stochastic = false;
  double simplex_distance = 0.0;       // of the raw mixing weights
  std::vector<std::string> warnings;
};

struct TopicEstimate {
  Matrix means;   // d x k, columns sum to 1
  Vector eta;     // direction the operator was built from
  Vector eigenvalues;
  Diagnostics diagnostics;
};

/// Factors of the simultaneous diagonalization, kept for follow-up estimates.
struct OperatorFactors {
  Matrix u1;     // left basis of P_12
  Matrix u2;     // right basis of P_12
  Matrix u3;     // direction basis of view 3
  Matrix theta;  // rows are the direction coefficients
  Matrix r1;     // unit-norm eigenvectors shared by every B_{1,c,v}
  Matrix l;      // L for view 3: (i, j) = lambda_{i,j}
  Matrix y3;     // left basis of P_31 (view-1 recovery)
  Matrix r3;     // eigenvectors of B_{3,1,2}, reordered to match r1
};

struct MultiViewEstimate {
  std::vector<Matrix> means;  // per view; empty when a view was not estimated
  std::optional<Vector> mixing_weights;
  std::vector<std::vector<Matrix>> covariances;  // per view, empty when not recovered
  Diagnostics diagnostics;
  OperatorFactors factors;
};

struct HmmEstimate {
  Matrix observation_means;         // O
  Matrix transition;                // columns rescaled to sum to 1
  Matrix transition_projected;      // negatives clipped, renormalized
  Vector raw_column_sums;           // before rescaling
  Vector initial;                   // pi
  Vector mixing_weights;            // T pi
  Diagnostics diagnostics;
};

TopicEstimate algorithm_a(const MomentSource& moments, const EstimatorConfig& config);

/// Estimates M_3 (views 1, 2, 3 of the source).
MultiViewEstimate algorithm_b(const MomentSource& moments, const EstimatorConfig& config);

/// Estimates every view's means with one shared column order.
MultiViewEstimate estimate_all_views(const MomentSource& moments, const EstimatorConfig& config);

/// Raw pseudoinverse estimate M3^+ E[x3]; no simplex projection.
Vector estimate_mixing_weights(const Matrix& m3_hat, const Vector& mean_view3);

/// Conditional covariances of view 3, one per component, in the estimate's order.
std::vector<Matrix> recover_covariances(const MomentSource& moments, const MultiViewEstimate& estimate);

HmmEstimate recover_hmm(const MomentSource& moments, const EstimatorConfig& config);

/// Appends the upper-triangular products x_i x_j (i <= j, row-major) to every view.
SampleBatch lift_second_order(const SampleBatch& batch);

/// Euclidean projection onto the probability simplex.
Vector project_to_simplex(const Vector& v);

}  // namespace mvmom::estimators
