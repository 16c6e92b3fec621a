#pragma once

#include <mvmom/types.hpp>

namespace mvmom::linalg {

/// Top-k singular subspaces of a matrix.
struct LowRankBasis {
  Matrix left;               // m x k, orthonormal columns
  Matrix right;              // n x k, orthonormal columns
  Vector singular_values;    // k values, nonincreasing
  Index rank() const { return singular_values.size(); }
};

/// Real eigendecomposition of a (generally nonsymmetric) square matrix,
/// together with the diagnostics needed to decide whether it is trustworthy.
struct EigenDecomposition {
  Matrix eigenvectors;   // unit-norm columns, largest-magnitude entry positive
  Vector eigenvalues;    // real parts, sorted in decreasing order
  double max_imag_residue = 0.0;  // relative to the spectral norm of the input
  double min_gap = 0.0;           // absolute smallest pairwise eigenvalue distance
};

/// Throws RankDeficient if sigma_k < rank_tol * sigma_1.
LowRankBasis truncated_svd(const Matrix& a, Index k, double rank_tol = 1e-12);

/// Throws DegenerateSpectrum if the spectrum is complex or not separated,
/// relative to the spectral norm of `a`.
EigenDecomposition real_eigendecomposition(const Matrix& a, const Tolerances& tol = {});

/// Minimum-norm least-squares solution of a x = b.
Vector pseudoinverse_apply(const Matrix& a, const Vector& b, double rank_tol = 1e-12);

Vector sample_unit_sphere(Index dim, Rng& rng);

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix, sign-fixed).
Matrix sample_rotation(Index k, Rng& rng);

/// Squared row norms of the left basis.
Vector leverage_scores(const LowRankBasis& basis);

double spectral_norm(const Matrix& a);

/// Flips each column so that its largest-magnitude entry is positive.
void canonicalize_signs(Matrix& columns);

}  // namespace mvmom::linalg
