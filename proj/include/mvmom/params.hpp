#pragma once

#include <mvmom/types.hpp>

#include <optional>
#include <string>
#include <vector>

namespace mvmom {

enum class Family { kTopic, kGaussian, kPointMass };

std::string family_name(Family f);
Family parse_family(const std::string& name);

/// Ground-truth parameters of a multi-view mixture: h ~ weights, and view v
/// has conditional mean column means[v].col(h).
///
/// `covariances[v][j]`, when present, is the conditional covariance of view v
/// given h = j. It need not be Gaussian; only the second conditional moment
/// is used by the population fourth-order contractions.
struct MultiViewMixtureParams {
  Vector weights;
  std::vector<Matrix> means;
  std::vector<std::vector<Matrix>> covariances;
  Family family = Family::kGaussian;

  Index k() const { return weights.size(); }
  Index num_views() const { return static_cast<Index>(means.size()); }
  Index dim(Index view) const { return means.at(static_cast<std::size_t>(view)).rows(); }
  bool has_covariances() const { return !covariances.empty(); }

  /// sigma_k of every view's mean matrix.
  Vector rank_report() const;

  /// Throws InvalidParams or DimensionMismatch.
  void validate() const;
};

enum class EmissionNoise { kPointMass, kMultinomial, kGaussian };

std::string noise_name(EmissionNoise n);
EmissionNoise parse_noise(const std::string& name);

/// Time-homogeneous HMM with column-stochastic transition T(i, j) = Pr[h' = i | h = j].
struct HmmParams {
  Vector initial;
  Matrix transition;
  Matrix observation;  // d x k, column j is E[x | h = j]
  EmissionNoise noise = EmissionNoise::kMultinomial;
  std::vector<Matrix> state_covariances;  // gaussian noise only, one per state

  Index k() const { return initial.size(); }
  Index dim() const { return observation.rows(); }
  void validate() const;
};

}  // namespace mvmom
