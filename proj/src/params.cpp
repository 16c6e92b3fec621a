#include <mvmom/params.hpp>

#include <mvmom/error.hpp>

#include <algorithm>
#include <cmath>

namespace mvmom {

std::string family_name(Family f) {
  switch (f) {
    case Family::kTopic: return "topic";
    case Family::kGaussian: return "gaussian";
    case Family::kPointMass: return "point-mass";
  }
  return "unknown";
}

Family parse_family(const std::string& name) {
  if (name == "topic" || name == "topic-multinomial") return Family::kTopic;
  if (name == "gaussian") return Family::kGaussian;
  if (name == "point-mass") return Family::kPointMass;
  fail(ErrorCode::kInvalidParams, "unknown model family '" + name + "'");
}

std::string noise_name(EmissionNoise n) {
  switch (n) {
    case EmissionNoise::kPointMass: return "point-mass";
    case EmissionNoise::kMultinomial: return "multinomial";
    case EmissionNoise::kGaussian: return "gaussian";
  }
  return "unknown";
}

EmissionNoise parse_noise(const std::string& name) {
  if (name == "point-mass") return EmissionNoise::kPointMass;
  if (name == "multinomial") return EmissionNoise::kMultinomial;
  if (name == "gaussian") return EmissionNoise::kGaussian;
  fail(ErrorCode::kInvalidParams, "unknown emission noise '" + name + "'");
}

namespace {

void check_simplex(const Vector& v, const std::string& what, double tol) {
  if ((v.array() < -tol).any()) fail(ErrorCode::kInvalidParams, what + " has negative entries");
  if (std::abs(v.sum() - 1.0) > tol) fail(ErrorCode::kInvalidParams, what + " does not sum to 1");
}

}  // namespace

Vector MultiViewMixtureParams::rank_report() const {
  Vector out(num_views());
  for (Index v = 0; v < num_views(); ++v) {
    const Matrix& m = means[static_cast<std::size_t>(v)];
    if (m.rows() < k()) {
      out(v) = 0.0;
      continue;
    }
    Eigen::JacobiSVD<Matrix> svd(m);
    out(v) = svd.singularValues()(k() - 1);
  }
  return out;
}

void MultiViewMixtureParams::validate() const {
  if (k() < 1) fail(ErrorCode::kInvalidParams, "at least one mixture component required");
  if (means.empty()) fail(ErrorCode::kInvalidParams, "at least one view required");
  check_simplex(weights, "weights", 1e-12);
  for (std::size_t v = 0; v < means.size(); ++v) {
    const std::string tag = "view " + std::to_string(v + 1);
    if (means[v].cols() != k()) fail(ErrorCode::kDimensionMismatch, tag + " mean matrix needs k columns");
    if (!means[v].allFinite()) fail(ErrorCode::kInvalidParams, tag + " mean matrix is not finite");
    if (family == Family::kTopic) {
      for (Index j = 0; j < k(); ++j) {
        check_simplex(means[v].col(j), tag + " component " + std::to_string(j + 1), 1e-9);
      }
    }
  }
  if (family == Family::kTopic && has_covariances()) {
    fail(ErrorCode::kInvalidParams, "topic models carry no covariances");
  }
  if (has_covariances()) {
    if (covariances.size() != means.size()) fail(ErrorCode::kDimensionMismatch, "one covariance list per view");
    for (std::size_t v = 0; v < means.size(); ++v) {
      if (static_cast<Index>(covariances[v].size()) != k()) {
        fail(ErrorCode::kDimensionMismatch, "view " + std::to_string(v + 1) + " needs k covariances");
      }
      for (std::size_t j = 0; j < covariances[v].size(); ++j) {
        const Matrix& c = covariances[v][j];
        const std::string tag = "covariance of view " + std::to_string(v + 1) + " component " + std::to_string(j + 1);
        if (c.rows() != means[v].rows() || c.cols() != means[v].rows()) {
          fail(ErrorCode::kDimensionMismatch, tag + " has the wrong shape");
        }
        if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, c.cwiseAbs().maxCoeff())) {
          fail(ErrorCode::kInvalidParams, tag + " is not symmetric");
        }
      }
    }
  }
}

void HmmParams::validate() const {
  if (k() < 1) fail(ErrorCode::kInvalidParams, "at least one hidden state required");
  check_simplex(initial, "initial distribution", 1e-12);
  if (transition.rows() != k() || transition.cols() != k()) {
    fail(ErrorCode::kDimensionMismatch, "transition matrix must be k x k");
  }
  for (Index j = 0; j < k(); ++j) check_simplex(transition.col(j), "transition column " + std::to_string(j + 1), 1e-12);
  if (observation.cols() != k()) fail(ErrorCode::kDimensionMismatch, "observation matrix needs k columns");
  if (noise == EmissionNoise::kMultinomial) {
    for (Index j = 0; j < k(); ++j) check_simplex(observation.col(j), "observation column " + std::to_string(j + 1), 1e-9);
  }
  if (noise == EmissionNoise::kGaussian) {
    if (static_cast<Index>(state_covariances.size()) != k()) {
      fail(ErrorCode::kDimensionMismatch, "gaussian emissions need one covariance per state");
    }
    for (const auto& c : state_covariances) {
      if (c.rows() != dim() || c.cols() != dim()) fail(ErrorCode::kDimensionMismatch, "emission covariance shape");
    }
  }
}

}  // namespace mvmom
