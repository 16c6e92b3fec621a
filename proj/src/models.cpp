#include <mvmom/models.hpp>

#include <mvmom/error.hpp>
#include <mvmom/linalg.hpp>

#include <algorithm>
#include <cmath>
#include <string>

namespace mvmom::models {

namespace {

// Inverse-CDF sampler over a fixed probability vector.
class Categorical {
 public:
  explicit Categorical(const Vector& p) : cdf_(static_cast<std::size_t>(p.size())) {
    double acc = 0.0;
    for (Index i = 0; i < p.size(); ++i) {
      acc += std::max(p(i), 0.0);
      cdf_[static_cast<std::size_t>(i)] = acc;
    }
  }
  std::int32_t operator()(Rng& rng) const {
    std::uniform_real_distribution<double> u(0.0, cdf_.back());
    const double x = u(rng);
    // upper_bound never lands on a zero-probability cell.
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), x);
    if (it == cdf_.end()) --it;
    return static_cast<std::int32_t>(it - cdf_.begin());
  }

 private:
  std::vector<double> cdf_;
};

// Factor f with f f^T = cov; throws if cov is not PSD.
Matrix psd_factor(const Matrix& cov, const std::string& tag) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (cov + cov.transpose()));
  const Vector& ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < -1e-10 * scale) {
    fail(ErrorCode::kInvalidParams, tag + " is not positive semidefinite (eigenvalue " + std::to_string(ev.minCoeff()) + ")");
  }
  return es.eigenvectors() * ev.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

Vector dirichlet(Index n, double alpha, Rng& rng) {
  std::gamma_distribution<double> g(alpha, 1.0);
  Vector v(n);
  do {
    for (Index i = 0; i < n; ++i) v(i) = g(rng);
  } while (v.sum() <= 0.0);
  return v / v.sum();
}

Matrix gaussian_matrix(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

Vector emission_moments(const HmmParams& p, Index state, Matrix& second) {
  const Vector o = p.observation.col(state);
  switch (p.noise) {
    case EmissionNoise::kPointMass: second = o * o.transpose(); break;
    case EmissionNoise::kMultinomial: second = o.asDiagonal(); break;
    case EmissionNoise::kGaussian:
      second = o * o.transpose() + p.state_covariances[static_cast<std::size_t>(state)];
      break;
  }
  return o;
}

// Conditional covariance of a view whose emitting state is drawn from `mix`.
Matrix mixture_covariance(const HmmParams& p, const Vector& mix) {
  const Index d = p.dim();
  Matrix second_total = Matrix::Zero(d, d);
  Vector mean = Vector::Zero(d);
  for (Index i = 0; i < p.k(); ++i) {
    Matrix second;
    mean += mix(i) * emission_moments(p, i, second);
    second_total += mix(i) * second;
  }
  return second_total - mean * mean.transpose();
}

}  // namespace

SampleBatch sample_topic_documents(const MultiViewMixtureParams& params, Index n_docs, Index words_per_doc, Rng& rng) {
  params.validate();
  if (params.family != Family::kTopic) fail(ErrorCode::kInvalidParams, "topic sampler needs a topic-multinomial model");
  if (words_per_doc < 3) fail(ErrorCode::kInvalidArgument, "documents need at least three words");
  if (n_docs < 0) fail(ErrorCode::kInvalidArgument, "negative document count");
  const Index k = params.k();
  Categorical topic(params.weights);
  // View v uses means[v] when present, otherwise the first view's matrix.
  std::vector<std::vector<Categorical>> words(static_cast<std::size_t>(words_per_doc));
  std::vector<Index> dims;
  for (Index w = 0; w < words_per_doc; ++w) {
    const Matrix& m = params.means[static_cast<std::size_t>(std::min(w, params.num_views() - 1))];
    dims.push_back(m.rows());
    for (Index j = 0; j < k; ++j) words[static_cast<std::size_t>(w)].emplace_back(m.col(j));
  }
  std::vector<std::vector<std::int32_t>> tokens(static_cast<std::size_t>(words_per_doc),
                                                std::vector<std::int32_t>(static_cast<std::size_t>(n_docs)));
  for (Index n = 0; n < n_docs; ++n) {
    const auto h = static_cast<std::size_t>(topic(rng));
    for (std::size_t w = 0; w < tokens.size(); ++w) tokens[w][static_cast<std::size_t>(n)] = words[w][h](rng);
  }
  return SampleBatch::one_hot(std::move(tokens), std::move(dims));
}

SampleBatch sample_multiview_gaussian(const MultiViewMixtureParams& params, Index n, Rng& rng) {
  params.validate();
  if (params.family == Family::kTopic) fail(ErrorCode::kInvalidParams, "gaussian sampler cannot draw topic models");
  const Index k = params.k();
  const Index views = params.num_views();
  std::vector<std::vector<Matrix>> factors(static_cast<std::size_t>(views));
  const bool noisy = params.family == Family::kGaussian && params.has_covariances();
  if (params.family == Family::kGaussian && !params.has_covariances()) {
    fail(ErrorCode::kInvalidParams, "gaussian model needs covariances");
  }
  if (noisy) {
    for (Index v = 0; v < views; ++v) {
      for (Index j = 0; j < k; ++j) {
        factors[static_cast<std::size_t>(v)].push_back(
            psd_factor(params.covariances[static_cast<std::size_t>(v)][static_cast<std::size_t>(j)],
                       "covariance of view " + std::to_string(v + 1) + " component " + std::to_string(j + 1)));
      }
    }
  }
  Categorical component(params.weights);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<RowMatrix> out;
  for (Index v = 0; v < views; ++v) out.emplace_back(n, params.dim(v));
  Vector z;
  for (Index r = 0; r < n; ++r) {
    const Index h = component(rng);
    for (Index v = 0; v < views; ++v) {
      const auto vi = static_cast<std::size_t>(v);
      if (noisy) {
        z.resize(params.dim(v));
        for (Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
        out[vi].row(r) = (params.means[vi].col(h) + factors[vi][static_cast<std::size_t>(h)] * z).transpose();
      } else {
        out[vi].row(r) = params.means[vi].col(h).transpose();
      }
    }
  }
  return SampleBatch::dense(std::move(out));
}

SampleBatch sample_mixture(const MultiViewMixtureParams& params, Index n, Rng& rng) {
  if (params.family == Family::kTopic) return sample_topic_documents(params, n, std::max<Index>(3, params.num_views()), rng);
  return sample_multiview_gaussian(params, n, rng);
}

MultiViewMixtureParams hmm_to_three_view(const HmmParams& p) {
  p.validate();
  const Index k = p.k();
  const Vector w = p.transition * p.initial;
  for (Index j = 0; j < k; ++j) {
    if (w(j) <= 1e-12) {
      fail(ErrorCode::kDegenerateChain, "state " + std::to_string(j + 1) + " has zero probability at the middle step");
    }
  }
  MultiViewMixtureParams out;
  out.weights = w;
  // Pr[h1 = i | h2 = j] = pi_i T(j, i) / (T pi)_j
  const Matrix back = p.initial.asDiagonal() * p.transition.transpose() * w.cwiseInverse().asDiagonal();
  out.means = {p.observation * back, p.observation, p.observation * p.transition};
  if (p.noise == EmissionNoise::kMultinomial) {
    out.family = Family::kTopic;
  } else {
    out.family = Family::kGaussian;
    out.covariances.resize(3);
    for (Index j = 0; j < k; ++j) {
      out.covariances[0].push_back(mixture_covariance(p, back.col(j)));
      out.covariances[1].push_back(mixture_covariance(p, Vector::Unit(k, j)));
      out.covariances[2].push_back(mixture_covariance(p, p.transition.col(j)));
    }
  }
  return out;
}

SampleBatch sample_hmm_triples(const HmmParams& p, Index n, Rng& rng) {
  p.validate();
  const Index k = p.k();
  Categorical start(p.initial);
  std::vector<Categorical> step;
  for (Index j = 0; j < k; ++j) step.emplace_back(p.transition.col(j));

  if (p.noise == EmissionNoise::kMultinomial) {
    std::vector<Categorical> emit;
    for (Index j = 0; j < k; ++j) emit.emplace_back(p.observation.col(j));
    std::vector<std::vector<std::int32_t>> tokens(3, std::vector<std::int32_t>(static_cast<std::size_t>(n)));
    for (Index r = 0; r < n; ++r) {
      auto h = start(rng);
      for (std::size_t t = 0; t < 3; ++t) {
        if (t > 0) h = step[static_cast<std::size_t>(h)](rng);
        tokens[t][static_cast<std::size_t>(r)] = emit[static_cast<std::size_t>(h)](rng);
      }
    }
    return SampleBatch::one_hot(std::move(tokens), {p.dim(), p.dim(), p.dim()});
  }

  std::vector<Matrix> factors;
  if (p.noise == EmissionNoise::kGaussian) {
    for (Index j = 0; j < k; ++j) {
      factors.push_back(psd_factor(p.state_covariances[static_cast<std::size_t>(j)],
                                   "emission covariance of state " + std::to_string(j + 1)));
    }
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<RowMatrix> views(3, RowMatrix(n, p.dim()));
  Vector z(p.dim());
  for (Index r = 0; r < n; ++r) {
    auto h = start(rng);
    for (std::size_t t = 0; t < 3; ++t) {
      if (t > 0) h = step[static_cast<std::size_t>(h)](rng);
      if (p.noise == EmissionNoise::kGaussian) {
        for (Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
        views[t].row(r) = (p.observation.col(h) + factors[static_cast<std::size_t>(h)] * z).transpose();
      } else {
        views[t].row(r) = p.observation.col(h).transpose();
      }
    }
  }
  return SampleBatch::dense(std::move(views));
}

double incoherence(const Matrix& m) {
  const Index n = m.rows();
  const Index k = m.cols();
  const auto basis = linalg::truncated_svd(m, k);
  return static_cast<double>(n) / static_cast<double>(k) * linalg::leverage_scores(basis).maxCoeff();
}

PartitionResult random_partition(const Matrix& m, Index views, double delta, Rng& rng) {
  if (views < 1) fail(ErrorCode::kInvalidArgument, "need at least one view");
  if (!(delta > 0.0 && delta < 1.0)) fail(ErrorCode::kInvalidArgument, "delta must lie in (0, 1)");
  const Index n = m.rows();
  const Index k = m.cols();
  PartitionResult out;
  out.plan.incoherence = incoherence(m);
  const double kl = static_cast<double>(k * views);
  out.plan.bound = 9.0 / 32.0 * static_cast<double>(n) / (kl * std::log(kl / delta));
  out.plan.bound_ok = out.plan.incoherence <= out.plan.bound;

  std::uniform_int_distribution<Index> pick(0, views - 1);
  out.plan.assignment.resize(static_cast<std::size_t>(n));
  std::vector<std::vector<Index>> rows(static_cast<std::size_t>(views));
  for (Index i = 0; i < n; ++i) {
    const Index v = pick(rng);
    out.plan.assignment[static_cast<std::size_t>(i)] = v;
    rows[static_cast<std::size_t>(v)].push_back(i);
  }
  for (const auto& r : rows) {
    Matrix block(static_cast<Index>(r.size()), k);
    for (std::size_t i = 0; i < r.size(); ++i) block.row(static_cast<Index>(i)) = m.row(r[i]);
    out.blocks.push_back(std::move(block));
  }
  return out;
}

MultiViewMixtureParams random_mixture_model(const RandomModelOptions& opts, Rng& rng) {
  if (opts.k < 1 || opts.d < opts.k || opts.views < 1) {
    fail(ErrorCode::kInvalidArgument, "random models need 1 <= k <= d and at least one view");
  }
  for (int attempt = 0; attempt < opts.max_tries; ++attempt) {
    MultiViewMixtureParams p;
    p.family = opts.family;
    p.weights = dirichlet(opts.k, 2.0, rng);
    if (p.weights.minCoeff() < 0.2 / static_cast<double>(opts.k)) continue;
    if (opts.family == Family::kTopic) {
      Matrix m(opts.d, opts.k);
      for (Index j = 0; j < opts.k; ++j) m.col(j) = dirichlet(opts.d, 0.5, rng);
      p.means.assign(static_cast<std::size_t>(opts.views), m);
    } else {
      for (Index v = 0; v < opts.views; ++v) p.means.push_back(gaussian_matrix(opts.d, opts.k, rng));
    }
    if (opts.family == Family::kGaussian) {
      p.covariances.resize(static_cast<std::size_t>(opts.views));
      for (Index v = 0; v < opts.views; ++v) {
        for (Index j = 0; j < opts.k; ++j) {
          const Matrix a = gaussian_matrix(opts.d, opts.d, rng);
          p.covariances[static_cast<std::size_t>(v)].push_back(0.1 * a * a.transpose() / static_cast<double>(opts.d) +
                                                               0.05 * Matrix::Identity(opts.d, opts.d));
        }
      }
    }
    if (p.rank_report().minCoeff() >= opts.min_sigma) return p;
  }
  fail(ErrorCode::kInvalidParams, "could not draw a model meeting the rank screen");
}

HmmParams random_hmm(Index k, Index d, EmissionNoise noise, double min_sigma, Rng& rng, int max_tries) {
  if (k < 1 || d < k) fail(ErrorCode::kInvalidArgument, "random HMMs need 1 <= k <= d");
  for (int attempt = 0; attempt < max_tries; ++attempt) {
    HmmParams p;
    p.noise = noise;
    p.initial = dirichlet(k, 2.0, rng);
    p.transition.resize(k, k);
    for (Index j = 0; j < k; ++j) p.transition.col(j) = 0.5 * Vector::Unit(k, j) + 0.5 * dirichlet(k, 1.0, rng);
    if (noise == EmissionNoise::kMultinomial) {
      p.observation.resize(d, k);
      for (Index j = 0; j < k; ++j) p.observation.col(j) = dirichlet(d, 0.5, rng);
    } else {
      p.observation = gaussian_matrix(d, k, rng);
    }
    if (noise == EmissionNoise::kGaussian) {
      for (Index j = 0; j < k; ++j) {
        const Matrix a = gaussian_matrix(d, d, rng);
        p.state_covariances.push_back(0.1 * a * a.transpose() / static_cast<double>(d) + 0.05 * Matrix::Identity(d, d));
      }
    }
    const Vector w = p.transition * p.initial;
    if (w.minCoeff() < 0.2 / static_cast<double>(k)) continue;
    const auto three = hmm_to_three_view(p);
    Eigen::JacobiSVD<Matrix> svd_t(p.transition);
    if (svd_t.singularValues()(k - 1) < min_sigma) continue;
    if (three.rank_report().minCoeff() >= min_sigma) return p;
  }
  fail(ErrorCode::kInvalidParams, "could not draw an HMM meeting the rank screen");
}

MultiViewMixtureParams topic_reference_model(Index views) {
  MultiViewMixtureParams p;
  p.family = Family::kTopic;
  p.weights = Vector::Constant(2, 0.5);
  Matrix m(3, 2);
  m << 0.6, 0.1,
       0.3, 0.2,
       0.1, 0.7;
  p.means.assign(static_cast<std::size_t>(views), m);
  return p;
}

HmmParams reference_hmm() {
  HmmParams p;
  p.noise = EmissionNoise::kMultinomial;
  p.initial = Vector(2);
  p.initial << 0.6, 0.4;
  p.transition.resize(2, 2);
  p.transition << 0.7, 0.2,
                  0.3, 0.8;
  p.observation.resize(2, 2);
  p.observation << 0.9, 0.2,
                   0.1, 0.8;
  return p;
}

}  // namespace mvmom::models
