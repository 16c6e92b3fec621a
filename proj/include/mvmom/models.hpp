#pragma once

#include <mvmom/moments.hpp>
#include <mvmom/params.hpp>

#include <vector>

namespace mvmom::models {

/// One-hot documents; word w of each document becomes view w.
SampleBatch sample_topic_documents(const MultiViewMixtureParams& params, Index n_docs, Index words_per_doc, Rng& rng);

/// Gaussian (or point-mass) views drawn independently given the component.
/// Throws InvalidParams naming the component whose covariance is not PSD.
SampleBatch sample_multiview_gaussian(const MultiViewMixtureParams& params, Index n, Rng& rng);

/// Dispatches on the family; topic models produce one word per view.
SampleBatch sample_mixture(const MultiViewMixtureParams& params, Index n, Rng& rng);

/// Three-view parameters of (x1, x2, x3) with the latent variable identified
/// with the middle hidden state. Covariances hold the exact conditional
/// covariances of each view (absent for multinomial emissions).
MultiViewMixtureParams hmm_to_three_view(const HmmParams& params);

SampleBatch sample_hmm_triples(const HmmParams& params, Index n, Rng& rng);

struct PartitionPlan {
  std::vector<Index> assignment;  // view of each coordinate, in [0, l)
  double incoherence = 0.0;       // c_M
  double bound = 0.0;             // right-hand side of the incoherence inequality
  bool bound_ok = false;
};

struct PartitionResult {
  PartitionPlan plan;
  std::vector<Matrix> blocks;  // rows of M assigned to each view, in coordinate order
};

/// (n / k) times the largest leverage score of the left singular basis of m.
double incoherence(const Matrix& m);

/// Assigns every coordinate to one of `views` sets uniformly at random.
PartitionResult random_partition(const Matrix& m, Index views, double delta, Rng& rng);

struct RandomModelOptions {
  Index k = 2;
  Index d = 5;
  Index views = 3;
  Family family = Family::kGaussian;
  double min_sigma = 0.1;
  int max_tries = 10000;
};

/// Rejection-samples parameters until sigma_k(M_v) >= min_sigma for every view
/// and no weight falls below 0.2 / k.
MultiViewMixtureParams random_mixture_model(const RandomModelOptions& opts, Rng& rng);

/// Random HMM whose three-view reduction passes the same rank screen.
HmmParams random_hmm(Index k, Index d, EmissionNoise noise, double min_sigma, Rng& rng, int max_tries = 10000);

/// k = 2, d = 3 topic model used throughout the tests and examples.
MultiViewMixtureParams topic_reference_model(Index views = 3);

/// Two-state HMM with multinomial emissions over two symbols.
HmmParams reference_hmm();

}  // namespace mvmom::models
