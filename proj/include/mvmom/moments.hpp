#pragma once

#include <mvmom/params.hpp>
#include <mvmom/types.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

namespace mvmom {

/// N observations of l views. Dense views are stored as N x d row-major
/// matrices; one-hot views are stored as token ids in [0, d).
class SampleBatch {
 public:
  SampleBatch() = default;

  static SampleBatch dense(std::vector<RowMatrix> views);
  static SampleBatch one_hot(std::vector<std::vector<std::int32_t>> tokens, std::vector<Index> dims);

  bool is_one_hot() const { return one_hot_; }
  Index size() const { return rows_; }
  Index num_views() const { return static_cast<Index>(dims_.size()); }
  Index dim(Index view) const { return dims_.at(static_cast<std::size_t>(view)); }

  /// Dense storage of a view; only valid for dense batches.
  const RowMatrix& view(Index v) const;
  /// Token ids of a view; only valid for one-hot batches.
  const std::vector<std::int32_t>& tokens(Index v) const;
  /// Materializes a view as an N x d matrix for either storage.
  RowMatrix dense_view(Index v) const;

  SampleBatch subset(const std::vector<Index>& rows) const;
  /// Keeps only the listed views, in the listed order.
  SampleBatch select_views(const std::vector<Index>& views) const;

  bool operator==(const SampleBatch& other) const;

 private:
  bool one_hot_ = false;
  Index rows_ = 0;
  std::vector<Index> dims_;
  std::vector<RowMatrix> dense_;
  std::vector<std::vector<std::int32_t>> tokens_;
};

/// Materialized moments for the (1, 2, 3) view triple. Third- and fourth-order
/// moments are only kept as contractions along explicit directions.
struct MomentSet {
  struct Contraction {
    Vector direction;
    Matrix contracted;
  };
  struct FourthContraction {
    Vector phi;
    Vector psi;
    Matrix contracted;
  };

  Matrix pairs_12;
  Matrix pairs_13;
  std::vector<Contraction> triples_contractions;
  std::vector<FourthContraction> fourth_contractions;
  Vector mean_view3;
  std::size_t sample_count = 0;  // 0 for population moments
};

/// Options for the row accumulation. Shards split the pairwise reduction tree
/// at its top levels, so results do not depend on the shard count.
struct AccumulateOptions {
  int threads = 1;
};

Matrix empirical_pairs(const SampleBatch& batch, Index view_a, Index view_b,
                       const AccumulateOptions& opts = {});
/// (1/N) sum_n <eta, x_c> x_a x_b^T; defaults to views (1, 2, 3).
Matrix empirical_triples_contraction(const SampleBatch& batch, const Vector& eta, Index view_a = 0,
                                     Index view_b = 1, Index view_c = 2,
                                     const AccumulateOptions& opts = {});
Matrix empirical_fourth_contraction(const SampleBatch& batch, const Vector& phi, const Vector& psi,
                                    Index view_a = 0, Index view_b = 1, Index view_c = 2,
                                    const AccumulateOptions& opts = {});
Vector empirical_mean(const SampleBatch& batch, Index view);

/// Disjoint random row partition; the first part holds round(fraction * N) rows.
std::pair<SampleBatch, SampleBatch> split_batch(const SampleBatch& batch, double fraction, Rng& rng);

// Exact population moments for arbitrary view indices (0-based).
Matrix population_pairs(const MultiViewMixtureParams& params, Index a, Index b);
Matrix population_triples(const MultiViewMixtureParams& params, Index a, Index b, Index c,
                          const Vector& eta);
/// Throws MissingFourthMoments if the second conditional moment of view c is unknown.
Matrix population_fourth(const MultiViewMixtureParams& params, Index a, Index b, Index c,
                         const Vector& phi, const Vector& psi);

MomentSet population_moments(const MultiViewMixtureParams& params, const std::vector<Vector>& directions,
                             const std::vector<std::pair<Vector, Vector>>& fourth_directions = {});
MomentSet empirical_moments(const SampleBatch& batch, const std::vector<Vector>& directions,
                            const std::vector<std::pair<Vector, Vector>>& fourth_directions = {},
                            const AccumulateOptions& opts = {});

/// Standard basis e_0..e_{d-1}.
std::vector<Vector> coordinate_directions(Index d);
/// All (e_i, e_j) with i <= j.
std::vector<std::pair<Vector, Vector>> coordinate_pairs(Index d);

/// Uniform access to second/third/fourth-order moments for estimators.
/// View indices are 0-based.
class MomentSource {
 public:
  virtual ~MomentSource() = default;
  virtual Index num_views() const = 0;
  virtual Index dim(Index view) const = 0;
  virtual std::size_t sample_count() const = 0;
  /// P_{a,b}, the matrix the observable operators are normalized by.
  virtual Matrix pairs(Index a, Index b) const = 0;
  /// P_{a,c} used only to pick the direction subspace of view c. Differs from
  /// pairs() when the sample is split.
  virtual Matrix basis_pairs(Index a, Index c) const { return pairs(a, c); }
  virtual Matrix triples(Index a, Index b, Index c, const Vector& eta) const = 0;
  virtual Matrix fourth(Index a, Index b, Index c, const Vector& phi, const Vector& psi) const = 0;
  virtual Vector mean(Index v) const = 0;
};

class PopulationMoments final : public MomentSource {
 public:
  explicit PopulationMoments(MultiViewMixtureParams params);
  Index num_views() const override { return params_.num_views(); }
  Index dim(Index view) const override { return params_.dim(view); }
  std::size_t sample_count() const override { return 0; }
  Matrix pairs(Index a, Index b) const override;
  Matrix triples(Index a, Index b, Index c, const Vector& eta) const override;
  Matrix fourth(Index a, Index b, Index c, const Vector& phi, const Vector& psi) const override;
  Vector mean(Index v) const override;

 private:
  MultiViewMixtureParams params_;
};

struct SplitOptions {
  bool enabled = true;
  double fraction = 0.5;
  std::uint64_t seed = 0;
};

/// Moments of a sample. With splitting, basis_pairs() reads the first part
/// and all operator moments read the second, so the direction subspace is
/// independent of the contractions.
class EmpiricalMoments final : public MomentSource {
 public:
  EmpiricalMoments(SampleBatch batch, const SplitOptions& split = {}, AccumulateOptions opts = {});
  Index num_views() const override { return full_->num_views(); }
  Index dim(Index view) const override { return full_->dim(view); }
  std::size_t sample_count() const override { return static_cast<std::size_t>(full_->size()); }
  Matrix pairs(Index a, Index b) const override;
  Matrix basis_pairs(Index a, Index c) const override;
  Matrix triples(Index a, Index b, Index c, const Vector& eta) const override;
  Matrix fourth(Index a, Index b, Index c, const Vector& phi, const Vector& psi) const override;
  Vector mean(Index v) const override;

 private:
  std::shared_ptr<const SampleBatch> full_;
  std::shared_ptr<const SampleBatch> basis_part_;
  std::shared_ptr<const SampleBatch> operator_part_;
  AccumulateOptions opts_;
};

/// Serves a materialized MomentSet. Contractions along new directions are
/// formed by linearity from the stored ones, so the stored directions must
/// span the requested ones. Only the view triple (1, 2, 3) is available.
class TableMoments final : public MomentSource {
 public:
  explicit TableMoments(MomentSet set);
  Index num_views() const override { return 3; }
  Index dim(Index view) const override;
  std::size_t sample_count() const override { return set_.sample_count; }
  Matrix pairs(Index a, Index b) const override;
  Matrix triples(Index a, Index b, Index c, const Vector& eta) const override;
  Matrix fourth(Index a, Index b, Index c, const Vector& phi, const Vector& psi) const override;
  Vector mean(Index v) const override;

 private:
  MomentSet set_;
  Matrix directions_;  // d x m, stored triples directions as columns
};

}  // namespace mvmom
