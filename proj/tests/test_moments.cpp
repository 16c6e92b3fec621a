#include "support.hpp"

#include <mvmom/models.hpp>
#include <mvmom/moments.hpp>

#include <numeric>
#include <set>

using namespace mvmom;
using testing::mat;
using testing::max_abs_diff;
using testing::vec;

namespace {


SampleBatch single(const Vector& x1, const Vector& x2, const Vector& x3) {
  return SampleBatch::dense({x1.transpose(), x2.transpose(), x3.transpose()});
}

MultiViewMixtureParams two_topic_params(double p) {
  MultiViewMixtureParams m;
  m.family = Family::kTopic;
  m.weights = vec({0.5, 0.5});
  const Matrix mm = mat({{p, 1 - p}, {1 - p, p}});
  m.means = {mm, mm, mm};
  return m;
}

SampleBatch reference_documents(Index n, std::uint64_t seed) {
  Rng rng(seed);
  return models::sample_topic_documents(models::topic_reference_model(), n, 3, rng);
}

SampleBatch random_dense(Index n, Index d, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g;
  std::vector<RowMatrix> views;
  for (int v = 0; v < 3; ++v) {
    RowMatrix x(n, d);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
    views.push_back(x);
  }
  return SampleBatch::dense(views);
}

}  // namespace

TEST_CASE("empirical_pairs small cases") {
  const auto b = single(vec({1, 0}), vec({0, 1}), vec({1, 0}));
  CHECK(max_abs_diff(empirical_pairs(b, 0, 1), mat({{0, 1}, {0, 0}})) == 0.0);

  const Vector v = vec({0.5, -2.0, 3.25});
  RowMatrix same(7, 3);
  for (Index i = 0; i < 7; ++i) same.row(i) = v.transpose();
  const auto c = SampleBatch::dense({same, same, same});
  CHECK(max_abs_diff(empirical_pairs(c, 0, 1), v * v.transpose()) == 0.0);

  CHECK(testing::error_of([&] { empirical_pairs(b, 0, 0); }) == ErrorCode::kInvalidArgument);
  const auto empty = SampleBatch::one_hot({{}, {}, {}}, {2, 2, 2});
  CHECK(testing::error_of([&] { empirical_pairs(empty, 0, 1); }) == ErrorCode::kEmptyBatch);
  CHECK(testing::error_of([&] { empirical_triples_contraction(empty, vec({1, 0})); }) == ErrorCode::kEmptyBatch);
  CHECK(testing::error_of([&] { empirical_fourth_contraction(empty, vec({1, 0}), vec({1, 0})); }) ==
        ErrorCode::kEmptyBatch);
}

TEST_CASE("empirical triples and fourth contractions small cases") {
  const auto b = single(vec({1, 0}), vec({1, 0}), vec({0, 1}));
  CHECK(max_abs_diff(empirical_triples_contraction(b, vec({0, 1})), mat({{1, 0}, {0, 0}})) == 0.0);
  const auto d = random_dense(50, 3, 4);
  CHECK(empirical_triples_contraction(d, Vector::Zero(3)).cwiseAbs().maxCoeff() == 0.0);

  const auto e = single(vec({1, 0}), vec({1, 0}), vec({1, 0}));
  CHECK(max_abs_diff(empirical_fourth_contraction(e, vec({1, 0}), vec({1, 0})), mat({{1, 0}, {0, 0}})) == 0.0);
  CHECK(empirical_fourth_contraction(d, Vector::Zero(3), vec({1, 2, 3})).cwiseAbs().maxCoeff() == 0.0);
  const Vector phi = vec({0.3, -1, 2}), psi = vec({1, 0.5, -0.25});
  CHECK(max_abs_diff(empirical_fourth_contraction(d, phi, psi), empirical_fourth_contraction(d, psi, phi)) == 0.0);
}

TEST_CASE("triples contraction is linear in the direction") {
  const auto d = random_dense(3000, 4, 8);
  const Vector a = vec({1, -2, 0.5, 3}), b = vec({0.25, 4, -1, 2});
  const Matrix lhs = empirical_triples_contraction(d, 2.5 * a - 0.75 * b);
  const Matrix rhs = 2.5 * empirical_triples_contraction(d, a) - 0.75 * empirical_triples_contraction(d, b);
  CHECK(max_abs_diff(lhs, rhs) < 1e-10);
  const auto t = reference_documents(5000, 2);
  const Matrix lt = empirical_triples_contraction(t, 2.0 * vec({1, 0, 0}) + vec({0, 0, 3}));
  const Matrix rt = 2.0 * empirical_triples_contraction(t, vec({1, 0, 0})) +
                    3.0 * empirical_triples_contraction(t, vec({0, 0, 1}));
  CHECK(max_abs_diff(lt, rt) < 1e-10);
}

TEST_CASE("population moments of the reference topic model") {
  const auto p = models::topic_reference_model();
  const Matrix pairs = mat({{0.185, 0.10, 0.065}, {0.10, 0.065, 0.085}, {0.065, 0.085, 0.25}});
  const Matrix triples_e1 = mat({{0.1085, 0.055, 0.0215}, {0.055, 0.029, 0.016}, {0.0215, 0.016, 0.0275}});
  // Hand oracle: sum_t w_t mu_t mu_t^T and sum_t w_t mu_t[0] mu_t mu_t^T.
  const Vector m1 = vec({0.6, 0.3, 0.1}), m2 = vec({0.1, 0.2, 0.7});
  const Matrix hand_pairs = 0.5 * (m1 * m1.transpose() + m2 * m2.transpose());
  const Matrix hand_triples = 0.5 * (0.6 * m1 * m1.transpose() + 0.1 * m2 * m2.transpose());
  CHECK(max_abs_diff(hand_pairs, pairs) < 1e-15);
  CHECK(max_abs_diff(hand_triples, triples_e1) < 1e-15);
  CHECK(max_abs_diff(population_pairs(p, 0, 1), pairs) < 1e-15);
  CHECK(max_abs_diff(population_triples(p, 0, 1, 2, vec({1, 0, 0})), triples_e1) < 1e-15);

  const MomentSet set = population_moments(p, coordinate_directions(3));
  CHECK(set.sample_count == 0);
  CHECK(max_abs_diff(set.pairs_12, set.pairs_12.transpose()) == 0.0);
  CHECK(set.pairs_12.minCoeff() >= 0.0);
  CHECK(std::abs(set.pairs_12.sum() - 1.0) < 1e-12);
  CHECK(max_abs_diff(set.mean_view3, vec({0.35, 0.25, 0.40})) < 1e-15);
  Matrix marginal = Matrix::Zero(3, 3);
  for (const auto& c : set.triples_contractions) marginal += c.contracted;
  CHECK(max_abs_diff(marginal, set.pairs_12) < 1e-12);
}

TEST_CASE("population moments of the two-topic model with equal pairs") {
  const auto p = two_topic_params(0.25);
  const MomentSet set = population_moments(p, {vec({1, 0})});
  CHECK(max_abs_diff(set.pairs_12, mat({{0.3125, 0.1875}, {0.1875, 0.3125}})) < 1e-15);
  const Matrix t = set.triples_contractions.front().contracted;
  CHECK(max_abs_diff(t, mat({{0.21875, 0.09375}, {0.09375, 0.09375}})) < 1e-15);
  CHECK(max_abs_diff(t, mat({{0.2188, 0.0938}, {0.0938, 0.0938}})) < 5e-5);
}

TEST_CASE("population moments for a single component") {
  MultiViewMixtureParams p;
  p.weights = vec({1.0});
  p.means = {Matrix(vec({1, 2, 3})), Matrix(vec({-1, 0.5, 2})), Matrix(vec({0.25, 1, 1}))};
  const MomentSet set = population_moments(p, {vec({1, 1, 1})});
  CHECK(max_abs_diff(set.pairs_12, p.means[0] * p.means[1].transpose()) == 0.0);
  CHECK(max_abs_diff(set.triples_contractions.front().contracted, 2.25 * p.means[0] * p.means[1].transpose()) < 1e-14);
}

TEST_CASE("population fourth moments need covariances for gaussian views") {
  MultiViewMixtureParams p;
  p.weights = vec({0.4, 0.6});
  const Matrix m = mat({{1, -1}, {0.5, 2}});
  p.means = {m, m, m};
  CHECK(testing::error_of([&] { population_fourth(p, 0, 1, 2, vec({1, 0}), vec({0, 1})); }) ==
        ErrorCode::kMissingFourthMoments);
  p.covariances.assign(3, {0.1 * Matrix::Identity(2, 2), 0.2 * Matrix::Identity(2, 2)});
  const Vector phi = vec({1, 2}), psi = vec({-1, 0.5});
  Matrix want = Matrix::Zero(2, 2);
  for (Index t = 0; t < 2; ++t) {
    const double s = phi.dot(m.col(t)) * psi.dot(m.col(t)) + phi.dot(p.covariances[2][t] * psi);
    want += p.weights(t) * s * m.col(t) * m.col(t).transpose();
  }
  CHECK(max_abs_diff(population_fourth(p, 0, 1, 2, phi, psi), want) < 1e-14);
}

TEST_CASE("empirical moments converge to the reference topic oracle") {
  const auto p = models::topic_reference_model();
  const Matrix pairs = population_pairs(p, 0, 1);
  const Matrix triples = population_triples(p, 0, 1, 2, vec({1, 0, 0}));
  double previous = 1.0;
  for (Index n : {1000, 10000, 100000, 1000000}) {
    const auto b = reference_documents(n, 77);
    const Matrix e = empirical_pairs(b, 0, 1);
    CHECK(std::abs(e.sum() - 1.0) == 0.0);
    CHECK(e.minCoeff() >= 0.0);
    const double err = max_abs_diff(e, pairs);
    CHECK(err < previous);
    previous = err;
    if (n == 1000000) {
      CHECK(err < 0.005);
      CHECK(max_abs_diff(empirical_triples_contraction(b, vec({1, 0, 0})), triples) < 0.005);
    }
  }
}

TEST_CASE("accumulation does not depend on thread count or row order") {
  const auto d = random_dense(20000, 4, 21);
  const Vector eta = vec({0.5, -1, 2, 0.25});
  const Matrix p1 = empirical_pairs(d, 0, 2, {1});
  const Matrix t1 = empirical_triples_contraction(d, eta, 0, 1, 2, {1});
  for (int threads : {2, 3, 4, 8}) {
    CHECK(max_abs_diff(empirical_pairs(d, 0, 2, {threads}), p1) == 0.0);
    CHECK(max_abs_diff(empirical_triples_contraction(d, eta, 0, 1, 2, {threads}), t1) == 0.0);
  }
  std::vector<Index> perm(20000);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(4);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto shuffled = d.subset(perm);
  CHECK(max_abs_diff(empirical_pairs(shuffled, 0, 2), p1) < 1e-12);
  CHECK(max_abs_diff(empirical_triples_contraction(shuffled, eta), t1) < 1e-12);

  const auto t = reference_documents(30000, 5);
  CHECK(max_abs_diff(empirical_pairs(t, 1, 2, {4}), empirical_pairs(t, 1, 2, {1})) == 0.0);
}

TEST_CASE("split_batch partitions rows") {
  const auto b = random_dense(100, 2, 1);
  Rng rng(3);
  const auto [first, second] = split_batch(b, 0.5, rng);
  CHECK(first.size() == 50);
  CHECK(second.size() == 50);
  std::multiset<double> all, parts;
  for (Index i = 0; i < 100; ++i) all.insert(b.view(0)(i, 0));
  for (Index i = 0; i < 50; ++i) {
    parts.insert(first.view(0)(i, 0));
    parts.insert(second.view(0)(i, 0));
  }
  CHECK(all == parts);

  Rng again(3);
  const auto [first2, second2] = split_batch(b, 0.5, again);
  CHECK(first2 == first);
  CHECK(second2 == second);

  const auto two = random_dense(2, 2, 9);
  Rng r2(0);
  const auto [a, c] = split_batch(two, 0.5, r2);
  CHECK(a.size() == 1);
  CHECK(c.size() == 1);
  CHECK(a.view(0)(0, 0) != c.view(0)(0, 0));

  const auto one = random_dense(1, 2, 9);
  CHECK(testing::error_of([&] { split_batch(one, 0.5, r2); }) == ErrorCode::kEmptyBatch);
}

TEST_CASE("EmpiricalMoments reads the direction basis from a separate half") {
  const auto b = reference_documents(2000, 12);
  EmpiricalMoments split(b, {true, 0.5, 7});
  EmpiricalMoments whole(b, {false, 0.5, 7});
  CHECK(max_abs_diff(whole.pairs(0, 1), empirical_pairs(b, 0, 1)) == 0.0);
  CHECK(max_abs_diff(whole.basis_pairs(0, 2), empirical_pairs(b, 0, 2)) == 0.0);
  CHECK(max_abs_diff(split.basis_pairs(0, 2), split.pairs(0, 2)) > 0.0);
  CHECK(max_abs_diff(split.mean(2), empirical_mean(b, 2)) == 0.0);
  CHECK(split.sample_count() == 2000);
}

TEST_CASE("TableMoments forms contractions by linearity") {
  const auto p = models::topic_reference_model();
  const MomentSet set = population_moments(p, coordinate_directions(3));
  TableMoments table(set);
  const Vector eta = vec({0.3, -1.5, 2});
  CHECK(max_abs_diff(table.triples(0, 1, 2, eta), population_triples(p, 0, 1, 2, eta)) < 1e-14);
  CHECK(max_abs_diff(table.pairs(2, 0), population_pairs(p, 2, 0)) < 1e-15);
  CHECK(testing::error_of([&] { table.triples(1, 0, 2, eta); }) == ErrorCode::kInvalidArgument);

  const MomentSet partial = population_moments(p, {vec({1, 0, 0})});
  TableMoments narrow(partial);
  CHECK(testing::error_of([&] { narrow.triples(0, 1, 2, vec({0, 1, 0})); }) == ErrorCode::kInvalidArgument);
  CHECK(testing::error_of([&] { narrow.fourth(0, 1, 2, vec({0, 1, 0}), vec({1, 0, 0})); }) ==
        ErrorCode::kMissingFourthMoments);

  MultiViewMixtureParams g;
  g.weights = vec({0.3, 0.7});
  const Matrix m = mat({{1, -1}, {0.5, 2}});
  g.means = {m, m, m};
  g.covariances.assign(3, {0.1 * Matrix::Identity(2, 2), mat({{0.2, 0.05}, {0.05, 0.3}})});
  TableMoments fourth(population_moments(g, coordinate_directions(2), coordinate_pairs(2)));
  const Vector phi = vec({1, 2}), psi = vec({-1, 0.5});
  CHECK(max_abs_diff(fourth.fourth(0, 1, 2, phi, psi), population_fourth(g, 0, 1, 2, phi, psi)) < 1e-13);
}
