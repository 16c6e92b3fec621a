// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <mvmom/cli.hpp>
#include <mvmom/estimators.hpp>
#include <mvmom/eval.hpp>
#include <mvmom/io.hpp>
#include <mvmom/linalg.hpp>
#include <mvmom/models.hpp>

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

using namespace mvmom;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

void require(Outcome& o, bool ok, const std::string& what) {
  if (!ok) {
    o.pass = false;
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += what;
  }
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

estimators::EstimatorConfig config_for(Index k, std::uint64_t seed) {
  estimators::EstimatorConfig c;
  c.k = k;
  c.seed = seed;
  return c;
}

bool close4(const Matrix& a, const Matrix& b) {
  // "to 4 decimal places": both round to the same 4-decimal value
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Index i = 0; i < a.size(); ++i) {
    if (std::abs(a.data()[i] - b.data()[i]) > 5e-5 + 1e-12) return false;
  }
  return true;
}

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index i = 0;
  for (const auto& r : rows) {
    Index j = 0;
    for (double x : r) m(i, j++) = x;
    ++i;
  }
  return m;
}

Matrix hadamard(Index n) {
  Matrix h = Matrix::Ones(1, 1);
  while (h.rows() < n) {
    Matrix next(2 * h.rows(), 2 * h.cols());
    next << h, h, h, -h;
    h = next;
  }
  return h;
}

// ---------------------------------------------------------------------------

Outcome nonidentifiability() {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  const auto r = eval::nonident_demo(0.25);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  require(o, close4(r.m_tilde, mat({{0.6614, 0.1129}, {0.3386, 0.8871}})), "M tilde");
  require(o, close4(r.w_tilde.transpose(), mat({{0.7057, 0.2943}})), "w tilde");
  require(o, close4(r.pairs, mat({{0.3125, 0.1875}, {0.1875, 0.3125}})), "pairs");
  require(o, close4(r.pairs_tilde, r.pairs), "pairs tilde");
  // 0.09375 sits on a rounding boundary; the 5e-5 band accepts both 0.0937 and 0.0938.
  require(o, close4(r.triples, mat({{0.2188, 0.0938}, {0.0938, 0.0938}})), "triples");
  require(o, close4(r.triples_tilde, mat({{0.2046, 0.1079}, {0.1079, 0.0796}})), "triples tilde");
  require(o, r.pairs_discrepancy <= 1e-10, "pairs discrepancy " + num(r.pairs_discrepancy));
  require(o, r.triples_discrepancy >= 0.01, "triples discrepancy " + num(r.triples_discrepancy));
  require(o, secs < 1.0, "runtime " + num(secs) + " s");
  if (o.pass) {
    o.detail = "pairs discrepancy " + num(r.pairs_discrepancy) + ", triples discrepancy " +
               num(r.triples_discrepancy);
  }
  return o;
}

Outcome exact_recovery() {
  Outcome o;
  Rng rng(2024);
  std::uniform_int_distribution<int> pick_k(2, 5);
  double worst_mean = 0.0, worst_weight = 0.0, worst_transition = 0.0;
  int trials = 0;
  auto check_mixture = [&](const MultiViewMixtureParams& p, std::uint64_t seed) {
    const auto est = estimators::estimate_all_views(PopulationMoments(p), config_for(p.k(), seed));
    const auto joint = eval::align_views(est.means, p.means, false);
    for (const auto& a : joint) worst_mean = std::max(worst_mean, a.max_error());
    const auto& perm = joint[0].permutation;
    for (Index j = 0; j < p.k(); ++j) {
      worst_weight = std::max(worst_weight,
                              std::abs((*est.mixing_weights)(j) - p.weights(perm[static_cast<std::size_t>(j)])));
    }
    ++trials;
  };
  for (Family family : {Family::kTopic, Family::kGaussian}) {
    for (int t = 0; t < 100; ++t) {
      const Index k = pick_k(rng);
      const Index d = std::uniform_int_distribution<Index>(k, 10)(rng);
      check_mixture(models::random_mixture_model({k, d, 3, family}, rng), static_cast<std::uint64_t>(t));
    }
  }
  for (int t = 0; t < 100; ++t) {
    const Index k = pick_k(rng);
    const Index d = std::uniform_int_distribution<Index>(k, 10)(rng);
    const HmmParams hmm = models::random_hmm(k, d, EmissionNoise::kMultinomial, 0.1, rng);
    const PopulationMoments src(models::hmm_to_three_view(hmm));
    check_mixture(models::hmm_to_three_view(hmm), static_cast<std::uint64_t>(t));
    const auto h = estimators::recover_hmm(src, config_for(k, static_cast<std::uint64_t>(t)));
    const auto al = eval::align_columns(h.observation_means, hmm.observation, false);
    worst_mean = std::max(worst_mean, al.max_error());
    const Matrix t_true = eval::permute_columns(eval::permute_columns(hmm.transition, al.permutation).transpose(),
                                                al.permutation)
                              .transpose();
    for (Index j = 0; j < k; ++j) worst_transition = std::max(worst_transition, (h.transition - t_true).col(j).norm());
  }
  require(o, worst_mean <= 1e-6, "mean column error " + num(worst_mean));
  require(o, worst_weight <= 1e-6, "weight error " + num(worst_weight));
  require(o, worst_transition <= 1e-6, "transition column error " + num(worst_transition));
  o.detail = std::to_string(trials) + " models; max column error " + num(worst_mean) + ", weight " +
             num(worst_weight) + ", transition " + num(worst_transition) + (o.pass ? "" : "; " + o.detail);
  return o;
}

Outcome convergence() {
  Outcome o;
  const std::vector<Index> grid = {10000, 100000, 1000000};
  auto judge = [&](const std::string& name, const eval::ConvergenceReport& r) {
    bool monotone = true;
    for (std::size_t i = 1; i < r.medians.size(); ++i) monotone = monotone && r.medians[i] < r.medians[i - 1];
    require(o, monotone, name + " medians not decreasing");
    require(o, r.slope >= -0.65 && r.slope <= -0.35, name + " slope " + num(r.slope));
    require(o, r.medians.back() <= r.medians.front() / 3.0, name + " error ratio");
    std::string s = name + ": medians";
    for (double m : r.medians) s += " " + num(m);
    return s + ", slope " + num(r.slope);
  };
  const std::string topic =
      judge("topic", eval::convergence_study(models::topic_reference_model(), eval::Estimator::kAlgorithmB, grid, 20, 7));
  const std::string hmm = judge("hmm", eval::convergence_study(models::reference_hmm(), grid, 20, 8));
  o.detail = topic + "; " + hmm + (o.pass ? "" : "; " + o.detail);
  return o;
}

Outcome operator_roots() {
  Outcome o;
  Rng rng(404);
  const auto p = models::random_mixture_model({3, 6, 3, Family::kGaussian}, rng);
  const PopulationMoments src(p);
  const Matrix p12 = src.pairs(0, 1);
  const auto bases = linalg::truncated_svd(p12, 3);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Vector eta = linalg::sample_unit_sphere(6, rng);
    const auto op = estimators::build_operator(p12, src.triples(0, 1, 2, eta), bases.left, bases.right, eta);
    const Eigen::VectorXcd ev = op.matrix.eigenvalues();
    std::vector<double> got(ev.size()), want(ev.size());
    const Vector proj = p.means[2].transpose() * eta;
    for (Index j = 0; j < ev.size(); ++j) {
      worst = std::max(worst, std::abs(ev(j).imag()));
      got[static_cast<std::size_t>(j)] = ev(j).real();
      want[static_cast<std::size_t>(j)] = proj(j);
    }
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    for (std::size_t j = 0; j < got.size(); ++j) worst = std::max(worst, std::abs(got[j] - want[j]));
  }
  require(o, worst <= 1e-8, "max deviation " + num(worst));
  if (o.pass) o.detail = "100 directions, max deviation " + num(worst);
  return o;
}

Outcome covariances() {
  Outcome o;
  MultiViewMixtureParams p;
  p.weights = Vector(2);
  p.weights << 0.4, 0.6;
  const Matrix m = mat({{1.0, -1.0}, {0.5, 2.0}});
  p.means = {m, m, m};
  const Matrix s1 = mat({{0.3, 0.1}, {0.1, 0.2}});
  const Matrix s2 = mat({{0.5, -0.2}, {-0.2, 0.4}});
  p.covariances.assign(3, {s1, s2});
  const PopulationMoments src(p);
  const auto est = estimators::algorithm_b(src, config_for(2, 5));
  const auto covs = estimators::recover_covariances(src, est);
  const auto al = eval::align_columns(est.means[2], m, false);
  double worst = 0.0;
  for (std::size_t j = 0; j < 2; ++j) {
    const Matrix& truth = p.covariances[2][static_cast<std::size_t>(al.permutation[j])];
    worst = std::max(worst, (covs[j] - truth).cwiseAbs().maxCoeff());
  }
  require(o, worst <= 1e-6, "max entry error " + num(worst));
  if (o.pass) o.detail = "max entry error " + num(worst);
  return o;
}

Outcome partitions() {
  Outcome o;
  const Matrix h = hadamard(256).leftCols(2);
  const double c_m = models::incoherence(h);
  const double sigma_k = linalg::truncated_svd(h, 2).singular_values(1);
  const double bound = sigma_k / (2.0 * std::sqrt(3.0));
  Rng rng(6);
  int good = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto r = models::random_partition(h, 3, 0.1, rng);
    bool ok = true;
    for (const auto& b : r.blocks) {
      ok = ok && b.rows() >= 2 && Eigen::JacobiSVD<Matrix>(b).singularValues()(1) >= bound;
    }
    good += ok;
  }
  require(o, std::abs(c_m - 1.0) <= 1e-12, "c_M " + num(c_m));
  require(o, good >= 900, std::to_string(good) + "/1000 partitions");
  o.detail = "c_M " + num(c_m) + ", " + std::to_string(good) + "/1000 partitions" + (o.pass ? "" : "; " + o.detail);
  return o;
}

Outcome mixing_weights() {
  Outcome o;
  const auto ref = models::topic_reference_model();
  double exact = 0.0;
  Rng rng(77);
  for (int t = 0; t < 20; ++t) {
    const auto p = t == 0 ? ref : models::random_mixture_model({2 + t % 3, 6, 3, Family::kTopic}, rng);
    const auto est = estimators::algorithm_b(PopulationMoments(p), config_for(p.k(), static_cast<std::uint64_t>(t)));
    const auto perm = eval::align_columns(est.means[2], p.means[2], false).permutation;
    for (Index j = 0; j < p.k(); ++j) {
      exact = std::max(exact, std::abs((*est.mixing_weights)(j) - p.weights(perm[static_cast<std::size_t>(j)])));
    }
  }
  const SampleBatch batch = models::sample_mixture(ref, 1000000, rng);
  const auto est = estimators::algorithm_b(EmpiricalMoments(batch, {true, 0.5, 9}), config_for(2, 3));
  const auto perm = eval::align_columns(est.means[2], ref.means[2], false).permutation;
  double empirical = 0.0;
  for (Index j = 0; j < 2; ++j) {
    empirical = std::max(empirical, std::abs((*est.mixing_weights)(j) - ref.weights(perm[static_cast<std::size_t>(j)])));
  }
  require(o, exact <= 1e-10, "exact error " + num(exact));
  require(o, empirical <= 0.02, "empirical error " + num(empirical));
  o.detail = "exact error " + num(exact) + ", empirical error " + num(empirical) + (o.pass ? "" : "; " + o.detail);
  return o;
}

// ---------------------------------------------------------------------------

struct Cli {
  int code;
  std::string out, err;
};

Cli run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mvmom");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

void write_params(const std::string& path, const io::ModelFile& f) {
  std::ostringstream s;
  io::write_model(s, f);
  io::write_file_atomic(path, s.str());
}

void write_mixture(const std::string& path, const MultiViewMixtureParams& p) {
  io::ModelFile f;
  f.mixture = p;
  write_params(path, f);
}

Outcome infrastructure() {
  Outcome o;
  const fs::path dir = fs::temp_directory_path() / ("mvmom_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  auto at = [&](const std::string& name) { return (dir / name).string(); };

  // generate -> read back
  MultiViewMixtureParams g;
  g.weights = Vector::Constant(2, 0.5);
  g.means = {mat({{1, -1}, {0.3, 2}}), mat({{0, 1}, {1, 0}}), mat({{2, 2}, {-1, 1}})};
  g.covariances.assign(3, {0.1 * Matrix::Identity(2, 2), 0.3 * Matrix::Identity(2, 2)});
  write_mixture(at("g.params"), g);
  const auto topic = models::topic_reference_model();
  write_mixture(at("topic.params"), topic);
  bool round_trip = true;
  for (const char* name : {"g", "topic"}) {
    const std::string prefix = at(name);
    round_trip = round_trip &&
                 run_cli({"generate", "--model", prefix + ".params", "--n", "2000", "--seed", "3", "--out", prefix})
                         .code == 0;
    std::istringstream text(io::read_file(prefix + ".data"));
    Rng rng(3);
    round_trip = round_trip && io::read_batch(text) == models::sample_mixture(name == std::string("g") ? g : topic, 2000, rng);
  }
  require(o, round_trip, "generate/ingest round-trip");

  // fixed seed -> identical reports
  bool identical = true;
  for (const char* prefix : {"r1", "r2"}) {
    identical = identical &&
                run_cli({"estimate", "--data", at("topic.data"), "--k", "2", "--seed", "4", "--out", at(prefix)}).code ==
                    0;
  }
  for (const char* ext : {".params", ".csv", ".txt"}) {
    identical = identical && io::read_file(at(std::string("r1") + ext)) == io::read_file(at(std::string("r2") + ext));
  }
  identical = identical && run_cli({"demo-nonident", "--p", "0.25"}).out == run_cli({"demo-nonident", "--p", "0.25"}).out;
  require(o, identical, "reports differ between identical runs");

  // exit codes
  std::set<int> codes;
  bool injective = true;
  for (ErrorCode c : cli::all_error_codes()) injective = injective && codes.insert(cli::exit_code(c)).second && cli::exit_code(c) >= 2;
  require(o, injective, "exit codes not unique");

  MultiViewMixtureParams id5;
  id5.family = Family::kTopic;
  id5.weights = Vector::Constant(5, 0.2);
  const Matrix m5 = 0.5 * Matrix::Identity(5, 5) + Matrix::Constant(5, 5, 0.1);
  id5.means = {m5, m5, m5};
  write_mixture(at("id5.params"), id5);
  run_cli({"generate", "--model", at("id5.params"), "--n", "10", "--seed", "2", "--out", at("small")});
  MultiViewMixtureParams tie;
  tie.family = Family::kTopic;
  tie.weights = Vector::Constant(2, 0.5);
  const Matrix mt = mat({{0.5, 0.5}, {0.3, 0.1}, {0.2, 0.4}});
  tie.means = {mt, mt, mt};
  write_mixture(at("tie.params"), tie);
  MultiViewMixtureParams bad = g;
  bad.covariances[1][0] = mat({{1, 0}, {0, -1}});
  write_mixture(at("bad.params"), bad);
  MultiViewMixtureParams zero = topic;
  for (auto& m : zero.means) m.col(1).setZero();
  write_mixture(at("zero.params"), zero);
  io::ModelFile chain;
  chain.hmm = models::reference_hmm();
  chain.hmm->transition = mat({{1, 1}, {0, 0}});
  write_params(at("chain.params"), chain);
  io::write_file_atomic(at("junk.data"), "d=2 views=3 onehot=0\n1 2 | 3\n");
  io::write_file_atomic(at("empty.txt"), "");
  run_cli({"moments", "--params", at("topic.params"), "--out", at("m.txt")});

  const std::vector<std::pair<ErrorCode, std::vector<std::string>>> paths = {
      {ErrorCode::kInvalidArgument, {"demo-nonident", "--p", "1.5"}},
      {ErrorCode::kParseError, {"estimate", "--data", at("junk.data"), "--k", "1"}},
      {ErrorCode::kIoFailure, {"estimate", "--data", at("missing.data"), "--k", "1"}},
      {ErrorCode::kInvalidParams, {"generate", "--model", at("bad.params"), "--n", "5", "--out", at("x")}},
      {ErrorCode::kDimensionMismatch, {"eval", "--estimate", at("id5.params"), "--truth", at("topic.params")}},
      {ErrorCode::kEmptyBatch, {"estimate", "--corpus", at("empty.txt"), "--vocab", "4", "--k", "2"}},
      {ErrorCode::kRankDeficient, {"estimate", "--params", at("topic.params"), "--k", "4"}},
      {ErrorCode::kSingularCore, {"estimate", "--data", at("small.data"), "--k", "5", "--algorithm", "B"}},
      {ErrorCode::kDegenerateSpectrum,
       {"estimate", "--params", at("tie.params"), "--k", "2", "--algorithm", "A", "--eta", "coord:0"}},
      {ErrorCode::kMissingFourthMoments,
       {"estimate", "--moments", at("m.txt"), "--k", "2", "--algorithm", "B", "--covariances"}},
      {ErrorCode::kZeroColumn,
       {"eval", "--estimate", at("zero.params"), "--truth", at("topic.params"), "--allow-scaling"}},
      {ErrorCode::kDegenerateChain, {"generate", "--model", at("chain.params"), "--n", "5", "--out", at("c")}},
      {ErrorCode::kConditionViolated, {"demo-nonident", "--p", "0.7"}},
  };
  int triggered = 0;
  for (const auto& [code, args] : paths) {
    const auto r = run_cli(args);
    if (r.code == cli::exit_code(code)) {
      ++triggered;
    } else {
      require(o, false, std::string(error_name(code)) + " gave exit " + std::to_string(r.code));
    }
  }
  std::error_code ec;
  fs::remove_all(dir, ec);
  o.detail = "round-trip " + std::string(round_trip ? "exact" : "differs") + ", " + std::to_string(triggered) + "/" +
             std::to_string(paths.size()) + " CLI error paths" + (o.pass ? "" : "; " + o.detail);
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"non-identifiability demo", nonidentifiability},
      {"exact-moment recovery", exact_recovery},
      {"convergence rate", convergence},
      {"operator roots", operator_roots},
      {"covariance recovery", covariances},
      {"random partitions", partitions},
      {"mixing weights", mixing_weights},
      {"infrastructure", infrastructure},
  };
  const std::vector<double> budgets = {1.0, 30.0, 300.0, 0, 0, 0, 0, 0};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("threw: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (budgets[i] > 0 && secs >= budgets[i]) {
      o.pass = false;
      o.detail += "; over the " + num(budgets[i]) + " s budget";
    }
    failed += !o.pass;
    std::cout << "criterion " << i + 1 << " " << (o.pass ? "PASS" : "FAIL") << " " << criteria[i].first << " ("
              << num(secs) << " s): " << o.detail << std::endl;
  }
  return failed;
}
