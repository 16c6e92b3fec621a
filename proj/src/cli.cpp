#include <mvmom/cli.hpp>

#include <mvmom/estimators.hpp>
#include <mvmom/eval.hpp>
#include <mvmom/io.hpp>
#include <mvmom/models.hpp>

#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

namespace mvmom::cli {

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return kExitUsage;
    case ErrorCode::kParseError: return 3;
    case ErrorCode::kIoFailure: return 4;
    case ErrorCode::kInvalidParams: return 5;
    case ErrorCode::kDimensionMismatch: return 6;
    case ErrorCode::kEmptyBatch: return 7;
    case ErrorCode::kRankDeficient: return 8;
    case ErrorCode::kSingularCore: return 9;
    case ErrorCode::kDegenerateSpectrum: return 10;
    case ErrorCode::kAmbiguousMatching: return 11;
    case ErrorCode::kMissingFourthMoments: return 12;
    case ErrorCode::kZeroColumn: return 13;
    case ErrorCode::kDegenerateChain: return 14;
    case ErrorCode::kConditionViolated: return 15;
  }
  return kExitInternal;
}

const std::vector<ErrorCode>& all_error_codes() {
  static const std::vector<ErrorCode> codes = {
      ErrorCode::kInvalidArgument,    ErrorCode::kParseError,         ErrorCode::kIoFailure,
      ErrorCode::kInvalidParams,      ErrorCode::kDimensionMismatch,  ErrorCode::kEmptyBatch,
      ErrorCode::kRankDeficient,      ErrorCode::kSingularCore,       ErrorCode::kDegenerateSpectrum,
      ErrorCode::kAmbiguousMatching,  ErrorCode::kMissingFourthMoments, ErrorCode::kZeroColumn,
      ErrorCode::kDegenerateChain,    ErrorCode::kConditionViolated,
  };
  return codes;
}

namespace {

using io::format_exact;
using io::format_short;

std::uint64_t parse_seed(const std::string& text, const std::string& what) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    fail(ErrorCode::kInvalidArgument, what + " must be an unsigned 64-bit integer, got '" + text + "'");
  }
  return v;
}

std::uint64_t default_seed() {
  if (const char* env = std::getenv("MVMOM_SEED"); env && *env) return parse_seed(env, "MVMOM_SEED");
  return 0;
}

io::ModelFile load_model(const std::string& path) {
  std::istringstream in(io::read_file(path));
  return io::read_model(in);
}

SampleBatch load_batch(const std::string& path) {
  std::istringstream in(io::read_file(path));
  return io::read_batch(in);
}

Matrix read_plain_matrix(const std::string& path) {
  std::istringstream in(io::read_file(path));
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      double v = 0.0;
      const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
        fail(ErrorCode::kParseError, path + ": expected a number, got '" + tok + "'");
      }
      row.push_back(v);
    }
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(ErrorCode::kParseError, path + ": empty matrix");
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) fail(ErrorCode::kParseError, path + ": ragged matrix");
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  }
  return m;
}

std::string matrix_text(const Matrix& m, const std::string& indent = "  ") {
  std::string s;
  for (Index i = 0; i < m.rows(); ++i) {
    s += indent;
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) s += ' ';
      s += format_short(m(i, j));
    }
    s += '\n';
  }
  return s;
}

std::string vector_text(const Vector& v) {
  std::string s;
  for (Index i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += format_short(v(i));
  }
  return s;
}

void write_output(const std::string& path, const std::string& content) { io::write_file_atomic(path, content); }

// quantity,view,component,row,col,value with 1-based indices; 0 leaves a field empty.
class CsvReport {
 public:
  CsvReport() { text_ = "quantity,view,component,row,col,value\n"; }
  void add(const std::string& quantity, Index view, Index component, Index row, Index col, double value) {
    text_ += quantity;
    for (Index f : {view, component, row, col}) {
      text_ += ',';
      if (f > 0) text_ += std::to_string(f);
    }
    text_ += ',' + format_exact(value) + '\n';
  }
  void add_matrix(const std::string& quantity, Index view, const Matrix& m) {
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) add(quantity, view, 0, i + 1, j + 1, m(i, j));
    }
  }
  const std::string& str() const { return text_; }

 private:
  std::string text_;
};

struct InputOptions {
  std::string data, corpus, moments, params;
  Index vocab = 0;
  bool thirds = false;
};

void add_input_options(CLI::App* cmd, InputOptions& in, bool allow_moments) {
  cmd->add_option("--data", in.data, "Data file");
  cmd->add_option("--corpus", in.corpus, "Token-id corpus, one document per line");
  cmd->add_option("--vocab", in.vocab, "Vocabulary size for --corpus");
  cmd->add_flag("--thirds", in.thirds, "Draw one word from each third of a document");
  if (allow_moments) cmd->add_option("--moments", in.moments, "Moment file");
  cmd->add_option("--params", in.params, "Params file; uses exact population moments");
}

int count_inputs(const InputOptions& in) {
  return !in.data.empty() + !in.corpus.empty() + !in.moments.empty() + !in.params.empty();
}

SampleBatch load_sample(const InputOptions& in, std::uint64_t seed, std::ostream& err) {
  if (!in.data.empty()) return load_batch(in.data);
  if (in.vocab < 1) fail(ErrorCode::kInvalidArgument, "--corpus needs --vocab");
  std::istringstream text(io::read_file(in.corpus));
  io::IngestStats stats;
  SampleBatch batch = io::ingest_corpus(text, in.vocab, in.thirds, derive_seed(seed, 0x1a9e57), &stats);
  if (stats.skipped_short > 0) {
    err << "warning: skipped " << stats.skipped_short << " document(s) with fewer than 3 tokens\n";
  }
  return batch;
}

MultiViewMixtureParams population_params(const io::ModelFile& model) {
  if (model.mixture) {
    model.mixture->validate();
    return *model.mixture;
  }
  model.hmm->validate();
  return models::hmm_to_three_view(*model.hmm);
}

// ---------------------------------------------------------------------------
// generate

struct GenerateOptions {
  std::string model, out;
  Index n = 0;
  std::optional<std::string> seed;
};

int cmd_generate(const GenerateOptions& opt, std::ostream& out) {
  const std::uint64_t seed = opt.seed ? parse_seed(*opt.seed, "--seed") : default_seed();
  if (opt.n < 1) fail(ErrorCode::kInvalidArgument, "--n must be positive");
  const io::ModelFile model = load_model(opt.model);
  Rng rng(seed);
  std::optional<SampleBatch> batch;
  io::ModelFile truth;
  if (model.hmm) {
    model.hmm->validate();
    truth.hmm = model.hmm;
    truth.mixture = models::hmm_to_three_view(*model.hmm);
    batch = models::sample_hmm_triples(*model.hmm, opt.n, rng);
  } else if (model.mixture) {
    model.mixture->validate();
    truth.mixture = model.mixture;
    batch = models::sample_mixture(*model.mixture, opt.n, rng);
  } else {
    fail(ErrorCode::kInvalidParams, "model file describes neither a mixture nor an HMM");
  }
  std::ostringstream data;
  io::write_batch(data, *batch);
  std::ostringstream params;
  io::write_model(params, truth);
  write_output(opt.out + ".data", data.str());
  write_output(opt.out + ".truth.params", params.str());
  out << "wrote " << batch->size() << " records, " << batch->num_views() << " views to " << opt.out << ".data\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateOptions {
  InputOptions input;
  Index k = 0;
  Index views = 3;
  std::string algorithm = "all";
  std::string eta = "random";
  std::string theta = "rotation";
  std::optional<std::string> seed;
  bool no_split = false;
  int retries = 10;
  bool project_simplex = false;
  bool covariances = false;
  int threads = 1;
  std::string out;
};

estimators::EtaChoice parse_eta(const std::string& s) {
  if (s == "random") return {estimators::EtaPolicy::kRandom, 0};
  if (s == "leverage") return {estimators::EtaPolicy::kLeverage, 0};
  if (s.rfind("coord:", 0) == 0) {
    long long x = -1;
    const std::string num = s.substr(6);
    const auto res = std::from_chars(num.data(), num.data() + num.size(), x);
    if (res.ec != std::errc() || res.ptr != num.data() + num.size() || x < 0) {
      fail(ErrorCode::kInvalidArgument, "--eta coord:<x> needs a 0-based coordinate");
    }
    return {estimators::EtaPolicy::kCoordinate, static_cast<Index>(x)};
  }
  fail(ErrorCode::kInvalidArgument, "--eta must be random, leverage or coord:<x>");
}

void parse_theta(const std::string& s, estimators::EstimatorConfig& config) {
  if (s == "rotation") {
    config.theta_policy = estimators::ThetaPolicy::kRandomRotation;
  } else if (s == "identity") {
    config.theta_policy = estimators::ThetaPolicy::kIdentity;
  } else if (s.rfind("file:", 0) == 0) {
    config.theta_policy = estimators::ThetaPolicy::kFixed;
    config.theta = read_plain_matrix(s.substr(5));
  } else {
    fail(ErrorCode::kInvalidArgument, "--theta must be rotation, identity or file:<path>");
  }
}

std::string diagnostics_text(const estimators::Diagnostics& d) {
  std::string s = "diagnostics:\n";
  if (d.pairs_singular_values.size()) s += "  pairs singular values: " + vector_text(d.pairs_singular_values) + '\n';
  if (d.direction_singular_values.size()) {
    s += "  direction singular values: " + vector_text(d.direction_singular_values) + '\n';
  }
  if (!d.eigen_gaps.empty()) {
    s += "  min eigen gap: " + format_short(*std::min_element(d.eigen_gaps.begin(), d.eigen_gaps.end())) + '\n';
  }
  if (!d.imag_residues.empty()) {
    s += "  max imaginary residue: " +
         format_short(*std::max_element(d.imag_residues.begin(), d.imag_residues.end())) + '\n';
  }
  s += "  retries: " + std::to_string(d.retries) + '\n';
  s += "  off-diagonal ratio: " + format_short(d.off_diagonal_ratio) + '\n';
  s += "  simplex distance of weights: " + format_short(d.simplex_distance) + '\n';
  for (const auto& w : d.warnings) s += "  warning: " + w + '\n';
  return s;
}

void diagnostics_csv(CsvReport& csv, const estimators::Diagnostics& d) {
  for (Index i = 0; i < d.pairs_singular_values.size(); ++i) {
    csv.add("pairs_singular_value", 0, 0, i + 1, 0, d.pairs_singular_values(i));
  }
  for (Index i = 0; i < d.direction_singular_values.size(); ++i) {
    csv.add("direction_singular_value", 0, 0, i + 1, 0, d.direction_singular_values(i));
  }
  for (std::size_t i = 0; i < d.eigen_gaps.size(); ++i) {
    csv.add("eigen_gap", 0, 0, static_cast<Index>(i) + 1, 0, d.eigen_gaps[i]);
  }
  for (std::size_t i = 0; i < d.imag_residues.size(); ++i) {
    csv.add("imag_residue", 0, 0, static_cast<Index>(i) + 1, 0, d.imag_residues[i]);
  }
  csv.add("retries", 0, 0, 0, 0, d.retries);
  csv.add("off_diagonal_ratio", 0, 0, 0, 0, d.off_diagonal_ratio);
  csv.add("simplex_distance", 0, 0, 0, 0, d.simplex_distance);
  csv.add("negative_mass", 0, 0, 0, 0, d.negative_mass ? 1.0 : 0.0);
  csv.add("non_stochastic", 0, 0, 0, 0, d.non_stochastic ? 1.0 : 0.0);
}

int cmd_estimate(const EstimateOptions& opt, std::ostream& out, std::ostream& err) {
  const std::uint64_t seed = opt.seed ? parse_seed(*opt.seed, "--seed") : default_seed();
  if (count_inputs(opt.input) != 1) {
    fail(ErrorCode::kInvalidArgument, "estimate needs exactly one of --data, --corpus, --moments, --params");
  }
  if (opt.k < 1) fail(ErrorCode::kInvalidArgument, "--k must be positive");
  if (opt.views < 3) fail(ErrorCode::kInvalidArgument, "--views must be at least 3");
  if (opt.retries < 1) fail(ErrorCode::kInvalidArgument, "--retries must be at least 1");
  if (opt.threads < 1) fail(ErrorCode::kInvalidArgument, "--threads must be at least 1");
  const std::string& algo = opt.algorithm;
  if (algo != "A" && algo != "B" && algo != "all" && algo != "hmm") {
    fail(ErrorCode::kInvalidArgument, "--algorithm must be A, B, all or hmm");
  }

  estimators::EstimatorConfig config;
  config.k = opt.k;
  config.eta = parse_eta(opt.eta);
  parse_theta(opt.theta, config);
  config.seed = derive_seed(seed, 2);
  config.retry_limit = opt.retries;
  config.project_simplex = opt.project_simplex;

  std::unique_ptr<MomentSource> src;
  Family family = Family::kGaussian;
  std::string input_label;
  if (!opt.input.moments.empty()) {
    std::istringstream in(io::read_file(opt.input.moments));
    src = std::make_unique<TableMoments>(io::read_moments(in));
    input_label = "moments " + opt.input.moments;
  } else if (!opt.input.params.empty()) {
    MultiViewMixtureParams p = population_params(load_model(opt.input.params));
    family = p.family;
    if (p.num_views() > opt.views) p.means.resize(static_cast<std::size_t>(opt.views));
    if (p.has_covariances()) p.covariances.resize(p.means.size());
    src = std::make_unique<PopulationMoments>(std::move(p));
    input_label = "population moments of " + opt.input.params;
  } else {
    SampleBatch batch = load_sample(opt.input, seed, err);
    if (batch.size() < 1) fail(ErrorCode::kEmptyBatch, "no records in the input");
    if (batch.num_views() < 3) fail(ErrorCode::kDimensionMismatch, "data needs at least 3 views");
    if (batch.num_views() > opt.views) {
      std::vector<Index> keep(static_cast<std::size_t>(opt.views));
      for (Index v = 0; v < opt.views; ++v) keep[static_cast<std::size_t>(v)] = v;
      batch = batch.select_views(keep);
    }
    if (batch.is_one_hot()) family = Family::kTopic;
    input_label = std::to_string(batch.size()) + " records";
    SplitOptions split;
    // Algorithm A reads every moment from the full sample.
    split.enabled = !opt.no_split && algo != "A";
    split.seed = derive_seed(seed, 1);
    src = std::make_unique<EmpiricalMoments>(std::move(batch), split, AccumulateOptions{opt.threads});
  }

  MultiViewMixtureParams est;
  est.family = family;
  std::optional<HmmParams> chain;
  estimators::Diagnostics diag;
  CsvReport csv;
  std::string text = "algorithm: " + algo + "\ninput: " + input_label + "\nk: " + std::to_string(opt.k) + '\n';
  std::optional<estimators::OperatorFactors> factors;

  if (algo == "A") {
    auto a = estimators::algorithm_a(*src, config);
    est.means = {Matrix(), Matrix(), a.means};
    diag = a.diagnostics;
    try {
      est.weights = estimators::estimate_mixing_weights(a.means, src->mean(2));
      diag.simplex_distance = (est.weights - estimators::project_to_simplex(est.weights)).norm();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kInvalidArgument) throw;
    }
    for (Index j = 0; j < a.eta.size(); ++j) csv.add("eta", 0, 0, j + 1, 0, a.eta(j));
    for (Index j = 0; j < a.eigenvalues.size(); ++j) csv.add("eigenvalue", 0, j + 1, 0, 0, a.eigenvalues(j));
  } else if (algo == "hmm") {
    auto h = estimators::recover_hmm(*src, config);
    diag = h.diagnostics;
    est.weights = h.mixing_weights;
    est.means = {Matrix(), h.observation_means, Matrix()};
    HmmParams hp;
    hp.initial = h.initial;
    hp.transition = h.transition;
    hp.observation = h.observation_means;
    hp.noise = family == Family::kTopic ? EmissionNoise::kMultinomial : EmissionNoise::kGaussian;
    chain = hp;
    csv.add_matrix("transition", 0, h.transition);
    csv.add_matrix("transition_projected", 0, h.transition_projected);
    for (Index j = 0; j < h.raw_column_sums.size(); ++j) {
      csv.add("raw_column_sum", 0, j + 1, 0, 0, h.raw_column_sums(j));
    }
    for (Index j = 0; j < h.initial.size(); ++j) csv.add("initial", 0, j + 1, 0, 0, h.initial(j));
    text += "transition (columns rescaled to sum to 1):\n" + matrix_text(h.transition);
    text += "transition (projected):\n" + matrix_text(h.transition_projected);
    text += "raw column sums: " + vector_text(h.raw_column_sums) + '\n';
    text += "initial: " + vector_text(h.initial) + '\n';
  } else {
    auto m = algo == "B" ? estimators::algorithm_b(*src, config) : estimators::estimate_all_views(*src, config);
    est.means = m.means;
    if (m.mixing_weights) est.weights = *m.mixing_weights;
    if (opt.covariances) {
      const auto covs = estimators::recover_covariances(*src, m);
      est.covariances.assign(est.means.size(), {});
      est.covariances[2] = covs;
    }
    diag = m.diagnostics;
    factors = m.factors;
  }

  if (est.weights.size()) {
    for (Index j = 0; j < est.weights.size(); ++j) csv.add("weight", 0, j + 1, 0, 0, est.weights(j));
    text += "weights: " + vector_text(est.weights) + '\n';
  }
  for (std::size_t v = 0; v < est.means.size(); ++v) {
    const Matrix& m = est.means[v];
    if (m.size() == 0) continue;
    const Index view = static_cast<Index>(v) + 1;
    for (Index j = 0; j < m.cols(); ++j) {
      for (Index i = 0; i < m.rows(); ++i) csv.add("mean", view, j + 1, i + 1, 0, m(i, j));
    }
    text += "view " + std::to_string(view) + " means:\n" + matrix_text(m);
    text += "  column sums: " + vector_text(m.colwise().sum().transpose()) + '\n';
  }
  for (std::size_t v = 0; v < est.covariances.size(); ++v) {
    for (std::size_t j = 0; j < est.covariances[v].size(); ++j) {
      const Matrix& c = est.covariances[v][j];
      const Index view = static_cast<Index>(v) + 1;
      for (Index r = 0; r < c.rows(); ++r) {
        for (Index s = 0; s < c.cols(); ++s) csv.add("covariance", view, static_cast<Index>(j) + 1, r + 1, s + 1, c(r, s));
      }
      text += "view " + std::to_string(view) + " covariance " + std::to_string(j + 1) + ":\n" + matrix_text(c);
    }
  }
  if (factors) {
    csv.add_matrix("theta", 0, factors->theta);
    csv.add_matrix("L", 3, factors->l);
    text += "theta:\n" + matrix_text(factors->theta);
    text += "L (view 3):\n" + matrix_text(factors->l);
  }
  diagnostics_csv(csv, diag);
  text += diagnostics_text(diag);

  io::ModelFile model;
  model.mixture = est;
  model.hmm = chain;
  std::ostringstream params;
  io::write_model(params, model);
  if (!opt.out.empty()) {
    write_output(opt.out + ".params", params.str());
    write_output(opt.out + ".csv", csv.str());
    write_output(opt.out + ".txt", text);
  }
  out << text;
  for (const auto& w : diag.warnings) err << "warning: " << w << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  std::string estimate, truth, csv, estimator;
  bool allow_scaling = false;
  bool convergence = false;
  std::vector<Index> grid = {10000, 100000, 1000000};
  int seeds = 20;
  int threads = 1;
  std::optional<std::string> seed;
};

int cmd_convergence(const EvalOptions& opt, std::ostream& out) {
  const std::uint64_t seed = opt.seed ? parse_seed(*opt.seed, "--seed") : default_seed();
  if (opt.seeds < 1) fail(ErrorCode::kInvalidArgument, "--seeds must be positive");
  if (opt.grid.empty()) fail(ErrorCode::kInvalidArgument, "--grid must not be empty");
  for (Index n : opt.grid) {
    if (n < 2) fail(ErrorCode::kInvalidArgument, "grid sizes must be at least 2");
  }
  const io::ModelFile truth = load_model(opt.truth);
  std::string estimator = opt.estimator;
  if (estimator.empty()) estimator = truth.hmm ? "hmm" : "B";
  eval::ConvergenceReport report;
  if (estimator == "hmm") {
    if (!truth.hmm) fail(ErrorCode::kInvalidArgument, "--estimator hmm needs an HMM truth file");
    truth.hmm->validate();
    report = eval::convergence_study(*truth.hmm, opt.grid, opt.seeds, seed, opt.threads);
  } else if (estimator == "A" || estimator == "B") {
    const MultiViewMixtureParams p = population_params(truth);
    report = eval::convergence_study(p, estimator == "A" ? eval::Estimator::kAlgorithmA : eval::Estimator::kAlgorithmB,
                                     opt.grid, opt.seeds, seed, opt.threads);
  } else {
    fail(ErrorCode::kInvalidArgument, "--estimator must be A, B or hmm");
  }
  std::string csv = "N,seed,view,column,error,scale\n";
  for (const auto& c : report.grid) {
    csv += std::to_string(c.n) + ',' + std::to_string(c.seed) + ",,," + format_exact(c.error) + ",\n";
  }
  for (std::size_t i = 0; i < report.sizes.size(); ++i) {
    csv += "# median N=" + std::to_string(report.sizes[i]) + " error=" + format_exact(report.medians[i]) + '\n';
  }
  csv += "# slope=" + format_exact(report.slope) + '\n';
  if (!opt.csv.empty()) write_output(opt.csv, csv);
  out << csv;
  return kExitOk;
}

int cmd_eval(const EvalOptions& opt, std::ostream& out) {
  if (opt.truth.empty()) fail(ErrorCode::kInvalidArgument, "eval needs --truth");
  if (opt.convergence) return cmd_convergence(opt, out);
  if (opt.estimate.empty()) fail(ErrorCode::kInvalidArgument, "eval needs --estimate");
  const io::ModelFile est = load_model(opt.estimate);
  const io::ModelFile truth = load_model(opt.truth);
  if (!est.mixture || !truth.mixture) fail(ErrorCode::kDimensionMismatch, "both files need mean blocks");

  std::vector<Matrix> est_views, true_views;
  std::vector<Index> view_ids;
  for (std::size_t v = 0; v < est.mixture->means.size() && v < truth.mixture->means.size(); ++v) {
    const Matrix& a = est.mixture->means[v];
    const Matrix& b = truth.mixture->means[v];
    if (a.size() == 0 || b.size() == 0) continue;
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
      fail(ErrorCode::kDimensionMismatch, "view " + std::to_string(v + 1) + " shapes differ");
    }
    est_views.push_back(a);
    true_views.push_back(b);
    view_ids.push_back(static_cast<Index>(v) + 1);
  }
  if (est_views.empty()) fail(ErrorCode::kDimensionMismatch, "no view is present in both files");
  const auto aligned = eval::align_views(est_views, true_views, opt.allow_scaling);
  const auto& perm = aligned.front().permutation;

  std::string csv = "N,seed,view,column,error,scale\n";
  std::string text = "view column truth error scale\n";
  double worst = 0.0;
  for (std::size_t i = 0; i < aligned.size(); ++i) {
    const auto& r = aligned[i];
    for (Index j = 0; j < r.per_column_error.size(); ++j) {
      const double scale = r.scales ? (*r.scales)(j) : 1.0;
      csv += ",," + std::to_string(view_ids[i]) + ',' + std::to_string(j + 1) + ',' +
             format_exact(r.per_column_error(j)) + ',' + format_exact(scale) + '\n';
      text += std::to_string(view_ids[i]) + ' ' + std::to_string(j + 1) + ' ' +
              std::to_string(perm[static_cast<std::size_t>(j)] + 1) + ' ' + format_short(r.per_column_error(j)) +
              ' ' + format_short(scale) + '\n';
    }
    worst = std::max(worst, r.max_error());
  }
  text += "max column error: " + format_short(worst) + '\n';
  const Vector& w_est = est.mixture->weights;
  const Vector& w_true = truth.mixture->weights;
  if (w_est.size() && w_est.size() == w_true.size()) {
    double e = 0.0;
    for (Index j = 0; j < w_est.size(); ++j) e = std::max(e, std::abs(w_est(j) - w_true(perm[static_cast<std::size_t>(j)])));
    text += "max weight error: " + format_short(e) + '\n';
  }
  if (est.hmm && truth.hmm && est.hmm->transition.rows() == truth.hmm->transition.rows()) {
    const Matrix t_true = eval::permute_columns(truth.hmm->transition, perm);
    double e = 0.0;
    for (Index i = 0; i < t_true.rows(); ++i) {
      for (Index j = 0; j < t_true.cols(); ++j) {
        e = std::max(e, std::abs(est.hmm->transition(i, j) - t_true(perm[static_cast<std::size_t>(i)], j)));
      }
    }
    text += "max transition error: " + format_short(e) + '\n';
  }
  if (!opt.csv.empty()) write_output(opt.csv, csv);
  out << text;
  return kExitOk;
}

// ---------------------------------------------------------------------------
// demo-nonident

int cmd_demo(double p, const std::string& out_path, std::ostream& out) {
  const auto r = eval::nonident_demo(p);
  std::string s = "p: " + format_short(r.p) + '\n';
  s += "model 1 M:\n" + matrix_text(r.m) + "model 1 w: " + vector_text(r.w) + '\n';
  s += "model 2 M:\n" + matrix_text(r.m_tilde) + "model 2 w: " + vector_text(r.w_tilde) + '\n';
  s += "Q:\n" + matrix_text(r.q);
  s += "pairs (model 1):\n" + matrix_text(r.pairs);
  s += "pairs (model 2):\n" + matrix_text(r.pairs_tilde);
  s += "eta: " + vector_text(r.eta) + '\n';
  s += "triples (model 1):\n" + matrix_text(r.triples);
  s += "triples (model 2):\n" + matrix_text(r.triples_tilde);
  s += "pairs discrepancy: " + format_short(r.pairs_discrepancy) + '\n';
  s += "triples discrepancy: " + format_short(r.triples_discrepancy) + '\n';
  s += "column sum residual: " + format_short(r.column_sum_residual) + '\n';
  s += "min entry: " + format_short(r.min_nonnegative_entry) + '\n';
  s += "off-diagonal residual: " + format_short(r.off_diagonal_residual) + '\n';
  s += "conditions: verified\n";
  if (!out_path.empty()) write_output(out_path, s);
  out << s;
  return kExitOk;
}

// ---------------------------------------------------------------------------
// moments

int cmd_moments(const InputOptions& input, bool fourth, const std::string& out_path, int threads,
                std::optional<std::string> seed_text, std::ostream& out, std::ostream& err) {
  const std::uint64_t seed = seed_text ? parse_seed(*seed_text, "--seed") : default_seed();
  if (count_inputs(input) != 1) fail(ErrorCode::kInvalidArgument, "moments needs exactly one of --data, --corpus, --params");
  if (threads < 1) fail(ErrorCode::kInvalidArgument, "--threads must be at least 1");
  MomentSet set;
  if (!input.params.empty()) {
    const MultiViewMixtureParams p = population_params(load_model(input.params));
    if (p.num_views() < 3) fail(ErrorCode::kDimensionMismatch, "model needs at least 3 views");
    const auto dirs = coordinate_directions(p.dim(2));
    set = population_moments(p, dirs, fourth ? coordinate_pairs(p.dim(2)) : std::vector<std::pair<Vector, Vector>>{});
  } else {
    const SampleBatch batch = load_sample(input, seed, err);
    if (batch.size() < 1) fail(ErrorCode::kEmptyBatch, "no records in the input");
    if (batch.num_views() < 3) fail(ErrorCode::kDimensionMismatch, "data needs at least 3 views");
    const auto dirs = coordinate_directions(batch.dim(2));
    set = empirical_moments(batch, dirs, fourth ? coordinate_pairs(batch.dim(2)) : std::vector<std::pair<Vector, Vector>>{},
                            AccumulateOptions{threads});
  }
  std::ostringstream text;
  io::write_moments(text, set);
  if (!out_path.empty()) {
    write_output(out_path, text.str());
    out << "wrote " << set.triples_contractions.size() << " triples and " << set.fourth_contractions.size()
        << " fourth-order contractions to " << out_path << '\n';
  } else {
    out << text.str();
  }
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spectral method-of-moments estimation for multi-view mixtures", "mvmom"};
  app.require_subcommand(1);

  GenerateOptions gen;
  auto* generate = app.add_subcommand("generate", "Sample synthetic data from a params file");
  generate->add_option("--model", gen.model, "Params file")->required();
  generate->add_option("--n", gen.n, "Number of records")->required();
  generate->add_option("--out", gen.out, "Output prefix")->required();
  generate->add_option("--seed", gen.seed, "Seed (default: $MVMOM_SEED or 0)");

  EstimateOptions est;
  auto* estimate = app.add_subcommand("estimate", "Estimate mixture parameters");
  add_input_options(estimate, est.input, true);
  estimate->add_option("--k", est.k, "Number of components")->required();
  estimate->add_option("--views", est.views, "Number of views to use");
  estimate->add_option("--algorithm", est.algorithm, "A, B, all or hmm");
  estimate->add_option("--eta", est.eta, "random, leverage or coord:<x>");
  estimate->add_option("--theta", est.theta, "rotation, identity or file:<path>");
  estimate->add_option("--seed", est.seed, "Seed (default: $MVMOM_SEED or 0)");
  estimate->add_flag("--no-split", est.no_split, "Use the full sample for every moment");
  estimate->add_option("--retries", est.retries, "Attempts with fresh randomness");
  estimate->add_flag("--project-simplex", est.project_simplex, "Project topic columns onto the simplex");
  estimate->add_flag("--covariances", est.covariances, "Also recover view-3 covariances");
  estimate->add_option("--threads", est.threads, "Worker threads for moment accumulation");
  estimate->add_option("--out", est.out, "Output prefix for .params, .csv and .txt");

  EvalOptions ev;
  auto* evaluate = app.add_subcommand("eval", "Compare an estimate with the truth, or run a convergence study");
  evaluate->add_option("--estimate", ev.estimate, "Estimated params file");
  evaluate->add_option("--truth", ev.truth, "True params file");
  evaluate->add_flag("--allow-scaling", ev.allow_scaling, "Fit a scale per column before comparing");
  evaluate->add_option("--csv", ev.csv, "Write the CSV report here");
  evaluate->add_flag("--convergence", ev.convergence, "Run the N-grid convergence protocol on --truth");
  evaluate->add_option("--grid", ev.grid, "Sample sizes, comma-separated")->delimiter(',');
  evaluate->add_option("--seeds", ev.seeds, "Seeds per sample size");
  evaluate->add_option("--estimator", ev.estimator, "A, B or hmm");
  evaluate->add_option("--threads", ev.threads, "Worker threads");
  evaluate->add_option("--seed", ev.seed, "Base seed (default: $MVMOM_SEED or 0)");

  double p = 0.25;
  std::string demo_out;
  auto* demo = app.add_subcommand("demo-nonident", "Two topic models with equal pairs and different triples");
  demo->add_option("--p", p, "Parameter in (0, 1)");
  demo->add_option("--out", demo_out, "Also write the report here");

  InputOptions mom_in;
  bool fourth = false;
  std::string mom_out;
  int mom_threads = 1;
  std::optional<std::string> mom_seed;
  auto* moments = app.add_subcommand("moments", "Dump pair, triple and optional fourth-order moments");
  add_input_options(moments, mom_in, false);
  moments->add_flag("--fourth", fourth, "Include fourth-order contractions along coordinate pairs");
  moments->add_option("--out", mom_out, "Output file (default: stdout)");
  moments->add_option("--threads", mom_threads, "Worker threads");
  moments->add_option("--seed", mom_seed, "Seed for --thirds (default: $MVMOM_SEED or 0)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (generate->parsed()) return cmd_generate(gen, out);
    if (estimate->parsed()) return cmd_estimate(est, out, err);
    if (evaluate->parsed()) return cmd_eval(ev, out);
    if (demo->parsed()) return cmd_demo(p, demo_out, out);
    if (moments->parsed()) return cmd_moments(mom_in, fourth, mom_out, mom_threads, mom_seed, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace mvmom::cli
