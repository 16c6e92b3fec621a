#include <mvmom/error.hpp>
#include <mvmom/estimators.hpp>
#include <mvmom/eval.hpp>
#include <mvmom/linalg.hpp>
#include <mvmom/models.hpp>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace mvmom;

namespace {

SampleBatch batch_from(const std::vector<RowMatrix>& views) { return SampleBatch::dense(views); }

std::vector<RowMatrix> views_of(const SampleBatch& b) {
  std::vector<RowMatrix> out;
  for (Index v = 0; v < b.num_views(); ++v) out.push_back(b.dense_view(v));
  return out;
}

estimators::EstimatorConfig make_config(Index k, std::uint64_t seed, const std::string& eta, int retries) {
  estimators::EstimatorConfig c;
  c.k = k;
  c.seed = seed;
  c.retry_limit = retries;
  if (eta == "leverage") {
    c.eta.policy = estimators::EtaPolicy::kLeverage;
  } else if (eta.rfind("coord:", 0) == 0) {
    c.eta.policy = estimators::EtaPolicy::kCoordinate;
    c.eta.coordinate = std::stol(eta.substr(6));
  } else if (eta != "random") {
    fail(ErrorCode::kInvalidArgument, "eta must be random, leverage or coord:<x>");
  }
  return c;
}

py::dict diagnostics_dict(const estimators::Diagnostics& d) {
  py::dict out;
  out["eigen_gaps"] = d.eigen_gaps;
  out["imag_residues"] = d.imag_residues;
  out["pairs_singular_values"] = d.pairs_singular_values;
  out["retries"] = d.retries;
  out["off_diagonal_ratio"] = d.off_diagonal_ratio;
  out["warnings"] = d.warnings;
  return out;
}

py::dict estimate_with(const MomentSource& src, Index k, const std::string& algorithm, std::uint64_t seed,
                       const std::string& eta, int retries) {
  const auto config = make_config(k, seed, eta, retries);
  py::dict out;
  if (algorithm == "A") {
    auto a = estimators::algorithm_a(src, config);
    out["means"] = std::vector<py::object>{py::none(), py::none(), py::cast(a.means)};
    out["weights"] = estimators::estimate_mixing_weights(a.means, src.mean(2));
    out["eta"] = a.eta;
    out["eigenvalues"] = a.eigenvalues;
    out["diagnostics"] = diagnostics_dict(a.diagnostics);
    return out;
  }
  if (algorithm != "B" && algorithm != "all") fail(ErrorCode::kInvalidArgument, "algorithm must be A, B or all");
  auto m = algorithm == "B" ? estimators::algorithm_b(src, config) : estimators::estimate_all_views(src, config);
  py::list means;
  for (const auto& v : m.means) means.append(v.size() ? py::cast(v) : py::none());
  out["means"] = means;
  out["weights"] = m.mixing_weights ? py::cast(*m.mixing_weights) : py::none();
  out["diagnostics"] = diagnostics_dict(m.diagnostics);
  return out;
}

py::dict hmm_dict(const estimators::HmmEstimate& h) {
  py::dict out;
  out["observation"] = h.observation_means;
  out["transition"] = h.transition;
  out["transition_projected"] = h.transition_projected;
  out["initial"] = h.initial;
  out["mixing_weights"] = h.mixing_weights;
  out["diagnostics"] = diagnostics_dict(h.diagnostics);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Spectral method-of-moments estimators for multi-view mixtures";

  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error_type;
  error_type.call_once_and_store_result(
      [&]() { return py::object(py::exception<Error>(m, "Error", PyExc_RuntimeError)); });
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const py::object& type = error_type.get_stored();
      py::object instance = type(e.what());
      instance.attr("code") = std::string(error_name(e.code()));
      PyErr_SetObject(type.ptr(), instance.ptr());
    }
  });

  py::class_<MultiViewMixtureParams>(m, "MixtureParams")
      .def(py::init<>())
      .def(py::init([](Vector weights, std::vector<Matrix> means, const std::string& family,
                       std::vector<std::vector<Matrix>> covariances) {
             MultiViewMixtureParams p;
             p.weights = std::move(weights);
             p.means = std::move(means);
             p.family = parse_family(family);
             p.covariances = std::move(covariances);
             p.validate();
             return p;
           }),
           py::arg("weights"), py::arg("means"), py::arg("family") = "gaussian",
           py::arg("covariances") = std::vector<std::vector<Matrix>>{})
      .def_readwrite("weights", &MultiViewMixtureParams::weights)
      .def_readwrite("means", &MultiViewMixtureParams::means)
      .def_readwrite("covariances", &MultiViewMixtureParams::covariances)
      .def_property(
          "family", [](const MultiViewMixtureParams& p) { return family_name(p.family); },
          [](MultiViewMixtureParams& p, const std::string& f) { p.family = parse_family(f); })
      .def_property_readonly("k", &MultiViewMixtureParams::k)
      .def_property_readonly("num_views", &MultiViewMixtureParams::num_views)
      .def("validate", &MultiViewMixtureParams::validate);

  py::class_<HmmParams>(m, "HmmParams")
      .def(py::init<>())
      .def(py::init([](Vector initial, Matrix transition, Matrix observation, const std::string& noise) {
             HmmParams h;
             h.initial = std::move(initial);
             h.transition = std::move(transition);
             h.observation = std::move(observation);
             h.noise = parse_noise(noise);
             h.validate();
             return h;
           }),
           py::arg("initial"), py::arg("transition"), py::arg("observation"), py::arg("noise") = "multinomial")
      .def_readwrite("initial", &HmmParams::initial)
      .def_readwrite("transition", &HmmParams::transition)
      .def_readwrite("observation", &HmmParams::observation)
      .def_property_readonly("k", &HmmParams::k)
      .def("validate", &HmmParams::validate);

  m.def("topic_reference_model", &models::topic_reference_model, py::arg("views") = 3);
  m.def("reference_hmm", &models::reference_hmm);
  m.def("hmm_to_three_view", &models::hmm_to_three_view, py::arg("hmm"));
  m.def(
      "random_mixture_model",
      [](Index k, Index d, Index views, const std::string& family, double min_sigma, std::uint64_t seed) {
        Rng rng(seed);
        return models::random_mixture_model({k, d, views, parse_family(family), min_sigma}, rng);
      },
      py::arg("k"), py::arg("d"), py::arg("views") = 3, py::arg("family") = "gaussian", py::arg("min_sigma") = 0.1,
      py::arg("seed") = 0);

  m.def(
      "sample",
      [](const MultiViewMixtureParams& p, Index n, std::uint64_t seed) {
        Rng rng(seed);
        return views_of(models::sample_mixture(p, n, rng));
      },
      py::arg("params"), py::arg("n"), py::arg("seed") = 0, "Draws n records; returns one N x d array per view.");
  m.def(
      "sample_hmm",
      [](const HmmParams& h, Index n, std::uint64_t seed) {
        Rng rng(seed);
        return views_of(models::sample_hmm_triples(h, n, rng));
      },
      py::arg("hmm"), py::arg("n"), py::arg("seed") = 0);

  m.def(
      "pairs", [](const std::vector<RowMatrix>& views, Index a, Index b) {
        return empirical_pairs(batch_from(views), a, b);
      },
      py::arg("views"), py::arg("a") = 0, py::arg("b") = 1);
  m.def("population_pairs", &population_pairs, py::arg("params"), py::arg("a") = 0, py::arg("b") = 1);

  m.def(
      "estimate",
      [](const std::vector<RowMatrix>& views, Index k, const std::string& algorithm, std::uint64_t seed, bool split,
         const std::string& eta, int retries) {
        SplitOptions opts;
        opts.enabled = split && algorithm != "A";
        opts.seed = derive_seed(seed, 1);
        const EmpiricalMoments src(batch_from(views), opts);
        return estimate_with(src, k, algorithm, derive_seed(seed, 2), eta, retries);
      },
      py::arg("views"), py::arg("k"), py::arg("algorithm") = "B", py::arg("seed") = 0, py::arg("split") = true,
      py::arg("eta") = "random", py::arg("retries") = 10);
  m.def(
      "estimate_population",
      [](const MultiViewMixtureParams& p, Index k, const std::string& algorithm, std::uint64_t seed,
         const std::string& eta, int retries) {
        return estimate_with(PopulationMoments(p), k, algorithm, seed, eta, retries);
      },
      py::arg("params"), py::arg("k"), py::arg("algorithm") = "B", py::arg("seed") = 0, py::arg("eta") = "random",
      py::arg("retries") = 10);
  m.def(
      "recover_covariances",
      [](const MultiViewMixtureParams& p, Index k, std::uint64_t seed) {
        const PopulationMoments src(p);
        const auto est = estimators::algorithm_b(src, make_config(k, seed, "random", 10));
        return py::make_tuple(est.means[2], estimators::recover_covariances(src, est));
      },
      py::arg("params"), py::arg("k"), py::arg("seed") = 0,
      "Returns (M3, covariances) from population moments, in matching column order.");
  m.def(
      "recover_hmm",
      [](const std::vector<RowMatrix>& views, Index k, std::uint64_t seed) {
        SplitOptions opts;
        opts.seed = derive_seed(seed, 1);
        return hmm_dict(estimators::recover_hmm(EmpiricalMoments(batch_from(views), opts),
                                                make_config(k, derive_seed(seed, 2), "random", 10)));
      },
      py::arg("views"), py::arg("k"), py::arg("seed") = 0);
  m.def(
      "recover_hmm_population",
      [](const HmmParams& h, std::uint64_t seed) {
        return hmm_dict(estimators::recover_hmm(PopulationMoments(models::hmm_to_three_view(h)),
                                                make_config(h.k(), seed, "random", 10)));
      },
      py::arg("hmm"), py::arg("seed") = 0);
  m.def("project_to_simplex", &estimators::project_to_simplex, py::arg("v"));

  m.def(
      "align_columns",
      [](const Matrix& estimate, const Matrix& truth, bool allow_scaling) {
        const auto a = eval::align_columns(estimate, truth, allow_scaling);
        py::dict out;
        out["permutation"] = a.permutation;
        out["scales"] = a.scales ? py::cast(*a.scales) : py::none();
        out["errors"] = a.per_column_error;
        out["max_error"] = a.max_error();
        return out;
      },
      py::arg("estimate"), py::arg("truth"), py::arg("allow_scaling") = false);
  m.def(
      "nonident_demo",
      [](double p) {
        const auto r = eval::nonident_demo(p);
        py::dict out;
        out["m"] = r.m;
        out["m_tilde"] = r.m_tilde;
        out["w"] = r.w;
        out["w_tilde"] = r.w_tilde;
        out["pairs"] = r.pairs;
        out["triples"] = r.triples;
        out["triples_tilde"] = r.triples_tilde;
        out["pairs_discrepancy"] = r.pairs_discrepancy;
        out["triples_discrepancy"] = r.triples_discrepancy;
        return out;
      },
      py::arg("p") = 0.25);
  m.def("incoherence", &models::incoherence, py::arg("m"));
  m.def(
      "random_partition",
      [](const Matrix& mat, Index views, double delta, std::uint64_t seed) {
        Rng rng(seed);
        const auto r = models::random_partition(mat, views, delta, rng);
        return py::make_tuple(r.plan.assignment, r.blocks);
      },
      py::arg("m"), py::arg("views"), py::arg("delta") = 0.1, py::arg("seed") = 0);
}
