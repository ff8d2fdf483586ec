#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>

#include "perhom/harness.hpp"
#include "perhom/oracle.hpp"

namespace py = pybind11;
using namespace perhom;

namespace {

// Configs cross the boundary as plain dicts, round-tripped through json text.
Json to_json(const py::object& obj) {
  const auto text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
  return Json::parse(text);
}

py::object from_json(const Json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

py::dict estimate_dict(const ErgodicEstimate& e, const StudyConfig& cfg) {
  py::dict d;
  d["value"] = e.value;
  d["residual"] = e.residual;
  d["iterations"] = e.iterations;
  d["lipschitz_estimate"] = e.lipschitz_estimate;
  d["oscillation"] = e.corrector.oscillation();
  d["converged"] = e.converged;
  d["eta"] = study_eta(cfg, cfg.L_list[0]);
  d["corrector"] = py::array_t<double>(py::ssize_t(e.corrector.values.size()), e.corrector.values.data());
  return d;
}

double reference(const py::dict& config, std::optional<std::uint64_t> seed, const std::string& kind) {
  const StudyConfig cfg = single_shot_config(to_json(config), kind, false, seed, std::nullopt);
  return compute_reference(cfg, cfg.seeds[0], cfg.p_list[0]);
}

py::dict periodized(const py::dict& config, std::optional<std::uint64_t> seed, const std::string& kind) {
  const StudyConfig cfg = single_shot_config(to_json(config), kind, true, seed, std::nullopt);
  ErgodicEstimate e;
  {
    py::gil_scoped_release release;
    e = compute_constant_L(cfg, cfg.seeds[0], cfg.L_list[0], cfg.p_list[0]);
  }
  return estimate_dict(e, cfg);
}

}  // namespace

PYBIND11_MODULE(perhom, m) {
  m.doc() = R"pbdoc(
    Periodized approximation of effective Hamiltonians and elliptic
    operators in random media. Configs are dicts in the CLI's JSON schema.
  )pbdoc";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<NonConvergence>(m, "NonConvergence", PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def(
      "eval_potential",
      [](const py::dict& env, std::uint64_t seed, py::array_t<double, py::array::c_style | py::array::forcecast> x) {
        const EnvironmentSample s = sample_env(env_from_json(to_json(env)), seed);
        const int d = s.dimension();
        require(x.ndim() == 1 ? d == 1 : (x.ndim() == 2 && x.shape(1) == d), "points must be (n,) in 1D or (n, d)");
        const auto n = x.shape(0);
        py::array_t<double> out(n);
        auto in = x.unchecked();
        auto o = out.mutable_unchecked<1>();
        const double* data = in.data(0);
        for (py::ssize_t i = 0; i < n; ++i) {
          o(i) = eval_potential(s, {data[i * d], d == 2 ? data[i * d + 1] : 0.0});
        }
        return out;
      },
      py::arg("env"), py::arg("seed"), py::arg("x"), "Potential of a sampled medium at points.");

  m.def("hbar", [](const py::dict& c, std::optional<std::uint64_t> seed) { return reference(c, seed, "hjb"); },
        py::arg("config"), py::arg("seed") = py::none(), "Reference effective Hamiltonian at the config's p.");
  m.def("fbar", [](const py::dict& c, std::optional<std::uint64_t> seed) { return reference(c, seed, "elliptic"); },
        py::arg("config"), py::arg("seed") = py::none(), "Reference effective elliptic operator at the config's P.");
  m.def("hbar_l", [](const py::dict& c, std::optional<std::uint64_t> seed) { return periodized(c, seed, "hjb"); },
        py::arg("config"), py::arg("seed") = py::none(), "Periodized constant at the config's p and L.");
  m.def("fbar_l", [](const py::dict& c, std::optional<std::uint64_t> seed) { return periodized(c, seed, "elliptic"); },
        py::arg("config"), py::arg("seed") = py::none(), "Periodized elliptic constant at the config's P and L.");

  m.def(
      "run_study",
      [](const py::dict& config) {
        const StudyConfig cfg = study_config_from_json(to_json(config));
        StudyResult r;
        {
          py::gil_scoped_release release;
          r = run_convergence_study(cfg);
        }
        return from_json(result_json(r));
      },
      py::arg("config"), "Full convergence sweep; returns the JSON result document.");

  m.def(
      "fit_rate",
      [](const std::vector<std::pair<double, double>>& pairs) {
        const RateFit f = fit_rate(pairs);
        py::dict d;
        d["slope"] = f.slope;
        d["intercept"] = f.intercept;
        d["r_squared"] = f.r_squared;
        d["dropped"] = f.dropped;
        return d;
      },
      py::arg("pairs"), "Least squares of log err on log L over (L, err) pairs.");

  m.def("hbar_1d_first_order", &hbar_1d_first_order, py::arg("V"), py::arg("c1"), py::arg("gamma"), py::arg("p"),
        py::arg("quad_N") = 4096, "Weak-KAM effective Hamiltonian of c1|q|^gamma - V for 1-periodic V.");
  m.def("fbar_linear_1d", &fbar_linear_1d, py::arg("a"), py::arg("f"), py::arg("P"), py::arg("quad_N") = 4096);

  m.def(
      "eta_schedule_hjb",
      [](double L, double a_bar) {
        const EtaChoice e = eta_schedule_hjb(L, a_bar);
        return py::make_tuple(e.eta, e.clamped);
      },
      py::arg("L"), py::arg("a_bar"));
  m.def(
      "eta_schedule_elliptic",
      [](double lambda, int dim) {
        const EtaChoice e = eta_schedule_elliptic(lambda, dim);
        return py::make_tuple(e.eta, e.clamped);
      },
      py::arg("lambda_L"), py::arg("dim"));
  m.def(
      "cutoff",
      [](double eta, double x, double y, int dim) { return eval_cutoff(CutoffProfile{eta}, {x, y}, dim); },
      py::arg("eta"), py::arg("x"), py::arg("y") = 0.0, py::arg("dim") = 1);

  m.def(
      "read_phf1",
      [](const std::string& path) {
        const GridField f = read_phf1(path);
        std::vector<py::ssize_t> shape;
        for (int a = 0; a < f.grid.dim; ++a) shape.push_back(f.grid.n[a]);
        py::array_t<double> values(shape);
        std::copy(f.values.begin(), f.values.end(), values.mutable_data());
        std::vector<double> period(f.grid.period.begin(), f.grid.period.begin() + f.grid.dim);
        return py::make_tuple(values, period);
      },
      py::arg("path"), "Values (row-major, one axis per dimension) and periods of a PHF1 file.");

  m.def(
      "validate",
      [](const std::string& workdir, int threads) {
        std::vector<ValidationCheck> checks;
        {
          py::gil_scoped_release release;
          checks = run_validation(workdir, threads);
        }
        py::list out;
        for (const auto& c : checks) out.append(py::make_tuple(c.name, c.pass, c.detail));
        return out;
      },
      py::arg("workdir"), py::arg("threads") = 1, "Built-in invariant suite as (name, pass, detail) tuples.");
}
