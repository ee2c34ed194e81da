#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "meanfield/config.hpp"
#include "meanfield/dynamics.hpp"
#include "meanfield/errors.hpp"
#include "meanfield/experiments.hpp"
#include "meanfield/field.hpp"
#include "meanfield/kernels.hpp"
#include "meanfield/limit.hpp"
#include "meanfield/parallel.hpp"
#include "meanfield/stability.hpp"
#include "meanfield/transport.hpp"

namespace py = pybind11;
using namespace meanfield;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_py(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

std::vector<double> to_vec(const Array& a) { return {a.data(), a.data() + a.size()}; }

Array to_array(const std::vector<double>& v, int dim) {
  const py::ssize_t n = dim > 0 ? py::ssize_t(v.size()) / dim : 0;
  Array out(dim == 1 ? std::vector<py::ssize_t>{n} : std::vector<py::ssize_t>{n, dim});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

// Points as (n,) for d = 1 or (n, d).
DiscreteMeasure measure_from(const Array& points, const py::object& weights) {
  const int dim = points.ndim() == 1 ? 1 : int(points.shape(1));
  std::vector<double> w;
  if (!weights.is_none()) w = to_vec(weights.cast<Array>());
  return DiscreteMeasure(dim, to_vec(points), std::move(w));
}

RunConfig run_config(const py::object& cfg) {
  if (cfg.is_none()) return config_from_json(nlohmann::json::object());
  if (py::isinstance<py::str>(cfg)) return parse_config_text(cfg.cast<std::string>());
  return config_from_json(from_py(cfg));
}

py::dict result_dict(const ExperimentResult& r, const ExperimentConfig& cfg) {
  py::dict d;
  d["name"] = r.name;
  d["verdict"] = to_string(r.verdict);
  d["exit_code"] = exit_code(r.verdict);
  d["columns"] = r.columns;
  std::vector<double> flat;
  for (const auto& row : r.rows) flat.insert(flat.end(), row.begin(), row.end());
  Array rows(std::vector<py::ssize_t>{py::ssize_t(r.rows.size()), py::ssize_t(r.columns.size())});
  std::copy(flat.begin(), flat.end(), rows.mutable_data());
  d["rows"] = rows;
  d["manifest"] = to_py(r.manifest(to_json(cfg)));
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Mean-field particle system simulation and diagnostics";
  m.attr("__version__") = kVersion;

  py::register_exception<Error>(m, "MeanfieldError", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);

  py::enum_<KernelFamily>(m, "KernelFamily")
      .value("Gaussian", KernelFamily::Gaussian)
      .value("BiExponential", KernelFamily::BiExponential);

  py::class_<KernelSpec>(m, "KernelSpec")
      .def_static("gaussian", &KernelSpec::gaussian, py::arg("bandwidth"), py::arg("dim") = 1)
      .def_static("biexponential", &KernelSpec::biexponential, py::arg("bandwidth"))
      .def_readonly("family", &KernelSpec::family)
      .def_readonly("bandwidth", &KernelSpec::bandwidth)
      .def_readonly("dim", &KernelSpec::dim)
      .def("density", [](const KernelSpec& k, const Array& x, const Array& y) { return density(k, to_vec(x), to_vec(y)); })
      .def("grad_density",
           [](const KernelSpec& k, const Array& x, const Array& y) {
             std::vector<double> g(k.dim);
             grad_density(k, to_vec(x), to_vec(y), g);
             return to_array(g, 1);
           })
      .def("exp_moment", [](const KernelSpec& k, double x, double a) { return exp_moment(k, x, a); })
      .def("constants", [](const KernelSpec& k) {
        KernelConstants c = compute_constants(k);
        py::dict d;
        d["lip_pushforward"] = c.lip_pushforward;
        d["lip_grad"] = c.lip_grad;
        d["grad_growth"] = c.grad_growth;
        d["grad_at_zero"] = c.grad_at_zero;
        d["grad_kink"] = c.grad_kink;
        d["alpha1_max"] = c.exp_moment.alpha1_max;
        return d;
      });

  py::class_<MixtureField>(m, "MixtureField")
      .def(py::init<int>(), py::arg("dim") = 1)
      .def_static(
          "from_components",
          [](const Array& weights, const Array& centers, const Array& bandwidths) {
            const int dim = centers.ndim() == 1 ? 1 : int(centers.shape(1));
            MixtureField f(dim);
            auto w = to_vec(weights), c = to_vec(centers), b = to_vec(bandwidths);
            if (w.size() != b.size() || c.size() != w.size() * dim) throw InputError("component arrays disagree");
            for (std::size_t i = 0; i < w.size(); ++i)
              f.add(w[i], std::span(c.data() + i * dim, dim), KernelFamily::Gaussian, b[i]);
            f.normalize();
            return f;
          },
          py::arg("weights"), py::arg("centers"), py::arg("bandwidths"))
      .def_static("from_json", [](const py::object& o) { return MixtureField::from_json(from_py(o)); })
      .def("to_json", [](const MixtureField& f) { return to_py(f.to_json()); })
      .def("__len__", &MixtureField::size)
      .def_property_readonly("dim", &MixtureField::dim)
      .def_property_readonly("weights", [](const MixtureField& f) { return to_array(f.weights(), 1); })
      .def_property_readonly("centers", [](const MixtureField& f) { return to_array(f.centers(), f.dim()); })
      .def("density", [](const MixtureField& f, const Array& y) { return f.density(to_vec(y)); })
      .def("gradient",
           [](const MixtureField& f, const Array& y) {
             std::vector<double> g(f.dim());
             f.gradient(to_vec(y), g);
             return to_array(g, 1);
           })
      .def("first_moment", [](const MixtureField& f) { return first_moment(f); })
      .def(
          "evolve",
          [](const MixtureField& f, const Array& points, double alpha, const KernelSpec& P, const KernelSpec& Pp) {
            auto mu = measure_from(points, py::none());
            return evolve_exact(f, mu, alpha, P, Pp);
          },
          py::arg("points"), py::arg("alpha"), py::arg("P"), py::arg("P_prime"));

  m.def(
      "expansion_reference",
      [](const MixtureField& eta0, const std::vector<Array>& history, double alpha, const KernelSpec& P,
         const KernelSpec& Pp) {
        std::vector<DiscreteMeasure> mus;
        for (const auto& h : history) mus.push_back(measure_from(h, py::none()));
        return expansion_reference(eta0, mus, alpha, P, Pp);
      },
      py::arg("eta0"), py::arg("history"), py::arg("alpha"), py::arg("P"), py::arg("P_prime"));

  m.def(
      "w1_exact_1d",
      [](const Array& a, const Array& b, const py::object& wa, const py::object& wb) {
        return w1_exact_1d(measure_from(a, wa), measure_from(b, wb));
      },
      py::arg("a"), py::arg("b"), py::arg("weights_a") = py::none(), py::arg("weights_b") = py::none());
  m.def(
      "w1_exact_assignment",
      [](const Array& a, const Array& b, const py::object& wa, const py::object& wb) {
        return w1_exact_assignment(measure_from(a, wa), measure_from(b, wb));
      },
      py::arg("a"), py::arg("b"), py::arg("weights_a") = py::none(), py::arg("weights_b") = py::none());
  m.def(
      "w1_dyadic_bound",
      [](const Array& a, const Array& b, int scales, int levels) {
        return w1_dyadic_bound(measure_from(a, py::none()), measure_from(b, py::none()), scales, levels);
      },
      py::arg("a"), py::arg("b"), py::arg("depth_scales") = 6, py::arg("depth_levels") = 10);

  m.def("contraction_rate", &contraction_rate, py::arg("c1"), py::arg("c2"));
  m.def(
      "rate_exponent",
      [](int d, double tau) {
        RateExponent r = rate_exponent(d, tau);
        py::dict out;
        out["printed"] = r.printed;
        out["min_reading"] = r.min_reading;
        out["log_factor"] = to_string(r.log_factor);
        out["regime"] = r.regime;
        return out;
      },
      py::arg("d"), py::arg("tau"));
  m.def(
      "iid_constants",
      [](double a_norm, double delta, double K, double alpha, double l_grad_P, double l_grad_Pp, double l_P,
         double l_Pp) {
        IidConstants c = iid_constants(a_norm, delta, K, alpha, l_grad_P, l_grad_Pp, l_P, l_Pp);
        py::dict out;
        out["C1"] = c.C1;
        out["chi1"] = c.chi1;
        out["chi1_proof"] = c.chi1_proof;
        return out;
      },
      py::arg("a_norm"), py::arg("delta"), py::arg("K"), py::arg("alpha"), py::arg("l_grad_P"), py::arg("l_grad_Pp"),
      py::arg("l_P"), py::arg("l_Pp"));
  m.def(
      "stability",
      [](const py::object& cfg) {
        RunConfig rc = run_config(cfg);
        return to_py(compute_constants(rc.experiment.params, rc.experiment.tau).to_json());
      },
      py::arg("config") = py::none(), "Stability constants and hypothesis flags for a config (dict, JSON text, or None).");

  m.def(
      "canonical_config", [](const py::object& cfg) { return to_py(to_json(run_config(cfg))); },
      py::arg("config") = py::none());

  m.def(
      "simulate",
      [](const py::object& cfg) {
        RunConfig rc = run_config(cfg);
        const ExperimentConfig& c = rc.experiment;
        std::vector<double> all;
        std::size_t steps = 0, N = c.simulate.N;
        {
          py::gil_scoped_release release;
          simulate(c.params, c.init, c.system, c.simulate.N, c.simulate.M, c.simulate.n_steps, c.seed,
                   [&](const ParticleEnsemble& e, const MixtureField&) {
                     all.insert(all.end(), e.positions.begin(), e.positions.end());
                     ++steps;
                   });
        }
        const int d = c.params.dim;
        Array out(std::vector<py::ssize_t>{py::ssize_t(steps), py::ssize_t(N), d});
        std::copy(all.begin(), all.end(), out.mutable_data());
        return out;
      },
      py::arg("config") = py::none(), "Particle positions with shape (n_steps + 1, N, dim).");

  m.def(
      "limit_trajectory",
      [](const py::object& cfg, long n_steps) {
        RunConfig rc = run_config(cfg);
        const ExperimentConfig& c = rc.experiment;
        LimitTrajectory t;
        {
          py::gil_scoped_release release;
          t = run_limit(c.params, c.init, n_steps, c.limit);
        }
        py::list out;
        for (const auto& s : t.states) out.append(to_array(s.mu.points, s.mu.dim));
        return out;
      },
      py::arg("config") = py::none(), py::arg("n_steps") = 10, "Support points of mu_0 .. mu_n for the limit system.");

  m.def(
      "run_experiment",
      [](const std::string& name, const py::object& cfg) {
        RunConfig rc = run_config(cfg);
        const ExperimentConfig& c = rc.experiment;
        ExperimentResult r;
        {
          py::gil_scoped_release release;
          if (name == "rates") r = run_convergence_rate(c);
          else if (name == "contract") r = run_contraction(c);
          else if (name == "chaos") r = run_chaos(c);
          else if (name == "concentrate") r = run_concentration(c);
          else if (name == "couple") r = run_coupling_check(c);
          else if (name == "moments") r = run_moment_monitor(c);
          else if (name == "cltbound") r = check_kernel_clt_bound(c);
          else throw InputError("unknown experiment " + name);
        }
        return result_dict(r, c);
      },
      py::arg("name"), py::arg("config") = py::none(),
      "Run rates, contract, chaos, concentrate, couple, moments or cltbound.");

  m.def("set_threads", &set_threads, py::arg("n"));
  m.def("threads", &threads);
}
