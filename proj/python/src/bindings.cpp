#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "carbonmfg/commands.hpp"

namespace py = pybind11;
using namespace carbonmfg;

namespace {

py::array_t<double> to_array(std::span<const Vec5> xs) {
  py::array_t<double> out({static_cast<py::ssize_t>(xs.size()), py::ssize_t{kStateDim}});
  auto view = out.mutable_unchecked<2>();
  for (std::size_t k = 0; k < xs.size(); ++k) {
    for (int c = 0; c < kStateDim; ++c) view(static_cast<py::ssize_t>(k), c) = xs[k](c);
  }
  return out;
}

py::array_t<double> to_array(const std::vector<double>& xs) {
  return py::array_t<double>(static_cast<py::ssize_t>(xs.size()), xs.data());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Carbon-tax mean-field producers and the Stackelberg regulator.";

  py::register_exception<SolverError>(m, "SolverError", PyExc_RuntimeError);

  py::class_<num::TimeGrid>(m, "TimeGrid")
      .def(py::init<double, int>(), py::arg("horizon"), py::arg("n_steps"))
      .def_property_readonly("horizon", &num::TimeGrid::horizon)
      .def_property_readonly("n_steps", &num::TimeGrid::n_steps)
      .def_property_readonly("dt", &num::TimeGrid::dt);

  py::class_<ProducerParams>(m, "ProducerParams")
      .def(py::init<>())
      .def_readwrite("c1", &ProducerParams::c1)
      .def_readwrite("c3", &ProducerParams::c3)
      .def_readwrite("p1", &ProducerParams::p1)
      .def_readwrite("p2", &ProducerParams::p2)
      .def_readwrite("rho0", &ProducerParams::rho0)
      .def_readwrite("rho1", &ProducerParams::rho1)
      .def_readwrite("kappa1", &ProducerParams::kappa1)
      .def_readwrite("kappa2", &ProducerParams::kappa2)
      .def_readwrite("alpha", &ProducerParams::alpha)
      .def_readwrite("theta", &ProducerParams::theta)
      .def_readwrite("sigma0", &ProducerParams::sigma0)
      .def_readwrite("sigma1", &ProducerParams::sigma1)
      .def_readwrite("delta", &ProducerParams::delta)
      .def_readwrite("demand_base", &ProducerParams::demand_base)
      .def_readwrite("demand_amplitude", &ProducerParams::demand_amplitude)
      .def_readwrite("demand_frequency", &ProducerParams::demand_frequency)
      .def_readwrite("re_lower", &ProducerParams::re_lower)
      .def_readwrite("re_upper", &ProducerParams::re_upper)
      .def("validate", &ProducerParams::validate);

  m.def("baseline_producer_params", &baseline_producer_params, py::arg("dt"));

  py::class_<RegulatorPolicy>(m, "RegulatorPolicy")
      .def(py::init([](double tau, double c2) { return RegulatorPolicy{tau, c2}; }),
           py::arg("tau"), py::arg("c2"))
      .def_readwrite("tau", &RegulatorPolicy::tau)
      .def_readwrite("c2", &RegulatorPolicy::c2);

  py::class_<EquilibriumResult>(m, "EquilibriumResult")
      .def_property_readonly("kind", [](const EquilibriumResult& e) { return to_string(e.kind); })
      .def_readonly("r_e_hat", &EquilibriumResult::r_e_hat)
      .def_readonly("cost_hat", &EquilibriumResult::cost_hat)
      .def_readonly("iterations", &EquilibriumResult::iterations)
      .def_property_readonly("status", [](const EquilibriumResult& e) { return to_string(e.status); })
      .def_property_readonly("converged", &EquilibriumResult::converged)
      .def_property_readonly("mean_field", [](const EquilibriumResult& e) { return to_array(e.mean_field); })
      .def_property_readonly("xbar", [](const EquilibriumResult& e) { return to_array(e.solution.xbar); })
      .def_property_readonly("control", [](const EquilibriumResult& e) { return to_array(e.control); })
      .def_readonly("residuals", &EquilibriumResult::residuals);

  m.def("social_opt",
        [](const ProducerParams& p, const RegulatorPolicy& pol, const num::TimeGrid& g) {
          py::gil_scoped_release release;
          return social_opt(p, pol, g);
        },
        py::arg("params"), py::arg("policy"), py::arg("grid"));
  m.def("nash_eq",
        [](const ProducerParams& p, const RegulatorPolicy& pol, const num::TimeGrid& g) {
          py::gil_scoped_release release;
          return nash_eq(p, pol, g);
        },
        py::arg("params"), py::arg("policy"), py::arg("grid"));
  m.def("price_of_anarchy",
        [](const ProducerParams& p, const RegulatorPolicy& pol, const num::TimeGrid& g) {
          py::gil_scoped_release release;
          return price_of_anarchy(p, pol, g);
        },
        py::arg("params"), py::arg("policy"), py::arg("grid"));

  m.def("riccati",
        [](const ProducerParams& p, const RegulatorPolicy& pol, double r_e, const num::TimeGrid& g) {
          const auto sol = solve_riccati(StateSpace(p, pol, r_e, g));
          py::array_t<double> out({static_cast<py::ssize_t>(sol.eta.size()), py::ssize_t{kStateDim},
                                   py::ssize_t{kStateDim}});
          auto view = out.mutable_unchecked<3>();
          for (std::size_t k = 0; k < sol.eta.size(); ++k) {
            for (int i = 0; i < kStateDim; ++i) {
              for (int j = 0; j < kStateDim; ++j) view(static_cast<py::ssize_t>(k), i, j) = sol.eta[k](i, j);
            }
          }
          return out;
        },
        py::arg("params"), py::arg("policy"), py::arg("r_e"), py::arg("grid"),
        "Riccati solution eta at every node, shape (n_nodes, 5, 5).");

  m.def("config_hash", [](const std::string& path) { return config_hash(load_config(path)); },
        py::arg("path"));

  m.def("run",
        [](const std::string& command, const std::string& config, std::optional<std::string> out,
           int workers, std::optional<std::uint64_t> seed) {
          const auto cmd = parse_command(command);
          if (!cmd) throw py::value_error("unknown command: " + command);
          RunOptions opt;
          opt.command = *cmd;
          opt.config_path = config;
          opt.out_dir = std::move(out);
          opt.workers = workers;
          opt.seed = seed;
          std::ostringstream log, err;
          int code = 0;
          {
            py::gil_scoped_release release;
            code = run_command(opt, log, err);
          }
          return py::make_tuple(code, log.str(), err.str());
        },
        py::arg("command"), py::arg("config"), py::arg("out") = py::none(), py::arg("workers") = 1,
        py::arg("seed") = py::none(),
        "Run a subcommand; returns (exit_code, log, errors).");
}
