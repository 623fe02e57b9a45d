#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <vector>

#include "mflq/affine.hpp"
#include "mflq/moments.hpp"
#include "mflq/oracle.hpp"
#include "mflq/problem.hpp"
#include "mflq/riccati.hpp"
#include "mflq/strategy.hpp"

namespace py = pybind11;

namespace {

using Matrix = std::vector<std::vector<double>>;

Matrix to_nested(const Eigen::MatrixXd& m) {
  Matrix out(static_cast<std::size_t>(m.rows()),
             std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
    }
  }
  return out;
}

std::vector<double> to_list(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

std::vector<Matrix> seq_to_nested(const std::vector<Eigen::MatrixXd>& seq) {
  std::vector<Matrix> out;
  out.reserve(seq.size());
  for (const auto& m : seq) out.push_back(to_nested(m));
  return out;
}

py::dict riccati_dict(const mflq::riccati::RiccatiSolution& sol,
                      const mflq::riccati::RegularityVerdict& verdict) {
  py::dict d;
  d["P"] = seq_to_nested(sol.P);
  d["Pi"] = seq_to_nested(sol.Pi);
  d["Theta"] = seq_to_nested(sol.Theta);
  d["ThetaBar"] = seq_to_nested(sol.ThetaBar);
  d["verdict"] = verdict.kind_name();
  d["alpha"] = verdict.alpha;
  return d;
}

}  // namespace

PYBIND11_MODULE(mflq, m) {
  m.doc() = "Finite-horizon mean-field LQ solver with exact tree verification";
  m.attr("__version__") = "0.1.0";

  py::class_<mflq::ProblemData>(m, "Problem")
      .def_static("load", &mflq::load_problem, py::arg("path"))
      .def_static("loads", &mflq::parse_problem, py::arg("json_text"))
      .def_property_readonly("n", [](const mflq::ProblemData& p) { return p.dims.n; })
      .def_property_readonly("m", [](const mflq::ProblemData& p) { return p.dims.m; })
      .def_property_readonly("l", [](const mflq::ProblemData& p) { return p.dims.l; })
      .def_property_readonly("N", [](const mflq::ProblemData& p) { return p.dims.N; })
      .def_property_readonly("homogeneous", &mflq::ProblemData::homogeneous)
      .def("validate",
           [](const mflq::ProblemData& p) {
             std::vector<std::string> out;
             for (const auto& diag : mflq::validate(p)) out.push_back(diag.format());
             return out;
           })
      .def("to_json", &mflq::problem_to_json);

  m.def(
      "solve_riccati",
      [](const mflq::ProblemData& p) {
        const auto sol = mflq::riccati::solve_gre(p);
        return riccati_dict(sol, mflq::riccati::classify(sol));
      },
      py::arg("problem"), "Backward pass with pseudo-inverses plus classification");

  m.def(
      "solve_riccati_eps",
      [](const mflq::ProblemData& p, double eps) {
        const auto sol = mflq::riccati::solve_gre_eps(p, eps);
        return riccati_dict(sol, mflq::riccati::classify(sol));
      },
      py::arg("problem"), py::arg("eps"), "Regularized backward pass");

  m.def(
      "synthesize",
      [](const mflq::ProblemData& p) {
        const auto outcome = mflq::strategy::synthesize_closed_loop(p);
        py::dict d;
        d["solvable"] = outcome.solvable;
        if (outcome.solvable) {
          d["Theta"] = seq_to_nested(outcome.law.Theta);
          d["ThetaBar"] = seq_to_nested(outcome.law.ThetaBar);
          std::vector<std::vector<double>> offsets;
          for (const auto& v : outcome.law.v) offsets.push_back(to_list(v));
          d["v"] = offsets;
          d["value"] = outcome.value.value;
        } else {
          d["reason"] = outcome.failure_reason;
        }
        d["regularity"] = outcome.verdict.kind_name();
        d["alpha"] = outcome.verdict.alpha;
        return d;
      },
      py::arg("problem"), "Closed-loop synthesis with value decomposition");

  m.def(
      "oracle_solve",
      [](const mflq::ProblemData& p) {
        const auto exact = mflq::oracle::solve_exact(p);
        py::dict d;
        d["status"] = exact.status_name();
        d["value"] = exact.value;
        d["min_eig"] = exact.min_eig;
        return d;
      },
      py::arg("problem"), "Exact optimum over the stacked noise tree");

  m.def(
      "finiteness",
      [](const mflq::ProblemData& p, double eps0, int steps) {
        const auto scan =
            mflq::strategy::finiteness_scan(p, mflq::strategy::geometric_schedule(eps0, steps));
        py::dict d;
        d["verdict"] = scan.verdict_name();
        d["eps"] = scan.eps;
        d["p_min_eig"] = scan.p_min_eig;
        d["pi_min_eig"] = scan.pi_min_eig;
        return d;
      },
      py::arg("problem"), py::arg("eps0") = 1.0, py::arg("steps") = 40,
      "Bounded-below scan of the regularized family");

  m.def(
      "open_loop",
      [](const mflq::ProblemData& p, double eps0, int steps) {
        const auto report = mflq::strategy::solvability_report(
            p, mflq::strategy::geometric_schedule(eps0, steps));
        py::dict d;
        d["finiteness"] = report.finiteness.verdict_name();
        if (report.open_loop) {
          d["verdict"] = report.open_loop->verdict_name();
          d["cost"] = report.open_loop->cost;
          d["l2_norm"] = report.open_loop->l2_norm;
          d["limit_cost"] = report.open_loop->limit_cost;
          d["stationarity_residual"] = report.open_loop->stationarity;
        } else {
          d["verdict"] = "not attempted";
        }
        return d;
      },
      py::arg("problem"), py::arg("eps0") = 1.0, py::arg("steps") = 40,
      "Minimizing-sequence open-loop detector");

  m.def(
      "simulate",
      [](const mflq::ProblemData& p, long paths) {
        const auto outcome = mflq::strategy::synthesize_closed_loop(p);
        if (!outcome.solvable) {
          throw std::runtime_error("synthesis failed: " + outcome.failure_reason);
        }
        const auto sim = mflq::moments::simulate(p, outcome.law, paths);
        py::dict d;
        d["exact"] = mflq::moments::closed_loop_cost(p, outcome.law);
        d["estimate"] = sim.estimate;
        d["std_error"] = sim.std_error;
        return d;
      },
      py::arg("problem"), py::arg("paths"),
      "Monte Carlo check of the synthesized strategy");
}
