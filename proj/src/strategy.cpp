#include "mflq/strategy.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "mflq/matnum.hpp"

namespace mflq::strategy {

namespace {

double min_eig_or_scalar(const Eigen::MatrixXd& m) { return matnum::min_eigenvalue(m); }

moments::ClosedLoopLaw law_from(const riccati::RiccatiSolution& sol,
                                const affine::AffineSolution& aff) {
  moments::ClosedLoopLaw law;
  law.Theta = sol.Theta;
  law.ThetaBar = sol.ThetaBar;
  law.v = aff.v;
  return law;
}

}  // namespace

std::string FinitenessScan::verdict_name() const {
  switch (verdict) {
    case Verdict::finite: return "finite";
    case Verdict::infinite: return "infinite";
    case Verdict::undetermined: return "undetermined";
  }
  return "undetermined";
}

std::string OpenLoopDetection::verdict_name() const {
  switch (verdict) {
    case Verdict::solvable: return "solvable";
    case Verdict::unsolvable: return "unsolvable";
    case Verdict::undetermined: return "undetermined";
  }
  return "undetermined";
}

ValueReport value_at(const ProblemData& p, const riccati::RiccatiSolution& sol,
                     const affine::AffineSolution& aff) {
  const int T = p.horizon();
  ValueReport report;

  const Eigen::VectorXd mean = p.initial.mean();
  const Eigen::MatrixXd& P0 = sol.P[0];
  const Eigen::MatrixXd& Pi0 = sol.Pi[0];

  double quad_dev = 0.0;
  for (const auto& atom : p.initial.atoms) {
    const Eigen::VectorXd d = atom.value - mean;
    quad_dev += atom.prob * d.dot(P0 * d);
  }
  report.quad_deviation = quad_dev;
  report.quad_mean = mean.dot(Pi0 * mean);
  report.linear = 2.0 * aff.eta[0].dot(mean);

  double constant = 0.0;
  for (int t = 0; t < T; ++t) {
    const StageDynamics& d = p.dyn(t);
    const Eigen::VectorXd& eta_next = aff.eta[static_cast<std::size_t>(t + 1)];
    const Eigen::VectorXd& zeta = aff.zeta[static_cast<std::size_t>(t)];
    const Eigen::MatrixXd upsbar_pinv =
        matnum::pinv(sol.UpsBar[static_cast<std::size_t>(t)]);
    constant += 2.0 * eta_next.dot(d.b) +
                d.b.dot(sol.Pi[static_cast<std::size_t>(t + 1)] * d.b) +
                d.sigma.dot(sol.P[static_cast<std::size_t>(t + 1)] * d.sigma) -
                zeta.dot(upsbar_pinv * zeta);
  }
  report.constant = constant;
  report.value = report.quad_deviation + report.quad_mean + report.linear + report.constant;
  return report;
}

SynthesisOutcome synthesize_closed_loop(const ProblemData& p) {
  SynthesisOutcome out;
  out.gre = riccati::solve_gre(p);
  out.verdict = riccati::classify(out.gre);
  out.affine = affine::solve_lre(p, out.gre);

  if (!out.verdict.regular()) {
    std::string reason = "no regular backward solution:";
    for (const auto& f : out.verdict.failures) {
      reason += " [k=" + std::to_string(f.k) + " " + f.condition + "]";
      if (out.verdict.failures.size() > 4) break;
    }
    out.failure_reason = reason;
    return out;
  }
  if (!out.affine.certifying) {
    out.failure_reason =
        "affine offset outside the range of the mean control weight; "
        "no closed-loop strategy exists";
    return out;
  }

  out.solvable = true;
  out.law = law_from(out.gre, out.affine);
  out.value = value_at(p, out.gre, out.affine);
  return out;
}

MinimizingStep minimizing_sequence(const ProblemData& p, double eps) {
  MinimizingStep step;
  step.eps = eps;
  riccati::RiccatiSolution sol = riccati::solve_gre_eps(p, eps);
  step.singular = !sol.singular_steps.empty();
  const affine::AffineSolution aff = affine::solve_lre(p, sol);

  step.law = law_from(sol, aff);
  for (int t = 0; t < p.horizon(); ++t) {
    step.gain_sum_sq += step.law.Theta[static_cast<std::size_t>(t)].squaredNorm() +
                        step.law.ThetaBar[static_cast<std::size_t>(t)].squaredNorm();
  }

  auto [control, states] =
      oracle::induce_control(p, step.law.Theta, step.law.ThetaBar, step.law.v);
  step.cost = oracle::exact_cost(p, control, states);
  step.l2_norm_sq = oracle::l2_norm_sq(p, control);
  step.control = std::move(control);
  return step;
}

std::vector<double> geometric_schedule(double eps0, int steps) {
  if (!(eps0 > 0.0) || steps < 1) {
    throw std::invalid_argument("geometric_schedule: eps0 > 0 and steps >= 1 required");
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(steps));
  double eps = eps0;
  for (int i = 0; i < steps; ++i) {
    out.push_back(eps);
    eps *= 0.5;
  }
  return out;
}

FinitenessScan finiteness_scan(const ProblemData& p, const std::vector<double>& schedule) {
  for (std::size_t i = 1; i < schedule.size(); ++i) {
    if (!(schedule[i] < schedule[i - 1]) || !(schedule[i] > 0.0)) {
      throw std::invalid_argument("finiteness_scan: schedule must be strictly decreasing and positive");
    }
  }

  FinitenessScan scan;
  for (std::size_t j = 0; j < schedule.size(); ++j) {
    const double eps = schedule[j];
    const riccati::RiccatiSolution sol = riccati::solve_gre_eps(p, eps);

    // Under a convex homogeneous cost the regularized weights keep an eps
    // margin; a violation certifies that no convex reading exists and the
    // value is unbounded below.
    const double margin = eps - std::max(1e-10, 1e-8 * eps);
    bool violated = !sol.singular_steps.empty();
    for (int t = 0; t < p.horizon() && !violated; ++t) {
      if (min_eig_or_scalar(sol.Ups[static_cast<std::size_t>(t)]) < margin ||
          min_eig_or_scalar(sol.UpsBar[static_cast<std::size_t>(t)]) < margin) {
        violated = true;
      }
    }
    scan.eps.push_back(eps);
    scan.p_min_eig.push_back(min_eig_or_scalar(sol.P[0]));
    scan.pi_min_eig.push_back(min_eig_or_scalar(sol.Pi[0]));
    if (violated) {
      scan.convexity_violated = true;
      scan.violation_step = static_cast<int>(j);
      scan.verdict = FinitenessScan::Verdict::infinite;
      return scan;
    }
  }

  double low = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < scan.eps.size(); ++j) {
    low = std::min(low, std::min(scan.p_min_eig[j], scan.pi_min_eig[j]));
  }
  if (low < -kDivergenceCap) {
    scan.verdict = FinitenessScan::Verdict::infinite;
    return scan;
  }

  const int W = kStabilizationWindow;
  if (static_cast<int>(scan.eps.size()) >= W) {
    auto window_spread = [&](const std::vector<double>& trace) {
      double lo = trace[trace.size() - static_cast<std::size_t>(W)];
      double hi = lo;
      for (std::size_t j = trace.size() - static_cast<std::size_t>(W); j < trace.size(); ++j) {
        lo = std::min(lo, trace[j]);
        hi = std::max(hi, trace[j]);
      }
      return hi - lo;
    };
    if (window_spread(scan.p_min_eig) <= kStabilizationTol &&
        window_spread(scan.pi_min_eig) <= kStabilizationTol) {
      scan.verdict = FinitenessScan::Verdict::finite;
      return scan;
    }
  }
  scan.verdict = FinitenessScan::Verdict::undetermined;
  return scan;
}

OpenLoopDetection detect_open_loop(const ProblemData& p,
                                   const std::vector<double>& schedule) {
  OpenLoopDetection det;
  std::optional<oracle::TreeProcess> previous;
  oracle::TreeProcess last;
  double last_cost = 0.0;

  for (double eps : schedule) {
    MinimizingStep step = minimizing_sequence(p, eps);
    det.eps.push_back(eps);
    det.cost.push_back(step.cost);
    det.l2_norm.push_back(std::sqrt(step.l2_norm_sq));
    det.gain_sum_sq.push_back(step.gain_sum_sq);
    det.gain_sup = std::max(det.gain_sup, step.gain_sum_sq);
    if (previous) {
      det.cauchy.push_back(oracle::l2_dist(p, step.control, *previous));
    }
    previous = step.control;
    last = std::move(step.control);
    last_cost = step.cost;

    if (det.l2_norm.back() > kNormCap) {
      det.verdict = OpenLoopDetection::Verdict::unsolvable;
      return det;
    }
  }

  const int W = kStabilizationWindow;
  bool cauchy_tail = static_cast<int>(det.cauchy.size()) >= W;
  if (cauchy_tail) {
    for (std::size_t j = det.cauchy.size() - static_cast<std::size_t>(W);
         j < det.cauchy.size(); ++j) {
      if (det.cauchy[j] > kCauchyTol) {
        cauchy_tail = false;
        break;
      }
    }
  }
  if (!cauchy_tail) {
    det.verdict = OpenLoopDetection::Verdict::undetermined;
    return det;
  }

  det.limit = std::move(last);
  det.limit_cost = last_cost;
  det.stationarity = oracle::stationarity_residual(p, det.limit);
  det.certified = det.stationarity <= oracle::kResidualTol;
  det.verdict = det.certified ? OpenLoopDetection::Verdict::solvable
                              : OpenLoopDetection::Verdict::undetermined;
  return det;
}

SolvabilityReport solvability_report(const ProblemData& p,
                                     const std::vector<double>& schedule) {
  SolvabilityReport report;
  report.finiteness = finiteness_scan(p, schedule);
  if (report.finiteness.verdict == FinitenessScan::Verdict::finite) {
    report.open_loop = detect_open_loop(p, schedule);
  }
  report.closed_loop = synthesize_closed_loop(p);
  return report;
}

}  // namespace mflq::strategy
