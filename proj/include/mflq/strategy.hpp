#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mflq/affine.hpp"
#include "mflq/moments.hpp"
#include "mflq/oracle.hpp"
#include "mflq/problem.hpp"
#include "mflq/riccati.hpp"

namespace mflq::strategy {

// Scan thresholds.
inline constexpr double kDivergenceCap = 1e8;
inline constexpr double kNormCap = 1e8;
inline constexpr double kCauchyTol = 1e-7;
inline constexpr int kStabilizationWindow = 5;
inline constexpr double kStabilizationTol = 1e-6;

struct ValueReport {
  double value = 0.0;
  double quad_deviation = 0.0;  // E <P_l (xi - E xi), xi - E xi>
  double quad_mean = 0.0;       // <Pi_l E xi, E xi>
  double linear = 0.0;          // 2 eta_l' E xi
  double constant = 0.0;        // accumulated inhomogeneous terms
};

struct SynthesisOutcome {
  bool solvable = false;
  std::string failure_reason;  // empty when solvable
  moments::ClosedLoopLaw law;
  ValueReport value;
  riccati::RiccatiSolution gre;
  riccati::RegularityVerdict verdict;
  affine::AffineSolution affine;
};

// Full pipeline: backward Riccati pass, regularity classification, affine
// pass, feedback synthesis. Unsolvable outcomes name the failing condition.
SynthesisOutcome synthesize_closed_loop(const ProblemData& p);

ValueReport value_at(const ProblemData& p, const riccati::RiccatiSolution& sol,
                     const affine::AffineSolution& aff);

struct MinimizingStep {
  double eps = 0.0;
  moments::ClosedLoopLaw law;
  oracle::TreeProcess control;  // closed loop rolled out on the noise tree
  double cost = 0.0;            // exact cost of the control
  double l2_norm_sq = 0.0;
  double gain_sum_sq = 0.0;     // sum_k ||Theta||_F^2 + ||ThetaBar||_F^2
  bool singular = false;        // regularized recursion hit a singular weight
};

// One member of the regularized family: gains and offsets from the
// eps-shifted backward passes, rolled forward exactly on the tree.
MinimizingStep minimizing_sequence(const ProblemData& p, double eps);

std::vector<double> geometric_schedule(double eps0 = 1.0, int steps = 40);

struct FinitenessScan {
  enum class Verdict { finite, infinite, undetermined };
  Verdict verdict = Verdict::undetermined;
  std::vector<double> eps;
  std::vector<double> p_min_eig;   // min_eig(P^eps_l)
  std::vector<double> pi_min_eig;  // min_eig(Pi^eps_l)
  bool convexity_violated = false; // some eps-weight fell below its margin
  std::optional<int> violation_step;
  std::string verdict_name() const;
};

// Bounded-below test of the regularized family at the problem's initial
// time. A control weight falling below its eps margin certifies a convexity
// failure, which settles the verdict as infinite.
FinitenessScan finiteness_scan(const ProblemData& p, const std::vector<double>& schedule);

struct OpenLoopDetection {
  enum class Verdict { solvable, unsolvable, undetermined };
  Verdict verdict = Verdict::undetermined;
  std::vector<double> eps;
  std::vector<double> cost;
  std::vector<double> l2_norm;       // sqrt of the exact squared norm
  std::vector<double> gain_sum_sq;
  std::vector<double> cauchy;        // successive L2 distances
  double gain_sup = 0.0;             // sup over eps of gain_sum_sq
  oracle::TreeProcess limit;         // last iterate when converged
  double limit_cost = 0.0;
  double stationarity = 0.0;         // certificate residual of the limit
  bool certified = false;
  std::string verdict_name() const;
};

// Cauchy test on the regularized controls; the last iterate is returned and
// certified through the first-order optimality residual on the tree.
OpenLoopDetection detect_open_loop(const ProblemData& p,
                                   const std::vector<double>& schedule);

struct SolvabilityReport {
  FinitenessScan finiteness;
  std::optional<OpenLoopDetection> open_loop;  // absent when finiteness gates it
  SynthesisOutcome closed_loop;
};

// Orchestrates the scans and the synthesis; the open-loop detector only runs
// when the finiteness verdict allows it.
SolvabilityReport solvability_report(const ProblemData& p,
                                     const std::vector<double>& schedule);

}  // namespace mflq::strategy
