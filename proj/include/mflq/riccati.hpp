#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mflq/problem.hpp"

namespace mflq::riccati {

// Backward solution of the coupled recursion
//   P_k  = Q + A'P_{k+1}A + C'P_{k+1}C - H' Ups^+ H
//   Pi_k = Q + Qbar + (A+Abar)'Pi_{k+1}(A+Abar) + (C+Cbar)'P_{k+1}(C+Cbar)
//          - Hbar' UpsBar^+ Hbar
// with P_N = G, Pi_N = G + Gbar, where
//   Ups    = R + B'P_{k+1}B + D'P_{k+1}D
//   H      = B'P_{k+1}A + D'P_{k+1}C + S
//   UpsBar = R + Rbar + (B+Bbar)'Pi_{k+1}(B+Bbar) + (D+Dbar)'P_{k+1}(D+Dbar)
//   Hbar   = (B+Bbar)'Pi_{k+1}(A+Abar) + (D+Dbar)'P_{k+1}(C+Cbar) + S + Sbar.
// Sequences are indexed by t = k - l.
struct RiccatiSolution {
  int start = 0;                          // initial time l
  std::vector<Eigen::MatrixXd> P;         // T + 1 entries
  std::vector<Eigen::MatrixXd> Pi;        // T + 1 entries
  std::vector<Eigen::MatrixXd> Ups;       // T entries, m x m
  std::vector<Eigen::MatrixXd> UpsBar;    // T entries, m x m
  std::vector<Eigen::MatrixXd> H;         // T entries, m x n
  std::vector<Eigen::MatrixXd> Hbar;      // T entries, m x n
  std::vector<Eigen::MatrixXd> Theta;     // T entries, m x n, -Ups^+ H
  std::vector<Eigen::MatrixXd> ThetaBar;  // T entries, m x n, -UpsBar^+ Hbar
  double eps = 0.0;                       // regularization used (0 = none)
  // Steps where the regularized recursion hit a singular matrix and fell
  // back to the pseudo-inverse. Non-empty signals a convexity failure.
  std::vector<int> singular_steps;
};

struct RegularityVerdict {
  enum class Kind { strongly_regular, regular, irregular };
  Kind kind = Kind::irregular;
  // Largest uniform margin: min over k of min_eig(Ups_k), min_eig(UpsBar_k).
  double alpha = 0.0;

  struct Failure {
    int k = 0;
    std::string condition;  // which requirement failed
    double residual = 0.0;
  };
  std::vector<Failure> failures;

  // Per-step records, indexed by t = k - l.
  std::vector<double> ups_min_eig;
  std::vector<double> upsbar_min_eig;
  std::vector<double> range_residual;
  std::vector<double> rangebar_residual;
  std::vector<double> gain_norm;      // ||Theta_k||_F
  std::vector<double> gainbar_norm;   // ||ThetaBar_k||_F

  bool regular() const { return kind != Kind::irregular; }
  std::string kind_name() const;
};

// Plain backward recursion with pseudo-inverses. Always produces a sequence;
// regularity is a separate classification. Throws on non-finite values.
RiccatiSolution solve_gre(const ProblemData& p);

// Same recursion with R -> R + eps*I and R + Rbar -> R + Rbar + eps*I and
// true inverses expected. A singular step is recorded (pseudo-inverse
// fallback), not fatal.
RiccatiSolution solve_gre_eps(const ProblemData& p, double eps);

// Semidefiniteness, range-inclusion and gain-finiteness checks on every step.
RegularityVerdict classify(const RiccatiSolution& sol);

// Closed-loop cost-to-go under the fixed law
// u = Th (x - E x) + ThBar E x (deviation gain Th, mean gain ThBar):
//   P_k  = (A+B Th)'P_{k+1}(A+B Th) + (C+D Th)'P_{k+1}(C+D Th)
//          + Th'R Th + S'Th + Th'S + Q
//   Pi_k = (A+Abar+(B+Bbar)ThBar)'Pi_{k+1}(...)
//          + (C+Cbar+(D+Dbar)ThBar)'P_{k+1}(...)
//          + ThBar'(R+Rbar)ThBar + (S+Sbar)'ThBar + ThBar'(S+Sbar) + Q + Qbar
// with the same terminal data.
struct LyapunovSolution {
  std::vector<Eigen::MatrixXd> P;   // T + 1 entries
  std::vector<Eigen::MatrixXd> Pi;  // T + 1 entries
};

LyapunovSolution solve_lyapunov(const ProblemData& p,
                                const std::vector<Eigen::MatrixXd>& Theta,
                                const std::vector<Eigen::MatrixXd>& ThetaBar);

// Policy iteration: gain-free cost-to-go seed, then alternate exact gain
// improvement (true inverses) with closed-loop evaluation until the iterates
// stop moving. Intended for uniformly convex instances; a singular
// improvement step is reported as failure.
struct KleinmanResult {
  bool converged = false;
  std::optional<std::string> failure;
  int iterations = 0;
  RiccatiSolution solution;                        // gains and blocks at the fixed point
  std::vector<double> step_diffs;                  // max_k(|dP| + |dPi|) per iteration
  std::vector<std::vector<Eigen::MatrixXd>> P_iterates;   // includes the seed
  std::vector<std::vector<Eigen::MatrixXd>> Pi_iterates;
};

KleinmanResult kleinman_iterate(const ProblemData& p, int max_iters = 200,
                                double tol = 1e-12);

}  // namespace mflq::riccati
