#pragma once

#include <vector>

#include "mflq/problem.hpp"
#include "mflq/riccati.hpp"

namespace mflq::affine {

// Backward affine companion of the Riccati pass:
//   eta_k  = (C+Cbar)'P_{k+1} sigma + (A+Abar)'(Pi_{k+1} b + eta_{k+1})
//            - Hbar' UpsBar^+ zeta_k + q + qbar,         eta_N = g + gbar,
//   zeta_k = (D+Dbar)'P_{k+1} sigma + (B+Bbar)'(Pi_{k+1} b + eta_{k+1})
//            + rho + rhobar,
//   v_k    = -UpsBar^+ zeta_k.
// The recursion never aborts; a zeta outside the range of UpsBar only marks
// the solution non-certifying.
struct AffineSolution {
  std::vector<Eigen::VectorXd> eta;   // T + 1 entries
  std::vector<Eigen::VectorXd> zeta;  // T entries
  std::vector<Eigen::VectorXd> v;     // T entries
  std::vector<bool> range_ok;         // zeta_k in range(UpsBar_k)
  std::vector<double> range_residual;
  bool certifying = true;             // all range checks passed
};

AffineSolution solve_lre(const ProblemData& p, const riccati::RiccatiSolution& sol);

}  // namespace mflq::affine
