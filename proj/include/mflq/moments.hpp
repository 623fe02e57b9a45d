#pragma once

#include <cstdint>
#include <vector>

#include "mflq/problem.hpp"

namespace mflq::moments {

// Affine feedback law u_k = Theta_k (x_k - E x_k) + ThetaBar_k E x_k + v_k.
struct ClosedLoopLaw {
  std::vector<Eigen::MatrixXd> Theta;     // m x n per step
  std::vector<Eigen::MatrixXd> ThetaBar;  // m x n per step
  std::vector<Eigen::VectorXd> v;         // m per step (empty = zero offsets)
};

struct MomentState {
  std::vector<Eigen::VectorXd> mean;    // m_k = E x_k, T + 1 entries
  std::vector<Eigen::MatrixXd> second;  // X_k = E x_k x_k'
  std::vector<Eigen::MatrixXd> outer;   // Y_k = m_k m_k'
  Eigen::MatrixXd central(int t) const {
    return second[static_cast<std::size_t>(t)] - outer[static_cast<std::size_t>(t)];
  }
};

// Exact first and second moments under the law; uses only the zero-mean,
// unit-variance property of the noise, so the output is identical for the
// rademacher and gaussian models.
MomentState propagate(const ProblemData& p, const ClosedLoopLaw& law);

// Exact cost of the affine law via the moment recursion.
double closed_loop_cost(const ProblemData& p, const ClosedLoopLaw& law);

struct SimulationResult {
  double estimate = 0.0;
  double std_error = 0.0;
  long paths = 0;
};

// Seeded sample-mean cost. Mean-field couplings are taken from the exact
// moment recursion, not the sample. Per-path streams are derived from
// (seed, path index); the reduction is pairwise and order-independent, so
// the result does not depend on the worker count.
SimulationResult simulate(const ProblemData& p, const ClosedLoopLaw& law, long paths,
                          int threads = 0);

}  // namespace mflq::moments
