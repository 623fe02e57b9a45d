#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mflq/problem.hpp"

namespace mflq::oracle {

// Adapted random sequences on the finite probability tree: one root per
// initial atom, then a +/-1 branch per step with probability 1/2 each. A
// node at time k and depth d is (atom, history), history encoded as d bits
// appended least-significant-first (bit 0 <-> +1 at the newest step). The
// probability of a node is atom_prob / 2^d.
struct TreeProcess {
  int start = 0;            // time index of values[0]
  std::vector<int> depths;  // branching depth per stored time
  // values[t] has one column per node: column index = atom * 2^depth + h.
  std::vector<Eigen::MatrixXd> values;

  int times() const { return static_cast<int>(values.size()); }
  const Eigen::MatrixXd& at(int k) const {
    return values[static_cast<std::size_t>(k - start)];
  }
  int depth_at(int k) const { return depths[static_cast<std::size_t>(k - start)]; }
};

// Guard on the stacked control dimension of the quadratic model.
inline constexpr int kStackedDimGuard = 20000;
// Optimality certification thresholds.
inline constexpr double kResidualTol = 1e-8;
inline constexpr double kEigTol = 1e-9;

int control_depth(const ProblemData& p, int t);
long long nodes_at_depth(const ProblemData& p, int depth);
double node_weight(const ProblemData& p, int atom, int depth);

// Per-time stacked control dimension (time-major, node-major, component-minor).
int stacked_dimension(const ProblemData& p);

TreeProcess zero_control(const ProblemData& p);
double expectation_weighted(const ProblemData& p, const Eigen::MatrixXd& vals, int depth,
                            Eigen::VectorXd* out);

// Exact forward solution of the state equation; mean-field couplings are the
// exact node-weighted means. Throws on shape mismatch.
TreeProcess rollout(const ProblemData& p, const TreeProcess& u);

// Probability-weighted evaluation of the cost along the given control.
double exact_cost(const ProblemData& p, const TreeProcess& u);
double exact_cost(const ProblemData& p, const TreeProcess& u, const TreeProcess& x);

// Squared norm E sum_k |u_k|^2 and distance in that norm.
double l2_norm_sq(const ProblemData& p, const TreeProcess& u);
double l2_dist(const ProblemData& p, const TreeProcess& a, const TreeProcess& b);

// Backward costate pass; conditional expectations are realized exactly on the
// tree (averages over the trailing branches, sign-weighted for the noise
// factor).
TreeProcess fbsde_backward(const ProblemData& p, const TreeProcess& u,
                           const TreeProcess& x);

// Derivative of the cost at u in the direction pairing of the tree inner
// product, one vector per control node (factor 2 included).
TreeProcess cost_gradient(const ProblemData& p, const TreeProcess& u,
                          const TreeProcess& x, const TreeProcess& y);

// Max norm over steps and nodes of the first-order optimality expression
// (the gradient halved).
double stationarity_residual(const ProblemData& p, const TreeProcess& u);

// Dense quadratic form of the cost over stacked controls in the L2 geometry
// of the admissible set: J(u) = u_hat' M u_hat + d' u_hat + c0 with
// u_hat = W^(1/2) u_raw.
struct QuadraticModel {
  Eigen::MatrixXd M;       // symmetric, stacked dim
  Eigen::VectorXd d;       // gradient at u = 0, same geometry
  double c0 = 0.0;         // cost at u = 0
  Eigen::VectorXd sqrt_w;  // coordinate scaling between raw and L2 frames

  int dim() const { return static_cast<int>(sqrt_w.size()); }
  double evaluate(const Eigen::VectorXd& u_raw) const;
};

QuadraticModel assemble_quadratic(const ProblemData& p);

Eigen::VectorXd stack_control(const ProblemData& p, const TreeProcess& u);
TreeProcess unstack_control(const ProblemData& p, const Eigen::VectorXd& raw);

struct ExactSolution {
  enum class Status {
    unique,          // positive definite quadratic, unique minimizer
    min_norm,        // semidefinite, gradient inside the range: attained
    unbounded_below  // infimum is -infinity
  };
  Status status = Status::unbounded_below;
  double value = 0.0;
  double min_eig = 0.0;
  double gradient_range_residual = 0.0;
  TreeProcess minimizer;  // empty when unbounded
  std::string status_name() const;
};

ExactSolution solve_exact(const ProblemData& p);

// Closed-loop rollout of u_k = Theta_k (x_k - E x_k) + ThetaBar_k E x_k + v_k.
// Returns the induced control and state processes.
std::pair<TreeProcess, TreeProcess> induce_control(
    const ProblemData& p, const std::vector<Eigen::MatrixXd>& Theta,
    const std::vector<Eigen::MatrixXd>& ThetaBar, const std::vector<Eigen::VectorXd>& v);

}  // namespace mflq::oracle
