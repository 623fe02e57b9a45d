#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mflq {

struct Dimensions {
  int n = 1;  // state dimension
  int m = 1;  // control dimension
  int l = 0;  // initial time
  int N = 1;  // terminal time
  int horizon() const { return N - l; }
};

// Stage coefficients of the controlled difference equation
//   x_{k+1} = A x_k + Abar E[x_k] + B u_k + Bbar E[u_k] + b
//           + (C x_k + Cbar E[x_k] + D u_k + Dbar E[u_k] + sigma) w_k.
struct StageDynamics {
  Eigen::MatrixXd A, Abar;  // n x n
  Eigen::MatrixXd B, Bbar;  // n x m
  Eigen::MatrixXd C, Cbar;  // n x n
  Eigen::MatrixXd D, Dbar;  // n x m
  Eigen::VectorXd b, sigma; // n
};

struct StageCost {
  Eigen::MatrixXd Q, Qbar;  // n x n, symmetric
  Eigen::MatrixXd S, Sbar;  // m x n
  Eigen::MatrixXd R, Rbar;  // m x m, symmetric
  Eigen::VectorXd q, qbar;  // n
  Eigen::VectorXd rho, rhobar;  // m
};

struct TerminalCost {
  Eigen::MatrixXd G, Gbar;  // n x n, symmetric
  Eigen::VectorXd g, gbar;  // n
};

struct InitialDistribution {
  struct Atom {
    Eigen::VectorXd value;
    double prob = 1.0;
  };
  std::vector<Atom> atoms;

  Eigen::VectorXd mean() const;
  Eigen::MatrixXd covariance() const;  // centered second moment
};

struct NoiseModel {
  enum class Kind { rademacher, gaussian };
  Kind kind = Kind::rademacher;
  std::uint64_t seed = 0;  // Monte Carlo only
};

struct InfoPattern {
  // predictable: u_k measurable w.r.t. sigma(xi, w_l..w_{k-1})
  // adapted:     u_k measurable w.r.t. sigma(xi, w_l..w_k)
  enum class Kind { predictable, adapted };
  Kind kind = Kind::predictable;
};

struct ProblemData {
  Dimensions dims;
  std::vector<StageDynamics> dynamics;  // length N - l
  std::vector<StageCost> cost;          // length N - l
  TerminalCost terminal;
  InitialDistribution initial;
  NoiseModel noise;
  InfoPattern info;

  int horizon() const { return dims.horizon(); }
  const StageDynamics& dyn(int t) const { return dynamics[static_cast<std::size_t>(t)]; }
  const StageCost& stage(int t) const { return cost[static_cast<std::size_t>(t)]; }
  bool homogeneous() const;

  // Copy with all inhomogeneous data (b, sigma, q, qbar, rho, rhobar, g, gbar)
  // zeroed; the initial distribution is kept.
  ProblemData homogeneous_part() const;
  // Same, and additionally every initial atom value set to zero.
  ProblemData homogeneous_zero_start() const;
};

struct Diagnostic {
  std::string field;
  std::optional<int> k;
  std::string message;
  std::string format() const;
};

class ProblemError : public std::runtime_error {
 public:
  enum class Kind { io, parse, shape, symmetry, invalid };
  ProblemError(Kind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Parses and validates the documented JSON format. Omitted keys default to
// zero matrices/vectors; matrices within the relative symmetry tolerance
// 1e-12 are symmetrized, anything beyond is an error.
ProblemData load_problem(const std::string& path);
ProblemData parse_problem(const std::string& json_text);

void save_problem(const ProblemData& p, const std::string& path);
std::string problem_to_json(const ProblemData& p);

// Empty iff every invariant holds. Never throws; each entry names the field,
// the time index where applicable, and the violated rule.
std::vector<Diagnostic> validate(const ProblemData& p);

// Convenience builder: zero problem of the given dimensions with a single
// deterministic zero initial atom.
ProblemData make_zero_problem(int n, int m, int l, int N);

}  // namespace mflq
