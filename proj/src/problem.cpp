#include "mflq/problem.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mflq/matnum.hpp"

namespace mflq {

namespace {

using nlohmann::ordered_json;

constexpr double kSymmetryTol = 1e-12;  // relative to the matrix max-norm
constexpr double kProbTol = 1e-12;

bool is_zero(const Eigen::MatrixXd& m) { return m.size() == 0 || m.isZero(0.0); }
bool is_zero(const Eigen::VectorXd& v) { return v.size() == 0 || v.isZero(0.0); }

double max_asymmetry(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return (m - m.transpose()).cwiseAbs().maxCoeff();
}

bool symmetric_within_tol(const Eigen::MatrixXd& m, double* asym = nullptr) {
  const double a = max_asymmetry(m);
  if (asym) *asym = a;
  const double scale = m.size() ? std::max(1.0, m.cwiseAbs().maxCoeff()) : 1.0;
  return a <= kSymmetryTol * scale;
}

Eigen::MatrixXd read_matrix(const ordered_json& j, const std::string& field, int k,
                            int rows, int cols) {
  if (!j.contains(field)) return Eigen::MatrixXd::Zero(rows, cols);
  const auto& value = j.at(field);
  if (!value.is_array()) {
    throw ProblemError(ProblemError::Kind::shape,
                       "field " + field + " at k=" + std::to_string(k) +
                           ": expected nested array");
  }
  if (static_cast<int>(value.size()) != rows) {
    throw ProblemError(ProblemError::Kind::shape,
                       "field " + field + " at k=" + std::to_string(k) + ": expected " +
                           std::to_string(rows) + " rows, got " +
                           std::to_string(value.size()));
  }
  Eigen::MatrixXd out(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const auto& row = value.at(static_cast<std::size_t>(i));
    if (!row.is_array() || static_cast<int>(row.size()) != cols) {
      throw ProblemError(ProblemError::Kind::shape,
                         "field " + field + " at k=" + std::to_string(k) + ": row " +
                             std::to_string(i) + " must have " + std::to_string(cols) +
                             " entries");
    }
    for (int c = 0; c < cols; ++c) {
      out(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
  }
  return out;
}

Eigen::VectorXd read_vector(const ordered_json& j, const std::string& field, int k,
                            int size) {
  if (!j.contains(field)) return Eigen::VectorXd::Zero(size);
  const auto& value = j.at(field);
  if (!value.is_array() || static_cast<int>(value.size()) != size) {
    throw ProblemError(ProblemError::Kind::shape,
                       "field " + field + " at k=" + std::to_string(k) + ": expected " +
                           std::to_string(size) + " entries");
  }
  Eigen::VectorXd out(size);
  for (int i = 0; i < size; ++i) out(i) = value.at(static_cast<std::size_t>(i)).get<double>();
  return out;
}

Eigen::MatrixXd checked_symmetric(Eigen::MatrixXd m, const std::string& field, int k) {
  double asym = 0.0;
  if (!symmetric_within_tol(m, &asym)) {
    std::ostringstream msg;
    msg << "matrix " << field;
    if (k >= 0) msg << " at k=" << k;
    msg << ": max asymmetry " << asym << " exceeds tolerance";
    throw ProblemError(ProblemError::Kind::symmetry, msg.str());
  }
  return matnum::symmetrize(m);
}

ordered_json matrix_to_json(const Eigen::MatrixXd& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

ordered_json vector_to_json(const Eigen::VectorXd& v) {
  ordered_json out = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

}  // namespace

Eigen::VectorXd InitialDistribution::mean() const {
  if (atoms.empty()) return Eigen::VectorXd();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(atoms.front().value.size());
  for (const Atom& a : atoms) m += a.prob * a.value;
  return m;
}

Eigen::MatrixXd InitialDistribution::covariance() const {
  const Eigen::VectorXd m = mean();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(m.size(), m.size());
  for (const Atom& a : atoms) {
    const Eigen::VectorXd d = a.value - m;
    cov += a.prob * d * d.transpose();
  }
  return cov;
}

bool ProblemData::homogeneous() const {
  for (const StageDynamics& d : dynamics) {
    if (!is_zero(d.b) || !is_zero(d.sigma)) return false;
  }
  for (const StageCost& c : cost) {
    if (!is_zero(c.q) || !is_zero(c.qbar) || !is_zero(c.rho) || !is_zero(c.rhobar)) {
      return false;
    }
  }
  return is_zero(terminal.g) && is_zero(terminal.gbar);
}

ProblemData ProblemData::homogeneous_part() const {
  ProblemData out = *this;
  for (StageDynamics& d : out.dynamics) {
    d.b.setZero();
    d.sigma.setZero();
  }
  for (StageCost& c : out.cost) {
    c.q.setZero();
    c.qbar.setZero();
    c.rho.setZero();
    c.rhobar.setZero();
  }
  out.terminal.g.setZero();
  out.terminal.gbar.setZero();
  return out;
}

ProblemData ProblemData::homogeneous_zero_start() const {
  ProblemData out = homogeneous_part();
  for (InitialDistribution::Atom& a : out.initial.atoms) a.value.setZero();
  return out;
}

std::string Diagnostic::format() const {
  std::ostringstream os;
  os << field;
  if (k) os << "[k=" << *k << "]";
  os << ": " << message;
  return os.str();
}

ProblemData parse_problem(const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ProblemError(ProblemError::Kind::parse, std::string("parse error: ") + e.what());
  }

  ProblemData p;
  try {
    if (!j.contains("dims")) {
      throw ProblemError(ProblemError::Kind::shape, "missing required key 'dims'");
    }
    const auto& dims = j.at("dims");
    p.dims.n = dims.at("n").get<int>();
    p.dims.m = dims.at("m").get<int>();
    p.dims.l = dims.value("l", 0);
    p.dims.N = dims.at("N").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ProblemError(ProblemError::Kind::parse, std::string("dims: ") + e.what());
  }
  if (p.dims.n < 1 || p.dims.m < 1 || p.dims.l < 0 || p.dims.N <= p.dims.l) {
    throw ProblemError(ProblemError::Kind::invalid,
                       "dims: require n >= 1, m >= 1, l >= 0, N > l");
  }

  const int n = p.dims.n;
  const int m = p.dims.m;
  const int T = p.dims.horizon();

  auto stage_array = [&](const char* key) -> ordered_json {
    if (!j.contains(key)) return ordered_json::array();
    const auto& arr = j.at(key);
    if (!arr.is_array()) {
      throw ProblemError(ProblemError::Kind::shape,
                         std::string(key) + ": expected an array of stage objects");
    }
    if (!arr.empty() && static_cast<int>(arr.size()) != T) {
      throw ProblemError(ProblemError::Kind::shape,
                         std::string(key) + ": expected " + std::to_string(T) +
                             " entries, got " + std::to_string(arr.size()));
    }
    return arr;
  };

  const ordered_json dyn_arr = stage_array("dynamics");
  p.dynamics.resize(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const int k = p.dims.l + t;
    const ordered_json entry = dyn_arr.empty() ? ordered_json::object()
                                               : dyn_arr.at(static_cast<std::size_t>(t));
    StageDynamics& d = p.dynamics[static_cast<std::size_t>(t)];
    d.A = read_matrix(entry, "A", k, n, n);
    d.Abar = read_matrix(entry, "Abar", k, n, n);
    d.B = read_matrix(entry, "B", k, n, m);
    d.Bbar = read_matrix(entry, "Bbar", k, n, m);
    d.C = read_matrix(entry, "C", k, n, n);
    d.Cbar = read_matrix(entry, "Cbar", k, n, n);
    d.D = read_matrix(entry, "D", k, n, m);
    d.Dbar = read_matrix(entry, "Dbar", k, n, m);
    d.b = read_vector(entry, "b", k, n);
    d.sigma = read_vector(entry, "sigma", k, n);
  }

  const ordered_json cost_arr = stage_array("cost");
  p.cost.resize(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const int k = p.dims.l + t;
    const ordered_json entry = cost_arr.empty() ? ordered_json::object()
                                                : cost_arr.at(static_cast<std::size_t>(t));
    StageCost& c = p.cost[static_cast<std::size_t>(t)];
    c.Q = checked_symmetric(read_matrix(entry, "Q", k, n, n), "Q", k);
    c.Qbar = checked_symmetric(read_matrix(entry, "Qbar", k, n, n), "Qbar", k);
    c.S = read_matrix(entry, "S", k, m, n);
    c.Sbar = read_matrix(entry, "Sbar", k, m, n);
    c.R = checked_symmetric(read_matrix(entry, "R", k, m, m), "R", k);
    c.Rbar = checked_symmetric(read_matrix(entry, "Rbar", k, m, m), "Rbar", k);
    c.q = read_vector(entry, "q", k, n);
    c.qbar = read_vector(entry, "qbar", k, n);
    c.rho = read_vector(entry, "rho", k, m);
    c.rhobar = read_vector(entry, "rhobar", k, m);
  }

  const ordered_json term =
      j.contains("terminal") ? j.at("terminal") : ordered_json::object();
  p.terminal.G = checked_symmetric(read_matrix(term, "G", p.dims.N, n, n), "G", -1);
  p.terminal.Gbar = checked_symmetric(read_matrix(term, "Gbar", p.dims.N, n, n), "Gbar", -1);
  p.terminal.g = read_vector(term, "g", p.dims.N, n);
  p.terminal.gbar = read_vector(term, "gbar", p.dims.N, n);

  if (j.contains("initial")) {
    const auto& init = j.at("initial");
    if (!init.contains("atoms") || !init.at("atoms").is_array() ||
        init.at("atoms").empty()) {
      throw ProblemError(ProblemError::Kind::shape,
                         "initial: expected a non-empty 'atoms' array");
    }
    double total = 0.0;
    for (const auto& atom : init.at("atoms")) {
      InitialDistribution::Atom a;
      a.value = read_vector(atom, "value", p.dims.l, n);
      a.prob = atom.value("prob", 1.0);
      if (!(a.prob > 0.0) || a.prob > 1.0) {
        throw ProblemError(ProblemError::Kind::invalid,
                           "initial: atom probability must lie in (0, 1]");
      }
      total += a.prob;
      p.initial.atoms.push_back(std::move(a));
    }
    if (std::abs(total - 1.0) > kProbTol) {
      std::ostringstream msg;
      msg << "initial: atom probabilities sum " << total;
      throw ProblemError(ProblemError::Kind::invalid, msg.str());
    }
  } else {
    p.initial.atoms.push_back({Eigen::VectorXd::Zero(n), 1.0});
  }

  if (j.contains("noise")) {
    const auto& noise = j.at("noise");
    const std::string kind = noise.value("kind", "rademacher");
    if (kind == "rademacher") {
      p.noise.kind = NoiseModel::Kind::rademacher;
    } else if (kind == "gaussian") {
      p.noise.kind = NoiseModel::Kind::gaussian;
    } else {
      throw ProblemError(ProblemError::Kind::invalid, "noise: unknown kind '" + kind + "'");
    }
    p.noise.seed = noise.value("seed", std::uint64_t{0});
  }

  if (j.contains("info")) {
    const std::string kind = j.at("info").value("kind", "predictable");
    if (kind == "predictable") {
      p.info.kind = InfoPattern::Kind::predictable;
    } else if (kind == "adapted") {
      p.info.kind = InfoPattern::Kind::adapted;
    } else {
      throw ProblemError(ProblemError::Kind::invalid, "info: unknown kind '" + kind + "'");
    }
  }

  return p;
}

ProblemData load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ProblemError(ProblemError::Kind::io, "file not found: " + path);
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_problem(buffer.str());
}

std::string problem_to_json(const ProblemData& p) {
  ordered_json j;
  j["dims"] = {{"n", p.dims.n}, {"m", p.dims.m}, {"l", p.dims.l}, {"N", p.dims.N}};
  ordered_json dyn = ordered_json::array();
  for (const StageDynamics& d : p.dynamics) {
    ordered_json e;
    e["A"] = matrix_to_json(d.A);
    e["Abar"] = matrix_to_json(d.Abar);
    e["B"] = matrix_to_json(d.B);
    e["Bbar"] = matrix_to_json(d.Bbar);
    e["C"] = matrix_to_json(d.C);
    e["Cbar"] = matrix_to_json(d.Cbar);
    e["D"] = matrix_to_json(d.D);
    e["Dbar"] = matrix_to_json(d.Dbar);
    e["b"] = vector_to_json(d.b);
    e["sigma"] = vector_to_json(d.sigma);
    dyn.push_back(e);
  }
  j["dynamics"] = dyn;
  ordered_json cost = ordered_json::array();
  for (const StageCost& c : p.cost) {
    ordered_json e;
    e["Q"] = matrix_to_json(c.Q);
    e["Qbar"] = matrix_to_json(c.Qbar);
    e["S"] = matrix_to_json(c.S);
    e["Sbar"] = matrix_to_json(c.Sbar);
    e["R"] = matrix_to_json(c.R);
    e["Rbar"] = matrix_to_json(c.Rbar);
    e["q"] = vector_to_json(c.q);
    e["qbar"] = vector_to_json(c.qbar);
    e["rho"] = vector_to_json(c.rho);
    e["rhobar"] = vector_to_json(c.rhobar);
    cost.push_back(e);
  }
  j["cost"] = cost;
  j["terminal"] = {{"G", matrix_to_json(p.terminal.G)},
                   {"Gbar", matrix_to_json(p.terminal.Gbar)},
                   {"g", vector_to_json(p.terminal.g)},
                   {"gbar", vector_to_json(p.terminal.gbar)}};
  ordered_json atoms = ordered_json::array();
  for (const InitialDistribution::Atom& a : p.initial.atoms) {
    atoms.push_back({{"value", vector_to_json(a.value)}, {"prob", a.prob}});
  }
  j["initial"] = {{"atoms", atoms}};
  j["noise"] = {{"kind", p.noise.kind == NoiseModel::Kind::rademacher ? "rademacher"
                                                                      : "gaussian"},
                {"seed", p.noise.seed}};
  j["info"] = {{"kind", p.info.kind == InfoPattern::Kind::predictable ? "predictable"
                                                                      : "adapted"}};
  return j.dump(2);
}

void save_problem(const ProblemData& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw ProblemError(ProblemError::Kind::io, "cannot open for writing: " + path);
  }
  out << problem_to_json(p) << "\n";
}

std::vector<Diagnostic> validate(const ProblemData& p) {
  std::vector<Diagnostic> out;
  auto flag = [&out](std::string field, std::optional<int> k, std::string msg) {
    out.push_back(Diagnostic{std::move(field), k, std::move(msg)});
  };

  if (p.dims.n < 1) flag("dims.n", std::nullopt, "state dimension must be >= 1");
  if (p.dims.m < 1) flag("dims.m", std::nullopt, "control dimension must be >= 1");
  if (p.dims.l < 0) flag("dims.l", std::nullopt, "initial time must be >= 0");
  if (p.dims.N <= p.dims.l) flag("dims.N", std::nullopt, "empty horizon: N must exceed l");

  const int n = p.dims.n;
  const int m = p.dims.m;
  const int T = std::max(p.dims.horizon(), 0);

  if (static_cast<int>(p.dynamics.size()) != T) {
    flag("dynamics", std::nullopt,
         "expected " + std::to_string(T) + " stages, got " + std::to_string(p.dynamics.size()));
  }
  if (static_cast<int>(p.cost.size()) != T) {
    flag("cost", std::nullopt,
         "expected " + std::to_string(T) + " stages, got " + std::to_string(p.cost.size()));
  }

  auto check_shape = [&](const Eigen::MatrixXd& mat, int rows, int cols,
                         const char* field, int k) {
    if (mat.rows() != rows || mat.cols() != cols) {
      flag(field, k,
           "expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got " +
               std::to_string(mat.rows()) + "x" + std::to_string(mat.cols()));
      return false;
    }
    return true;
  };
  auto check_sym = [&](const Eigen::MatrixXd& mat, const char* field, int k) {
    double asym = 0.0;
    if (!symmetric_within_tol(mat, &asym)) {
      std::ostringstream msg;
      msg << "max asymmetry " << asym << " exceeds tolerance";
      flag(field, k >= 0 ? std::optional<int>(k) : std::nullopt, msg.str());
    }
  };

  for (int t = 0; t < static_cast<int>(p.dynamics.size()); ++t) {
    const int k = p.dims.l + t;
    const StageDynamics& d = p.dynamics[static_cast<std::size_t>(t)];
    check_shape(d.A, n, n, "A", k);
    check_shape(d.Abar, n, n, "Abar", k);
    check_shape(d.B, n, m, "B", k);
    check_shape(d.Bbar, n, m, "Bbar", k);
    check_shape(d.C, n, n, "C", k);
    check_shape(d.Cbar, n, n, "Cbar", k);
    check_shape(d.D, n, m, "D", k);
    check_shape(d.Dbar, n, m, "Dbar", k);
    if (d.b.size() != n) flag("b", k, "expected length " + std::to_string(n));
    if (d.sigma.size() != n) flag("sigma", k, "expected length " + std::to_string(n));
  }
  for (int t = 0; t < static_cast<int>(p.cost.size()); ++t) {
    const int k = p.dims.l + t;
    const StageCost& c = p.cost[static_cast<std::size_t>(t)];
    if (check_shape(c.Q, n, n, "Q", k)) check_sym(c.Q, "Q", k);
    if (check_shape(c.Qbar, n, n, "Qbar", k)) check_sym(c.Qbar, "Qbar", k);
    check_shape(c.S, m, n, "S", k);
    check_shape(c.Sbar, m, n, "Sbar", k);
    if (check_shape(c.R, m, m, "R", k)) check_sym(c.R, "R", k);
    if (check_shape(c.Rbar, m, m, "Rbar", k)) check_sym(c.Rbar, "Rbar", k);
    if (c.q.size() != n) flag("q", k, "expected length " + std::to_string(n));
    if (c.qbar.size() != n) flag("qbar", k, "expected length " + std::to_string(n));
    if (c.rho.size() != m) flag("rho", k, "expected length " + std::to_string(m));
    if (c.rhobar.size() != m) flag("rhobar", k, "expected length " + std::to_string(m));
  }
  if (check_shape(p.terminal.G, n, n, "G", p.dims.N)) check_sym(p.terminal.G, "G", -1);
  if (check_shape(p.terminal.Gbar, n, n, "Gbar", p.dims.N)) check_sym(p.terminal.Gbar, "Gbar", -1);
  if (p.terminal.g.size() != n) flag("g", std::nullopt, "expected length " + std::to_string(n));
  if (p.terminal.gbar.size() != n) flag("gbar", std::nullopt, "expected length " + std::to_string(n));

  if (p.initial.atoms.empty()) {
    flag("initial", std::nullopt, "at least one atom required");
  } else {
    double total = 0.0;
    for (std::size_t i = 0; i < p.initial.atoms.size(); ++i) {
      const auto& a = p.initial.atoms[i];
      if (a.value.size() != n) {
        flag("initial.atoms", static_cast<int>(i), "value must have length " + std::to_string(n));
      }
      if (!(a.prob > 0.0) || a.prob > 1.0) {
        flag("initial.atoms", static_cast<int>(i), "probability must lie in (0, 1]");
      }
      total += a.prob;
    }
    if (std::abs(total - 1.0) > kProbTol) {
      std::ostringstream msg;
      msg << "atom probabilities sum " << total;
      flag("initial", std::nullopt, msg.str());
    }
  }

  return out;
}

ProblemData make_zero_problem(int n, int m, int l, int N) {
  ProblemData p;
  p.dims = Dimensions{n, m, l, N};
  const int T = p.dims.horizon();
  p.dynamics.resize(static_cast<std::size_t>(T));
  p.cost.resize(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    StageDynamics& d = p.dynamics[static_cast<std::size_t>(t)];
    d.A = Eigen::MatrixXd::Zero(n, n);
    d.Abar = Eigen::MatrixXd::Zero(n, n);
    d.B = Eigen::MatrixXd::Zero(n, m);
    d.Bbar = Eigen::MatrixXd::Zero(n, m);
    d.C = Eigen::MatrixXd::Zero(n, n);
    d.Cbar = Eigen::MatrixXd::Zero(n, n);
    d.D = Eigen::MatrixXd::Zero(n, m);
    d.Dbar = Eigen::MatrixXd::Zero(n, m);
    d.b = Eigen::VectorXd::Zero(n);
    d.sigma = Eigen::VectorXd::Zero(n);
    StageCost& c = p.cost[static_cast<std::size_t>(t)];
    c.Q = Eigen::MatrixXd::Zero(n, n);
    c.Qbar = Eigen::MatrixXd::Zero(n, n);
    c.S = Eigen::MatrixXd::Zero(m, n);
    c.Sbar = Eigen::MatrixXd::Zero(m, n);
    c.R = Eigen::MatrixXd::Zero(m, m);
    c.Rbar = Eigen::MatrixXd::Zero(m, m);
    c.q = Eigen::VectorXd::Zero(n);
    c.qbar = Eigen::VectorXd::Zero(n);
    c.rho = Eigen::VectorXd::Zero(m);
    c.rhobar = Eigen::VectorXd::Zero(m);
  }
  p.terminal.G = Eigen::MatrixXd::Zero(n, n);
  p.terminal.Gbar = Eigen::MatrixXd::Zero(n, n);
  p.terminal.g = Eigen::VectorXd::Zero(n);
  p.terminal.gbar = Eigen::VectorXd::Zero(n);
  p.initial.atoms.push_back({Eigen::VectorXd::Zero(n), 1.0});
  return p;
}

}  // namespace mflq
