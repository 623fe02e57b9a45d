#include "mflq/oracle.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "mflq/matnum.hpp"

namespace mflq::oracle {

namespace {

// History bits are appended least-significant-first, so the branch taken at
// level j (counting from the root) sits at bit (depth - 1 - j).
double sign_at(long long h, int depth, int level) {
  const int bit = static_cast<int>((h >> (depth - 1 - level)) & 1LL);
  return bit == 0 ? 1.0 : -1.0;
}

long long pow2(int d) { return 1LL << d; }

int atom_count(const ProblemData& p) { return static_cast<int>(p.initial.atoms.size()); }

// Average out the trailing (from - to) branch levels.
Eigen::MatrixXd condense(const Eigen::MatrixXd& vals, int from, int to) {
  Eigen::MatrixXd cur = vals;
  for (int d = from; d > to; --d) {
    Eigen::MatrixXd next(cur.rows(), cur.cols() / 2);
    for (Eigen::Index c = 0; c < next.cols(); ++c) {
      next.col(c) = 0.5 * (cur.col(2 * c) + cur.col(2 * c + 1));
    }
    cur = std::move(next);
  }
  return cur;
}

// Duplicate columns until the requested depth.
Eigen::MatrixXd lift(const Eigen::MatrixXd& vals, int from, int to) {
  Eigen::MatrixXd cur = vals;
  for (int d = from; d < to; ++d) {
    Eigen::MatrixXd next(cur.rows(), cur.cols() * 2);
    for (Eigen::Index c = 0; c < cur.cols(); ++c) {
      next.col(2 * c) = cur.col(c);
      next.col(2 * c + 1) = cur.col(c);
    }
    cur = std::move(next);
  }
  return cur;
}

// Scale every node value by the +/-1 branch sign it saw at the given level.
Eigen::MatrixXd apply_sign(const ProblemData& p, const Eigen::MatrixXd& vals, int depth,
                           int level) {
  const long long per_atom = pow2(depth);
  Eigen::MatrixXd out = vals;
  for (int a = 0; a < atom_count(p); ++a) {
    for (long long h = 0; h < per_atom; ++h) {
      out.col(a * per_atom + h) *= sign_at(h, depth, level);
    }
  }
  return out;
}

Eigen::VectorXd expectation(const ProblemData& p, const Eigen::MatrixXd& vals, int depth) {
  const long long per_atom = pow2(depth);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(vals.rows());
  for (int a = 0; a < atom_count(p); ++a) {
    const double w = p.initial.atoms[static_cast<std::size_t>(a)].prob /
                     static_cast<double>(per_atom);
    for (long long h = 0; h < per_atom; ++h) {
      mean += w * vals.col(a * per_atom + h);
    }
  }
  return mean;
}

void check_control_shape(const ProblemData& p, const TreeProcess& u) {
  const int T = p.horizon();
  if (u.start != p.dims.l || u.times() != T) {
    throw std::invalid_argument("oracle: control does not span the horizon");
  }
  for (int t = 0; t < T; ++t) {
    const int d = u.depths[static_cast<std::size_t>(t)];
    if (d != t && d != t + 1) {
      throw std::invalid_argument("oracle: control depth must be k-l or k-l+1");
    }
    if (d == t + 1 && p.info.kind != InfoPattern::Kind::adapted) {
      throw std::invalid_argument(
          "oracle: depth k-l+1 control requires the adapted information pattern");
    }
    const auto& vals = u.values[static_cast<std::size_t>(t)];
    if (vals.rows() != p.dims.m ||
        vals.cols() != static_cast<Eigen::Index>(atom_count(p) * pow2(d))) {
      throw std::invalid_argument("oracle: control values have the wrong shape at step " +
                                  std::to_string(p.dims.l + t));
    }
  }
}

}  // namespace

int control_depth(const ProblemData& p, int t) {
  return t + (p.info.kind == InfoPattern::Kind::adapted ? 1 : 0);
}

long long nodes_at_depth(const ProblemData& p, int depth) {
  return atom_count(p) * pow2(depth);
}

double node_weight(const ProblemData& p, int atom, int depth) {
  return p.initial.atoms[static_cast<std::size_t>(atom)].prob /
         static_cast<double>(pow2(depth));
}

int stacked_dimension(const ProblemData& p) {
  long long total = 0;
  for (int t = 0; t < p.horizon(); ++t) {
    total += p.dims.m * nodes_at_depth(p, control_depth(p, t));
  }
  if (total > std::numeric_limits<int>::max()) return std::numeric_limits<int>::max();
  return static_cast<int>(total);
}

TreeProcess zero_control(const ProblemData& p) {
  TreeProcess u;
  u.start = p.dims.l;
  for (int t = 0; t < p.horizon(); ++t) {
    const int d = control_depth(p, t);
    u.depths.push_back(d);
    u.values.emplace_back(
        Eigen::MatrixXd::Zero(p.dims.m, atom_count(p) * pow2(d)));
  }
  return u;
}

double expectation_weighted(const ProblemData& p, const Eigen::MatrixXd& vals, int depth,
                            Eigen::VectorXd* out) {
  Eigen::VectorXd mean = expectation(p, vals, depth);
  if (out) *out = mean;
  return mean.size() ? mean(0) : 0.0;
}

TreeProcess rollout(const ProblemData& p, const TreeProcess& u) {
  check_control_shape(p, u);
  const int T = p.horizon();
  const int atoms = atom_count(p);

  TreeProcess x;
  x.start = p.dims.l;
  x.depths.push_back(0);
  Eigen::MatrixXd x0(p.dims.n, atoms);
  for (int a = 0; a < atoms; ++a) {
    x0.col(a) = p.initial.atoms[static_cast<std::size_t>(a)].value;
  }
  x.values.push_back(std::move(x0));

  for (int t = 0; t < T; ++t) {
    const StageDynamics& dyn = p.dyn(t);
    const Eigen::MatrixXd& xk = x.values[static_cast<std::size_t>(t)];
    const Eigen::MatrixXd& uk = u.values[static_cast<std::size_t>(t)];
    const int du = u.depths[static_cast<std::size_t>(t)];
    const Eigen::VectorXd Ex = expectation(p, xk, t);
    const Eigen::VectorXd Eu = expectation(p, uk, du);

    const long long per_atom = pow2(t + 1);
    Eigen::MatrixXd next(p.dims.n, atoms * per_atom);
    for (int a = 0; a < atoms; ++a) {
      for (long long h = 0; h < per_atom; ++h) {
        const long long parent = h >> 1;
        const double sign = (h & 1LL) == 0 ? 1.0 : -1.0;
        const Eigen::VectorXd xv = xk.col(a * (per_atom / 2) + parent);
        const Eigen::VectorXd uv = (du == t + 1) ? uk.col(a * per_atom + h)
                                                 : uk.col(a * (per_atom / 2) + parent);
        const Eigen::VectorXd drift = dyn.A * xv + dyn.Abar * Ex + dyn.B * uv +
                                      dyn.Bbar * Eu + dyn.b;
        const Eigen::VectorXd diffusion = dyn.C * xv + dyn.Cbar * Ex + dyn.D * uv +
                                          dyn.Dbar * Eu + dyn.sigma;
        next.col(a * per_atom + h) = drift + sign * diffusion;
      }
    }
    x.depths.push_back(t + 1);
    x.values.push_back(std::move(next));
  }
  return x;
}

double exact_cost(const ProblemData& p, const TreeProcess& u) {
  return exact_cost(p, u, rollout(p, u));
}

double exact_cost(const ProblemData& p, const TreeProcess& u, const TreeProcess& x) {
  const int T = p.horizon();
  const int atoms = atom_count(p);
  double total = 0.0;

  for (int t = 0; t < T; ++t) {
    const StageCost& c = p.stage(t);
    const int du = u.depths[static_cast<std::size_t>(t)];
    const int depth = std::max(t, du);
    const Eigen::MatrixXd xk = lift(x.values[static_cast<std::size_t>(t)], t, depth);
    const Eigen::MatrixXd uk = lift(u.values[static_cast<std::size_t>(t)], du, depth);
    const Eigen::VectorXd Ex = expectation(p, xk, depth);
    const Eigen::VectorXd Eu = expectation(p, uk, depth);

    const long long per_atom = pow2(depth);
    for (int a = 0; a < atoms; ++a) {
      const double w = node_weight(p, a, depth);
      for (long long h = 0; h < per_atom; ++h) {
        const auto xv = xk.col(a * per_atom + h);
        const auto uv = uk.col(a * per_atom + h);
        total += w * (xv.dot(c.Q * xv) + 2.0 * uv.dot(c.S * xv) + uv.dot(c.R * uv) +
                      2.0 * c.q.dot(xv) + 2.0 * c.rho.dot(uv));
      }
    }
    total += Ex.dot(c.Qbar * Ex) + 2.0 * Eu.dot(c.Sbar * Ex) + Eu.dot(c.Rbar * Eu) +
             2.0 * c.qbar.dot(Ex) + 2.0 * c.rhobar.dot(Eu);
  }

  const Eigen::MatrixXd& xN = x.values[static_cast<std::size_t>(T)];
  const Eigen::VectorXd ExN = expectation(p, xN, T);
  const long long per_atom = pow2(T);
  for (int a = 0; a < atoms; ++a) {
    const double w = node_weight(p, a, T);
    for (long long h = 0; h < per_atom; ++h) {
      const auto xv = xN.col(a * per_atom + h);
      total += w * xv.dot(p.terminal.G * xv);
    }
  }
  total += ExN.dot(p.terminal.Gbar * ExN) + 2.0 * p.terminal.g.dot(ExN) +
           2.0 * p.terminal.gbar.dot(ExN);
  return total;
}

double l2_norm_sq(const ProblemData& p, const TreeProcess& u) {
  double total = 0.0;
  for (int t = 0; t < u.times(); ++t) {
    const int d = u.depths[static_cast<std::size_t>(t)];
    const auto& vals = u.values[static_cast<std::size_t>(t)];
    const long long per_atom = pow2(d);
    for (int a = 0; a < atom_count(p); ++a) {
      const double w = node_weight(p, a, d);
      for (long long h = 0; h < per_atom; ++h) {
        total += w * vals.col(a * per_atom + h).squaredNorm();
      }
    }
  }
  return total;
}

double l2_dist(const ProblemData& p, const TreeProcess& a, const TreeProcess& b) {
  if (a.times() != b.times()) {
    throw std::invalid_argument("l2_dist: processes span different horizons");
  }
  double total = 0.0;
  for (int t = 0; t < a.times(); ++t) {
    const int da = a.depths[static_cast<std::size_t>(t)];
    const int db = b.depths[static_cast<std::size_t>(t)];
    const int d = std::max(da, db);
    const Eigen::MatrixXd va = lift(a.values[static_cast<std::size_t>(t)], da, d);
    const Eigen::MatrixXd vb = lift(b.values[static_cast<std::size_t>(t)], db, d);
    const long long per_atom = pow2(d);
    for (int atom = 0; atom < atom_count(p); ++atom) {
      const double w = node_weight(p, atom, d);
      for (long long h = 0; h < per_atom; ++h) {
        total += w * (va.col(atom * per_atom + h) - vb.col(atom * per_atom + h)).squaredNorm();
      }
    }
  }
  return std::sqrt(total);
}

TreeProcess fbsde_backward(const ProblemData& p, const TreeProcess& u,
                           const TreeProcess& x) {
  const int T = p.horizon();
  TreeProcess y;
  y.start = p.dims.l;
  y.depths.assign(static_cast<std::size_t>(T + 1), 0);
  y.values.assign(static_cast<std::size_t>(T + 1), Eigen::MatrixXd());

  {
    const Eigen::MatrixXd& xN = x.values[static_cast<std::size_t>(T)];
    const Eigen::VectorXd ExN = expectation(p, xN, T);
    const Eigen::VectorXd affine = p.terminal.Gbar * ExN + p.terminal.g + p.terminal.gbar;
    Eigen::MatrixXd yN = p.terminal.G * xN;
    yN.colwise() += affine;
    y.depths[static_cast<std::size_t>(T)] = T;
    y.values[static_cast<std::size_t>(T)] = std::move(yN);
  }

  for (int t = T - 1; t >= 0; --t) {
    const StageDynamics& d = p.dyn(t);
    const StageCost& c = p.stage(t);
    const int dy_next = y.depths[static_cast<std::size_t>(t + 1)];
    const Eigen::MatrixXd& y_next = y.values[static_cast<std::size_t>(t + 1)];
    const int du = u.depths[static_cast<std::size_t>(t)];
    const int dy = std::max(t, du);

    const Eigen::MatrixXd signed_next = apply_sign(p, y_next, dy_next, t);
    const Eigen::MatrixXd cond_y = condense(y_next, dy_next, t);
    const Eigen::MatrixXd cond_yw = condense(signed_next, dy_next, t);
    const Eigen::VectorXd Ey = expectation(p, y_next, dy_next);
    const Eigen::VectorXd Eyw = expectation(p, signed_next, dy_next);
    const Eigen::VectorXd Ex = expectation(p, x.values[static_cast<std::size_t>(t)], t);
    const Eigen::VectorXd Eu = expectation(p, u.values[static_cast<std::size_t>(t)], du);

    Eigen::MatrixXd base = d.A.transpose() * cond_y + d.C.transpose() * cond_yw +
                           c.Q * x.values[static_cast<std::size_t>(t)];
    const Eigen::VectorXd affine = d.Abar.transpose() * Ey + d.Cbar.transpose() * Eyw +
                                   c.Qbar * Ex + c.Sbar.transpose() * Eu + c.q + c.qbar;
    Eigen::MatrixXd yk = lift(base, t, dy) +
                         c.S.transpose() * lift(u.values[static_cast<std::size_t>(t)], du, dy);
    yk.colwise() += affine;
    y.depths[static_cast<std::size_t>(t)] = dy;
    y.values[static_cast<std::size_t>(t)] = std::move(yk);
  }
  return y;
}

TreeProcess cost_gradient(const ProblemData& p, const TreeProcess& u, const TreeProcess& x,
                          const TreeProcess& y) {
  const int T = p.horizon();
  TreeProcess g;
  g.start = p.dims.l;
  for (int t = 0; t < T; ++t) {
    const StageDynamics& d = p.dyn(t);
    const StageCost& c = p.stage(t);
    const int du = u.depths[static_cast<std::size_t>(t)];
    const int dy_next = y.depths[static_cast<std::size_t>(t + 1)];
    const Eigen::MatrixXd& y_next = y.values[static_cast<std::size_t>(t + 1)];

    const Eigen::MatrixXd signed_next = apply_sign(p, y_next, dy_next, t);
    const Eigen::MatrixXd cond_y = condense(y_next, dy_next, du);
    const Eigen::MatrixXd cond_yw = condense(signed_next, dy_next, du);
    const Eigen::VectorXd Ey = expectation(p, y_next, dy_next);
    const Eigen::VectorXd Eyw = expectation(p, signed_next, dy_next);
    const Eigen::VectorXd Ex = expectation(p, x.values[static_cast<std::size_t>(t)], t);
    const Eigen::VectorXd Eu = expectation(p, u.values[static_cast<std::size_t>(t)], du);

    Eigen::MatrixXd grad = d.B.transpose() * cond_y + d.D.transpose() * cond_yw +
                           c.S * lift(x.values[static_cast<std::size_t>(t)], t, du) +
                           c.R * u.values[static_cast<std::size_t>(t)];
    const Eigen::VectorXd affine = d.Bbar.transpose() * Ey + d.Dbar.transpose() * Eyw +
                                   c.Sbar * Ex + c.Rbar * Eu + c.rho + c.rhobar;
    grad.colwise() += affine;
    g.depths.push_back(du);
    g.values.push_back(2.0 * grad);
  }
  return g;
}

double stationarity_residual(const ProblemData& p, const TreeProcess& u) {
  const TreeProcess x = rollout(p, u);
  const TreeProcess y = fbsde_backward(p, u, x);
  const TreeProcess g = cost_gradient(p, u, x, y);
  double residual = 0.0;
  for (const Eigen::MatrixXd& vals : g.values) {
    if (vals.size()) residual = std::max(residual, vals.cwiseAbs().maxCoeff());
  }
  return 0.5 * residual;
}

double QuadraticModel::evaluate(const Eigen::VectorXd& u_raw) const {
  const Eigen::VectorXd u_hat = sqrt_w.cwiseProduct(u_raw);
  return u_hat.dot(M * u_hat) + d.dot(u_hat) + c0;
}

Eigen::VectorXd stack_control(const ProblemData& p, const TreeProcess& u) {
  Eigen::VectorXd out(stacked_dimension(p));
  int offset = 0;
  for (int t = 0; t < p.horizon(); ++t) {
    const int d = control_depth(p, t);
    const Eigen::MatrixXd vals =
        lift(u.values[static_cast<std::size_t>(t)], u.depths[static_cast<std::size_t>(t)], d);
    for (Eigen::Index col = 0; col < vals.cols(); ++col) {
      out.segment(offset, p.dims.m) = vals.col(col);
      offset += p.dims.m;
    }
  }
  return out;
}

TreeProcess unstack_control(const ProblemData& p, const Eigen::VectorXd& raw) {
  TreeProcess u = zero_control(p);
  int offset = 0;
  for (int t = 0; t < p.horizon(); ++t) {
    Eigen::MatrixXd& vals = u.values[static_cast<std::size_t>(t)];
    for (Eigen::Index col = 0; col < vals.cols(); ++col) {
      vals.col(col) = raw.segment(offset, p.dims.m);
      offset += p.dims.m;
    }
  }
  return u;
}

QuadraticModel assemble_quadratic(const ProblemData& p) {
  const int dim = stacked_dimension(p);
  if (dim > kStackedDimGuard) {
    throw std::runtime_error("assemble_quadratic: stacked control dimension " +
                             std::to_string(dim) + " exceeds the guard of " +
                             std::to_string(kStackedDimGuard));
  }

  QuadraticModel model;
  model.sqrt_w.resize(dim);
  {
    int offset = 0;
    for (int t = 0; t < p.horizon(); ++t) {
      const int d = control_depth(p, t);
      const long long per_atom = pow2(d);
      for (int a = 0; a < atom_count(p); ++a) {
        const double w = node_weight(p, a, d);
        for (long long h = 0; h < per_atom; ++h) {
          for (int c = 0; c < p.dims.m; ++c) {
            model.sqrt_w(offset++) = std::sqrt(w);
          }
        }
      }
    }
  }

  model.c0 = exact_cost(p, zero_control(p));
  {
    const TreeProcess zero = zero_control(p);
    const TreeProcess x0 = rollout(p, zero);
    const TreeProcess y0 = fbsde_backward(p, zero, x0);
    const TreeProcess g0 = cost_gradient(p, zero, x0, y0);
    model.d = model.sqrt_w.cwiseProduct(stack_control(p, g0));
  }

  const ProblemData hom = p.homogeneous_zero_start();
  auto quad_cost = [&hom, &p](const Eigen::VectorXd& raw) {
    const TreeProcess u = unstack_control(p, raw);
    return exact_cost(hom, u);
  };

  Eigen::MatrixXd m_raw(dim, dim);
  Eigen::VectorXd diag(dim);
  std::vector<Eigen::VectorXd> units;
  units.reserve(static_cast<std::size_t>(dim));
  for (int i = 0; i < dim; ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
    e(i) = 1.0;
    units.push_back(e);
    diag(i) = quad_cost(e);
    m_raw(i, i) = diag(i);
  }
  for (int i = 0; i < dim; ++i) {
    for (int j = i + 1; j < dim; ++j) {
      const double cross = 0.5 * (quad_cost(units[static_cast<std::size_t>(i)] +
                                            units[static_cast<std::size_t>(j)]) -
                                  diag(i) - diag(j));
      m_raw(i, j) = cross;
      m_raw(j, i) = cross;
    }
  }

  model.M.resize(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      model.M(i, j) = m_raw(i, j) / (model.sqrt_w(i) * model.sqrt_w(j));
    }
  }
  model.M = matnum::symmetrize(model.M);
  return model;
}

std::string ExactSolution::status_name() const {
  switch (status) {
    case Status::unique: return "unique";
    case Status::min_norm: return "min_norm";
    case Status::unbounded_below: return "unbounded_below";
  }
  return "unbounded_below";
}

ExactSolution solve_exact(const ProblemData& p) {
  const QuadraticModel model = assemble_quadratic(p);
  const matnum::SymmetricEigen eig = matnum::sym_eigen(model.M);

  ExactSolution out;
  out.min_eig = eig.values.size() ? eig.values(0) : 0.0;

  if (out.min_eig < -kEigTol) {
    out.status = ExactSolution::Status::unbounded_below;
    out.value = -std::numeric_limits<double>::infinity();
    return out;
  }

  const double max_abs = eig.values.cwiseAbs().maxCoeff();
  const double cutoff = matnum::kRankTol * max_abs;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(eig.values.size());
  bool full_rank = true;
  for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
    if (std::abs(eig.values(i)) > cutoff && eig.values(i) != 0.0) {
      inv(i) = 1.0 / eig.values(i);
    } else {
      full_rank = false;
    }
  }
  const Eigen::MatrixXd m_pinv = eig.vectors * inv.asDiagonal() * eig.vectors.transpose();

  const Eigen::VectorXd projected = model.M * (m_pinv * model.d);
  out.gradient_range_residual =
      model.d.size() ? (model.d - projected).cwiseAbs().maxCoeff() : 0.0;
  if (!full_rank && out.gradient_range_residual > kResidualTol) {
    // Gradient component inside the kernel drives the cost to -infinity.
    out.status = ExactSolution::Status::unbounded_below;
    out.value = -std::numeric_limits<double>::infinity();
    return out;
  }

  const Eigen::VectorXd u_hat = -0.5 * (m_pinv * model.d);
  out.value = model.c0 - 0.25 * model.d.dot(m_pinv * model.d);
  out.status = (out.min_eig > kEigTol) ? ExactSolution::Status::unique
                                       : ExactSolution::Status::min_norm;
  out.minimizer = unstack_control(p, u_hat.cwiseQuotient(model.sqrt_w));
  return out;
}

std::pair<TreeProcess, TreeProcess> induce_control(
    const ProblemData& p, const std::vector<Eigen::MatrixXd>& Theta,
    const std::vector<Eigen::MatrixXd>& ThetaBar, const std::vector<Eigen::VectorXd>& v) {
  const int T = p.horizon();
  if (static_cast<int>(Theta.size()) != T || static_cast<int>(ThetaBar.size()) != T) {
    throw std::invalid_argument("induce_control: gain sequences must span the horizon");
  }
  const int atoms = atom_count(p);

  TreeProcess x;
  x.start = p.dims.l;
  x.depths.push_back(0);
  Eigen::MatrixXd x0(p.dims.n, atoms);
  for (int a = 0; a < atoms; ++a) {
    x0.col(a) = p.initial.atoms[static_cast<std::size_t>(a)].value;
  }
  x.values.push_back(std::move(x0));

  TreeProcess u;
  u.start = p.dims.l;

  for (int t = 0; t < T; ++t) {
    const StageDynamics& dyn = p.dyn(t);
    const Eigen::MatrixXd& xk = x.values[static_cast<std::size_t>(t)];
    const Eigen::VectorXd Ex = expectation(p, xk, t);
    const Eigen::VectorXd offset =
        v.empty() ? Eigen::VectorXd::Zero(p.dims.m) : v[static_cast<std::size_t>(t)];

    Eigen::MatrixXd uk(p.dims.m, xk.cols());
    for (Eigen::Index col = 0; col < xk.cols(); ++col) {
      uk.col(col) = Theta[static_cast<std::size_t>(t)] * (xk.col(col) - Ex) +
                    ThetaBar[static_cast<std::size_t>(t)] * Ex + offset;
    }
    const Eigen::VectorXd Eu = expectation(p, uk, t);

    const long long per_atom = pow2(t + 1);
    Eigen::MatrixXd next(p.dims.n, atoms * per_atom);
    for (int a = 0; a < atoms; ++a) {
      for (long long h = 0; h < per_atom; ++h) {
        const long long parent = h >> 1;
        const double sign = (h & 1LL) == 0 ? 1.0 : -1.0;
        const Eigen::VectorXd xv = xk.col(a * (per_atom / 2) + parent);
        const Eigen::VectorXd uv = uk.col(a * (per_atom / 2) + parent);
        const Eigen::VectorXd drift = dyn.A * xv + dyn.Abar * Ex + dyn.B * uv +
                                      dyn.Bbar * Eu + dyn.b;
        const Eigen::VectorXd diffusion = dyn.C * xv + dyn.Cbar * Ex + dyn.D * uv +
                                          dyn.Dbar * Eu + dyn.sigma;
        next.col(a * per_atom + h) = drift + sign * diffusion;
      }
    }
    u.depths.push_back(t);
    u.values.push_back(std::move(uk));
    x.depths.push_back(t + 1);
    x.values.push_back(std::move(next));
  }
  return {std::move(u), std::move(x)};
}

}  // namespace mflq::oracle
