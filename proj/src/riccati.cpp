#include "mflq/riccati.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "mflq/matnum.hpp"

namespace mflq::riccati {

namespace {

void require_finite(const Eigen::MatrixXd& m, const char* what, int k) {
  if (!m.allFinite()) {
    throw std::runtime_error(std::string("riccati: non-finite ") + what + " at step k=" +
                             std::to_string(k));
  }
}

RiccatiSolution solve_impl(const ProblemData& p, double eps) {
  const int T = p.horizon();
  const int n = p.dims.n;

  RiccatiSolution sol;
  sol.start = p.dims.l;
  sol.eps = eps;
  sol.P.assign(static_cast<std::size_t>(T + 1), Eigen::MatrixXd());
  sol.Pi.assign(static_cast<std::size_t>(T + 1), Eigen::MatrixXd());
  sol.Ups.resize(static_cast<std::size_t>(T));
  sol.UpsBar.resize(static_cast<std::size_t>(T));
  sol.H.resize(static_cast<std::size_t>(T));
  sol.Hbar.resize(static_cast<std::size_t>(T));
  sol.Theta.resize(static_cast<std::size_t>(T));
  sol.ThetaBar.resize(static_cast<std::size_t>(T));

  sol.P[static_cast<std::size_t>(T)] = matnum::symmetrize(p.terminal.G);
  sol.Pi[static_cast<std::size_t>(T)] = matnum::symmetrize(p.terminal.G + p.terminal.Gbar);

  const Eigen::MatrixXd eye_m = Eigen::MatrixXd::Identity(p.dims.m, p.dims.m);

  for (int t = T - 1; t >= 0; --t) {
    const int k = p.dims.l + t;
    const StageDynamics& d = p.dyn(t);
    const StageCost& c = p.stage(t);
    const Eigen::MatrixXd& Pn = sol.P[static_cast<std::size_t>(t + 1)];
    const Eigen::MatrixXd& Pin = sol.Pi[static_cast<std::size_t>(t + 1)];

    const Eigen::MatrixXd Asum = d.A + d.Abar;
    const Eigen::MatrixXd Bsum = d.B + d.Bbar;
    const Eigen::MatrixXd Csum = d.C + d.Cbar;
    const Eigen::MatrixXd Dsum = d.D + d.Dbar;

    Eigen::MatrixXd Ups = c.R + d.B.transpose() * Pn * d.B + d.D.transpose() * Pn * d.D;
    Eigen::MatrixXd UpsBar = c.R + c.Rbar + Bsum.transpose() * Pin * Bsum +
                             Dsum.transpose() * Pn * Dsum;
    if (eps > 0.0) {
      Ups += eps * eye_m;
      UpsBar += eps * eye_m;
    }
    Ups = matnum::symmetrize(Ups);
    UpsBar = matnum::symmetrize(UpsBar);

    const Eigen::MatrixXd H =
        d.B.transpose() * Pn * d.A + d.D.transpose() * Pn * d.C + c.S;
    const Eigen::MatrixXd Hbar =
        Bsum.transpose() * Pin * Asum + Dsum.transpose() * Pn * Csum + c.S + c.Sbar;

    Eigen::MatrixXd UpsInv, UpsBarInv;
    if (eps > 0.0) {
      // The regularized weights are invertible whenever the homogeneous cost
      // is convex (their spectrum sits above eps); only machine-level
      // singularity is treated as a failure signal here, the eps-margin test
      // lives in the finiteness scan.
      constexpr double kEpsInverseTol = 1e-15;
      try {
        UpsInv = matnum::sym_inverse(Ups, kEpsInverseTol);
      } catch (const std::runtime_error&) {
        sol.singular_steps.push_back(k);
        UpsInv = matnum::pinv(Ups);
      }
      try {
        UpsBarInv = matnum::sym_inverse(UpsBar, kEpsInverseTol);
      } catch (const std::runtime_error&) {
        sol.singular_steps.push_back(k);
        UpsBarInv = matnum::pinv(UpsBar);
      }
    } else {
      UpsInv = matnum::pinv(Ups);
      UpsBarInv = matnum::pinv(UpsBar);
    }

    Eigen::MatrixXd P = c.Q + d.A.transpose() * Pn * d.A + d.C.transpose() * Pn * d.C -
                        H.transpose() * UpsInv * H;
    Eigen::MatrixXd Pi = c.Q + c.Qbar + Asum.transpose() * Pin * Asum +
                         Csum.transpose() * Pn * Csum -
                         Hbar.transpose() * UpsBarInv * Hbar;
    P = matnum::symmetrize(P);
    Pi = matnum::symmetrize(Pi);
    require_finite(P, "P", k);
    require_finite(Pi, "Pi", k);

    sol.Ups[static_cast<std::size_t>(t)] = Ups;
    sol.UpsBar[static_cast<std::size_t>(t)] = UpsBar;
    sol.H[static_cast<std::size_t>(t)] = H;
    sol.Hbar[static_cast<std::size_t>(t)] = Hbar;
    sol.Theta[static_cast<std::size_t>(t)] = -UpsInv * H;
    sol.ThetaBar[static_cast<std::size_t>(t)] = -UpsBarInv * Hbar;
    sol.P[static_cast<std::size_t>(t)] = P;
    sol.Pi[static_cast<std::size_t>(t)] = Pi;
  }
  (void)n;
  return sol;
}

}  // namespace

std::string RegularityVerdict::kind_name() const {
  switch (kind) {
    case Kind::strongly_regular: return "strongly_regular";
    case Kind::regular: return "regular";
    case Kind::irregular: return "irregular";
  }
  return "irregular";
}

RiccatiSolution solve_gre(const ProblemData& p) { return solve_impl(p, 0.0); }

RiccatiSolution solve_gre_eps(const ProblemData& p, double eps) {
  if (!(eps > 0.0)) {
    throw std::invalid_argument("solve_gre_eps: eps must be positive");
  }
  return solve_impl(p, eps);
}

RegularityVerdict classify(const RiccatiSolution& sol) {
  RegularityVerdict verdict;
  const int T = static_cast<int>(sol.Ups.size());

  double alpha = std::numeric_limits<double>::infinity();
  bool psd_ok = true;
  bool range_ok = true;
  bool gains_finite = true;

  for (int t = 0; t < T; ++t) {
    const auto ups = matnum::psd_check(sol.Ups[static_cast<std::size_t>(t)]);
    const auto upsbar = matnum::psd_check(sol.UpsBar[static_cast<std::size_t>(t)]);
    verdict.ups_min_eig.push_back(ups.min_eig);
    verdict.upsbar_min_eig.push_back(upsbar.min_eig);
    alpha = std::min(alpha, std::min(ups.min_eig, upsbar.min_eig));
    if (!ups.is_psd) {
      psd_ok = false;
      verdict.failures.push_back({sol.start + t, "semidefiniteness of the control weight", ups.min_eig});
    }
    if (!upsbar.is_psd) {
      psd_ok = false;
      verdict.failures.push_back(
          {sol.start + t, "semidefiniteness of the mean control weight", upsbar.min_eig});
    }

    const auto range = matnum::range_included(sol.H[static_cast<std::size_t>(t)],
                                              sol.Ups[static_cast<std::size_t>(t)]);
    const auto rangebar = matnum::range_included(sol.Hbar[static_cast<std::size_t>(t)],
                                                 sol.UpsBar[static_cast<std::size_t>(t)]);
    verdict.range_residual.push_back(range.residual);
    verdict.rangebar_residual.push_back(rangebar.residual);
    if (!range.included) {
      range_ok = false;
      verdict.failures.push_back({sol.start + t, "range inclusion of the cross term", range.residual});
    }
    if (!rangebar.included) {
      range_ok = false;
      verdict.failures.push_back(
          {sol.start + t, "range inclusion of the mean cross term", rangebar.residual});
    }

    const double gn = sol.Theta[static_cast<std::size_t>(t)].norm();
    const double gbn = sol.ThetaBar[static_cast<std::size_t>(t)].norm();
    verdict.gain_norm.push_back(gn);
    verdict.gainbar_norm.push_back(gbn);
    if (!std::isfinite(gn) || !std::isfinite(gbn)) {
      gains_finite = false;
      verdict.failures.push_back({sol.start + t, "finiteness of the feedback gains", 0.0});
    }
  }

  verdict.alpha = T > 0 ? alpha : 0.0;
  if (T > 0 && verdict.alpha > matnum::kPsdTol && gains_finite) {
    verdict.kind = RegularityVerdict::Kind::strongly_regular;
  } else if (psd_ok && range_ok && gains_finite) {
    verdict.kind = RegularityVerdict::Kind::regular;
  } else {
    verdict.kind = RegularityVerdict::Kind::irregular;
  }
  return verdict;
}

LyapunovSolution solve_lyapunov(const ProblemData& p,
                                const std::vector<Eigen::MatrixXd>& Theta,
                                const std::vector<Eigen::MatrixXd>& ThetaBar) {
  const int T = p.horizon();
  if (static_cast<int>(Theta.size()) != T || static_cast<int>(ThetaBar.size()) != T) {
    throw std::invalid_argument("solve_lyapunov: gain sequences must span the horizon");
  }
  for (int t = 0; t < T; ++t) {
    if (Theta[static_cast<std::size_t>(t)].rows() != p.dims.m ||
        Theta[static_cast<std::size_t>(t)].cols() != p.dims.n ||
        ThetaBar[static_cast<std::size_t>(t)].rows() != p.dims.m ||
        ThetaBar[static_cast<std::size_t>(t)].cols() != p.dims.n) {
      throw std::invalid_argument("solve_lyapunov: gains must be m x n at every step");
    }
  }

  LyapunovSolution out;
  out.P.assign(static_cast<std::size_t>(T + 1), Eigen::MatrixXd());
  out.Pi.assign(static_cast<std::size_t>(T + 1), Eigen::MatrixXd());
  out.P[static_cast<std::size_t>(T)] = matnum::symmetrize(p.terminal.G);
  out.Pi[static_cast<std::size_t>(T)] = matnum::symmetrize(p.terminal.G + p.terminal.Gbar);

  for (int t = T - 1; t >= 0; --t) {
    const int k = p.dims.l + t;
    const StageDynamics& d = p.dyn(t);
    const StageCost& c = p.stage(t);
    const Eigen::MatrixXd& Pn = out.P[static_cast<std::size_t>(t + 1)];
    const Eigen::MatrixXd& Pin = out.Pi[static_cast<std::size_t>(t + 1)];
    const Eigen::MatrixXd& Th = Theta[static_cast<std::size_t>(t)];
    // ThetaBar is the gain of the mean law E u = ThetaBar E x + v.
    const Eigen::MatrixXd& La = ThetaBar[static_cast<std::size_t>(t)];

    const Eigen::MatrixXd Acl = d.A + d.B * Th;
    const Eigen::MatrixXd Ccl = d.C + d.D * Th;
    const Eigen::MatrixXd Ssum = c.S + c.Sbar;
    const Eigen::MatrixXd Abar_cl = d.A + d.Abar + (d.B + d.Bbar) * La;
    const Eigen::MatrixXd Cbar_cl = d.C + d.Cbar + (d.D + d.Dbar) * La;

    Eigen::MatrixXd P = Acl.transpose() * Pn * Acl + Ccl.transpose() * Pn * Ccl +
                        Th.transpose() * c.R * Th + c.S.transpose() * Th +
                        Th.transpose() * c.S + c.Q;
    Eigen::MatrixXd Pi = Abar_cl.transpose() * Pin * Abar_cl +
                         Cbar_cl.transpose() * Pn * Cbar_cl +
                         La.transpose() * (c.R + c.Rbar) * La +
                         Ssum.transpose() * La + La.transpose() * Ssum + c.Q + c.Qbar;
    P = matnum::symmetrize(P);
    Pi = matnum::symmetrize(Pi);
    require_finite(P, "Lyapunov P", k);
    require_finite(Pi, "Lyapunov Pi", k);
    out.P[static_cast<std::size_t>(t)] = P;
    out.Pi[static_cast<std::size_t>(t)] = Pi;
  }
  return out;
}

KleinmanResult kleinman_iterate(const ProblemData& p, int max_iters, double tol) {
  const int T = p.horizon();
  KleinmanResult result;

  const std::vector<Eigen::MatrixXd> zero_gain(
      static_cast<std::size_t>(T), Eigen::MatrixXd::Zero(p.dims.m, p.dims.n));
  LyapunovSolution current = solve_lyapunov(p, zero_gain, zero_gain);
  result.P_iterates.push_back(current.P);
  result.Pi_iterates.push_back(current.Pi);

  std::vector<Eigen::MatrixXd> Theta(static_cast<std::size_t>(T));
  std::vector<Eigen::MatrixXd> ThetaBar(static_cast<std::size_t>(T));

  for (int iter = 0; iter < max_iters; ++iter) {
    for (int t = 0; t < T; ++t) {
      const int k = p.dims.l + t;
      const StageDynamics& d = p.dyn(t);
      const StageCost& c = p.stage(t);
      const Eigen::MatrixXd& Pn = current.P[static_cast<std::size_t>(t + 1)];
      const Eigen::MatrixXd& Pin = current.Pi[static_cast<std::size_t>(t + 1)];
      const Eigen::MatrixXd Bsum = d.B + d.Bbar;
      const Eigen::MatrixXd Dsum = d.D + d.Dbar;

      const Eigen::MatrixXd Ups = matnum::symmetrize(
          c.R + d.B.transpose() * Pn * d.B + d.D.transpose() * Pn * d.D);
      const Eigen::MatrixXd UpsBar = matnum::symmetrize(
          c.R + c.Rbar + Bsum.transpose() * Pin * Bsum + Dsum.transpose() * Pn * Dsum);
      const Eigen::MatrixXd H =
          d.B.transpose() * Pn * d.A + d.D.transpose() * Pn * d.C + c.S;
      const Eigen::MatrixXd Hbar = Bsum.transpose() * Pin * (d.A + d.Abar) +
                                   Dsum.transpose() * Pn * (d.C + d.Cbar) + c.S + c.Sbar;
      try {
        Theta[static_cast<std::size_t>(t)] = -matnum::sym_inverse(Ups) * H;
        ThetaBar[static_cast<std::size_t>(t)] = -matnum::sym_inverse(UpsBar) * Hbar;
      } catch (const std::runtime_error&) {
        result.failure = "singular control weight at step k=" + std::to_string(k) +
                         " during iteration " + std::to_string(iter) +
                         " (instance not uniformly convex)";
        result.iterations = iter;
        return result;
      }
    }

    LyapunovSolution next = solve_lyapunov(p, Theta, ThetaBar);
    double diff = 0.0;
    for (int t = 0; t <= T; ++t) {
      diff = std::max(diff, (next.P[static_cast<std::size_t>(t)] -
                             current.P[static_cast<std::size_t>(t)]).norm() +
                                (next.Pi[static_cast<std::size_t>(t)] -
                                 current.Pi[static_cast<std::size_t>(t)]).norm());
    }
    current = std::move(next);
    result.P_iterates.push_back(current.P);
    result.Pi_iterates.push_back(current.Pi);
    result.step_diffs.push_back(diff);
    result.iterations = iter + 1;

    if (diff <= tol) {
      result.converged = true;
      break;
    }
  }

  if (!result.converged && !result.failure) {
    result.failure = "no convergence within " + std::to_string(max_iters) + " iterations";
  }

  // Package the fixed point with its gain blocks.
  RiccatiSolution sol;
  sol.start = p.dims.l;
  sol.P = current.P;
  sol.Pi = current.Pi;
  sol.Ups.resize(static_cast<std::size_t>(T));
  sol.UpsBar.resize(static_cast<std::size_t>(T));
  sol.H.resize(static_cast<std::size_t>(T));
  sol.Hbar.resize(static_cast<std::size_t>(T));
  sol.Theta.resize(static_cast<std::size_t>(T));
  sol.ThetaBar.resize(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const StageDynamics& d = p.dyn(t);
    const StageCost& c = p.stage(t);
    const Eigen::MatrixXd& Pn = current.P[static_cast<std::size_t>(t + 1)];
    const Eigen::MatrixXd& Pin = current.Pi[static_cast<std::size_t>(t + 1)];
    const Eigen::MatrixXd Bsum = d.B + d.Bbar;
    const Eigen::MatrixXd Dsum = d.D + d.Dbar;
    sol.Ups[static_cast<std::size_t>(t)] = matnum::symmetrize(
        c.R + d.B.transpose() * Pn * d.B + d.D.transpose() * Pn * d.D);
    sol.UpsBar[static_cast<std::size_t>(t)] = matnum::symmetrize(
        c.R + c.Rbar + Bsum.transpose() * Pin * Bsum + Dsum.transpose() * Pn * Dsum);
    sol.H[static_cast<std::size_t>(t)] =
        d.B.transpose() * Pn * d.A + d.D.transpose() * Pn * d.C + c.S;
    sol.Hbar[static_cast<std::size_t>(t)] = Bsum.transpose() * Pin * (d.A + d.Abar) +
                                            Dsum.transpose() * Pn * (d.C + d.Cbar) +
                                            c.S + c.Sbar;
    sol.Theta[static_cast<std::size_t>(t)] =
        -matnum::pinv(sol.Ups[static_cast<std::size_t>(t)]) * sol.H[static_cast<std::size_t>(t)];
    sol.ThetaBar[static_cast<std::size_t>(t)] =
        -matnum::pinv(sol.UpsBar[static_cast<std::size_t>(t)]) *
        sol.Hbar[static_cast<std::size_t>(t)];
  }
  result.solution = std::move(sol);
  return result;
}

}  // namespace mflq::riccati
