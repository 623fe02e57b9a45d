#include "mflq/affine.hpp"

#include <stdexcept>

#include "mflq/matnum.hpp"

namespace mflq::affine {

AffineSolution solve_lre(const ProblemData& p, const riccati::RiccatiSolution& sol) {
  const int T = p.horizon();
  if (static_cast<int>(sol.Ups.size()) != T) {
    throw std::invalid_argument("solve_lre: Riccati solution does not match the horizon");
  }

  AffineSolution out;
  out.eta.assign(static_cast<std::size_t>(T + 1), Eigen::VectorXd());
  out.zeta.assign(static_cast<std::size_t>(T), Eigen::VectorXd());
  out.v.assign(static_cast<std::size_t>(T), Eigen::VectorXd());
  out.range_ok.assign(static_cast<std::size_t>(T), true);
  out.range_residual.assign(static_cast<std::size_t>(T), 0.0);

  out.eta[static_cast<std::size_t>(T)] = p.terminal.g + p.terminal.gbar;

  for (int t = T - 1; t >= 0; --t) {
    const StageDynamics& d = p.dyn(t);
    const StageCost& c = p.stage(t);
    const Eigen::MatrixXd& Pn = sol.P[static_cast<std::size_t>(t + 1)];
    const Eigen::MatrixXd& Pin = sol.Pi[static_cast<std::size_t>(t + 1)];
    const Eigen::VectorXd& eta_next = out.eta[static_cast<std::size_t>(t + 1)];

    const Eigen::MatrixXd Asum = d.A + d.Abar;
    const Eigen::MatrixXd Bsum = d.B + d.Bbar;
    const Eigen::MatrixXd Csum = d.C + d.Cbar;
    const Eigen::MatrixXd Dsum = d.D + d.Dbar;
    const Eigen::VectorXd carried = Pin * d.b + eta_next;

    const Eigen::VectorXd zeta = Dsum.transpose() * Pn * d.sigma +
                                 Bsum.transpose() * carried + c.rho + c.rhobar;
    const Eigen::MatrixXd upsbar_pinv = matnum::pinv(sol.UpsBar[static_cast<std::size_t>(t)]);
    const Eigen::VectorXd v = -upsbar_pinv * zeta;

    const auto range =
        matnum::range_included(zeta, sol.UpsBar[static_cast<std::size_t>(t)]);
    out.range_ok[static_cast<std::size_t>(t)] = range.included;
    out.range_residual[static_cast<std::size_t>(t)] = range.residual;
    if (!range.included) out.certifying = false;

    Eigen::VectorXd eta = Csum.transpose() * Pn * d.sigma + Asum.transpose() * carried -
                          sol.Hbar[static_cast<std::size_t>(t)].transpose() *
                              (upsbar_pinv * zeta) +
                          c.q + c.qbar;
    if (!eta.allFinite() || !zeta.allFinite()) {
      throw std::runtime_error("solve_lre: non-finite value at step k=" +
                               std::to_string(p.dims.l + t));
    }
    out.zeta[static_cast<std::size_t>(t)] = zeta;
    out.v[static_cast<std::size_t>(t)] = v;
    out.eta[static_cast<std::size_t>(t)] = std::move(eta);
  }
  return out;
}

}  // namespace mflq::affine
