#include "mflq/matnum.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace mflq::matnum {

namespace {

double off_diag_norm(const Eigen::MatrixXd& a) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      if (i != j) s += a(i, j) * a(i, j);
    }
  }
  return std::sqrt(s);
}

}  // namespace

SymmetricEigen sym_eigen(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) {
    throw std::invalid_argument("sym_eigen: matrix is not square");
  }
  const Eigen::Index n = m.rows();
  Eigen::MatrixXd a = symmetrize(m);
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);

  const double target = 1e-13 * a.norm();
  constexpr int kMaxSweeps = 64;
  for (int sweep = 0; sweep < kMaxSweeps && off_diag_norm(a) > target; ++sweep) {
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t =
            (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;

        const double app = a(p, p);
        const double aqq = a(q, q);
        a(p, p) = app - t * apq;
        a(q, q) = aqq + t * apq;
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(p, k) = a(k, p);
          a(k, q) = s * akp + c * akq;
          a(q, k) = a(k, q);
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&a](Eigen::Index i, Eigen::Index j) { return a(i, i) < a(j, j); });

  SymmetricEigen out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values(i) = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
    out.vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
  }
  return out;
}

Eigen::MatrixXd pinv(const Eigen::MatrixXd& m) {
  const SymmetricEigen eig = sym_eigen(m);
  const double max_abs = eig.values.size() ? eig.values.cwiseAbs().maxCoeff() : 0.0;
  const double cutoff = kRankTol * max_abs;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(eig.values.size());
  for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
    if (std::abs(eig.values(i)) > cutoff && eig.values(i) != 0.0) {
      inv(i) = 1.0 / eig.values(i);
    }
  }
  return eig.vectors * inv.asDiagonal() * eig.vectors.transpose();
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
  const SymmetricEigen eig = sym_eigen(m);
  return eig.values.size() ? eig.values(0) : 0.0;
}

int gram_rank(const Eigen::MatrixXd& gram, double rel_tol) {
  const SymmetricEigen eig = sym_eigen(gram);
  const double max_abs = eig.values.size() ? eig.values.cwiseAbs().maxCoeff() : 0.0;
  const double cutoff = rel_tol * max_abs;
  int rank = 0;
  for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
    if (std::abs(eig.values(i)) > cutoff && eig.values(i) != 0.0) ++rank;
  }
  return rank;
}

PsdVerdict psd_check(const Eigen::MatrixXd& m, double /*margin*/) {
  PsdVerdict verdict;
  verdict.min_eig = min_eigenvalue(m);
  verdict.is_psd = verdict.min_eig >= -kPsdTol;
  return verdict;
}

RangeCheck range_included(const Eigen::MatrixXd& h, const Eigen::MatrixXd& m) {
  if (h.rows() != m.rows()) {
    throw std::invalid_argument("range_included: incompatible shapes");
  }
  const Eigen::MatrixXd projector =
      Eigen::MatrixXd::Identity(m.rows(), m.cols()) - m * pinv(m);
  const double residual = (projector * h).cwiseAbs().maxCoeff();
  return RangeCheck{residual <= kRangeTol, residual};
}

Eigen::MatrixXd sym_inverse(const Eigen::MatrixXd& m, double rel_tol) {
  const SymmetricEigen eig = sym_eigen(m);
  const double max_abs = eig.values.size() ? eig.values.cwiseAbs().maxCoeff() : 0.0;
  const double cutoff = rel_tol * std::max(1.0, max_abs);
  Eigen::VectorXd inv(eig.values.size());
  for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
    if (std::abs(eig.values(i)) <= cutoff) {
      throw std::runtime_error("sym_inverse: matrix is singular to working precision");
    }
    inv(i) = 1.0 / eig.values(i);
  }
  return eig.vectors * inv.asDiagonal() * eig.vectors.transpose();
}

}  // namespace mflq::matnum
