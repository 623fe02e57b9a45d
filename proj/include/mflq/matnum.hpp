#pragma once

#include <Eigen/Dense>

namespace mflq::matnum {

// Tolerances shared by the regularity classifier.
inline constexpr double kRankTol = 1e-10;   // relative eigenvalue cutoff in pinv
inline constexpr double kPsdTol = 1e-10;    // absolute slack in semidefinite tests
inline constexpr double kRangeTol = 1e-9;   // absolute residual cap for range inclusion

struct SymmetricEigen {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // orthonormal columns, same order as values
};

// Cyclic Jacobi sweeps; the off-diagonal Frobenius norm is driven below
// 1e-13 * ||M||_F. Input is symmetrized first.
SymmetricEigen sym_eigen(const Eigen::MatrixXd& m);

// Moore-Penrose pseudo-inverse of a symmetric matrix. Eigenvalues with
// |lambda| <= kRankTol * max|lambda| are treated as zero.
Eigen::MatrixXd pinv(const Eigen::MatrixXd& m);

double min_eigenvalue(const Eigen::MatrixXd& m);

// Numerical rank by eigenvalue thresholding of a symmetric PSD Gram matrix.
int gram_rank(const Eigen::MatrixXd& gram, double rel_tol = kRankTol);

struct PsdVerdict {
  double min_eig = 0.0;
  bool is_psd = false;
  bool is_pd_with_margin(double margin) const { return min_eig >= margin - kPsdTol; }
};

PsdVerdict psd_check(const Eigen::MatrixXd& m, double margin = 0.0);

struct RangeCheck {
  bool included = false;
  double residual = 0.0;  // max-norm of (I - M M^+) H
};

// Tests whether every column of H lies in the range of symmetric M.
RangeCheck range_included(const Eigen::MatrixXd& h, const Eigen::MatrixXd& m);

// Inverse of a symmetric matrix through its eigendecomposition. Throws
// std::runtime_error when the smallest |eigenvalue| falls below
// rel_tol * max(1, max|eigenvalue|).
Eigen::MatrixXd sym_inverse(const Eigen::MatrixXd& m, double rel_tol = 1e-12);

inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

}  // namespace mflq::matnum
