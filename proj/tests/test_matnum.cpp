#include <random>

#include "doctest.h"
#include "fixtures_common.hpp"
#include "mflq/matnum.hpp"

using namespace mflq;

namespace {

Eigen::MatrixXd diag2(double a, double b) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

}  // namespace

TEST_CASE("pseudo-inverse on fixed matrices") {
  CHECK((matnum::pinv(diag2(12.0, 0.0)) - diag2(1.0 / 12.0, 0.0)).norm() < 1e-12);
  CHECK(matnum::pinv(Eigen::MatrixXd::Zero(3, 3)).norm() == 0.0);
  CHECK((matnum::pinv(diag2(2.0, 2.0)) - diag2(0.5, 0.5)).norm() < 1e-12);
}

TEST_CASE("pseudo-inverse identities on random symmetric matrices") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const int size = 1 + static_cast<int>(rng() % 8);
    const int rank = trial % 3 == 0 ? 1 + static_cast<int>(rng() % size) : size;
    const Eigen::MatrixXd m = testing::random_symmetric_with_rank(rng, size, rank);
    const Eigen::MatrixXd mp = matnum::pinv(m);
    CHECK((m * mp * m - m).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((mp * m * mp - mp).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(((m * mp) - (m * mp).transpose()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(((mp * m) - (mp * m).transpose()).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("pseudo-inverse involution on well-conditioned matrices") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int size = 1 + static_cast<int>(rng() % 6);
    const Eigen::MatrixXd m = testing::random_psd(rng, size, 0.5);
    CHECK((matnum::pinv(matnum::pinv(m)) - m).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("semidefiniteness checks") {
  Eigen::MatrixXd eleven(1, 1);
  eleven(0, 0) = 11.0;
  const auto big = matnum::psd_check(eleven);
  CHECK(big.is_psd);
  CHECK(big.is_pd_with_margin(1.0));

  const auto z = matnum::psd_check(Eigen::MatrixXd::Zero(1, 1));
  CHECK(z.is_psd);
  CHECK(!z.is_pd_with_margin(1.0));

  const auto tiny_neg = matnum::psd_check(diag2(1.0, -1e-6));
  CHECK(!tiny_neg.is_psd);
  CHECK(tiny_neg.min_eig == doctest::Approx(-1e-6).epsilon(1e-6));
}

TEST_CASE("range inclusion on fixed cases") {
  Eigen::MatrixXd h(2, 1);
  h << 1.0, -1.0;
  CHECK(matnum::range_included(h, diag2(2.0, 2.0)).included);

  Eigen::MatrixXd h1(1, 1);
  h1 << 1.0;
  const auto miss = matnum::range_included(h1, Eigen::MatrixXd::Zero(1, 1));
  CHECK(!miss.included);
  CHECK(miss.residual == doctest::Approx(1.0));

  Eigen::MatrixXd h12(2, 1);
  h12 << 12.0, 0.0;
  const auto hit = matnum::range_included(h12, diag2(12.0, 0.0));
  CHECK(hit.included);
  CHECK(hit.residual < 1e-14);
}

TEST_CASE("range inclusion agrees with the rank test") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const int size = 1 + static_cast<int>(rng() % 5);
    const int cols = 1 + static_cast<int>(rng() % 3);
    Eigen::MatrixXd m;
    if (trial % 2 == 0) {
      Eigen::MatrixXd basis =
          testing::random_matrix(rng, size, 1 + static_cast<int>(rng() % size), 1.0);
      m = basis * basis.transpose();
    } else {
      m = testing::random_symmetric(rng, size, 1.5);
    }
    Eigen::MatrixXd h;
    if (trial % 3 == 0) {
      h = m * testing::random_matrix(rng, size, cols, 1.0);  // inside the range
    } else {
      h = testing::random_matrix(rng, size, cols, 1.0);
    }
    const bool included = matnum::range_included(h, m).included;
    const int rank_m = matnum::gram_rank(m * m.transpose());
    const int rank_aug = matnum::gram_rank(m * m.transpose() + h * h.transpose());
    CHECK(included == (rank_aug == rank_m));
  }
}

TEST_CASE("jacobi eigendecomposition reconstructs the input") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    const int size = 1 + static_cast<int>(rng() % 8);
    const Eigen::MatrixXd m = testing::random_symmetric(rng, size, 3.0);
    const auto eig = matnum::sym_eigen(m);
    const Eigen::MatrixXd rebuilt =
        eig.vectors * eig.values.asDiagonal() * eig.vectors.transpose();
    CHECK((rebuilt - m).cwiseAbs().maxCoeff() < 1e-11 * std::max(1.0, m.norm()));
    const Eigen::MatrixXd gram =
        eig.vectors.transpose() * eig.vectors - Eigen::MatrixXd::Identity(size, size);
    CHECK(gram.cwiseAbs().maxCoeff() < 1e-12);
    for (int i = 1; i < size; ++i) CHECK(eig.values(i - 1) <= eig.values(i));
  }
}
