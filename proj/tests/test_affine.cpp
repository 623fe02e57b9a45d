#include <random>

#include "doctest.h"
#include "fixtures_common.hpp"
#include "mflq/affine.hpp"
#include "mflq/oracle.hpp"
#include "mflq/riccati.hpp"

using namespace mflq;

TEST_CASE("homogeneous problems have a vanishing affine pass") {
  const ProblemData p = testing::scalar_indefinite();
  const auto sol = riccati::solve_gre(p);
  const auto aff = affine::solve_lre(p, sol);
  for (const auto& v : aff.eta) CHECK(v.norm() == 0.0);
  for (const auto& v : aff.zeta) CHECK(v.norm() == 0.0);
  for (const auto& v : aff.v) CHECK(v.norm() == 0.0);
  CHECK(aff.certifying);
}

TEST_CASE("one-step drift offset, drift-only control") {
  const ProblemData p = testing::affine_onestep(0.0);
  const auto sol = riccati::solve_gre(p);
  const auto aff = affine::solve_lre(p, sol);
  // UpsBar = 1 here, so the offset simply cancels the drift.
  CHECK(sol.UpsBar[0](0, 0) == doctest::Approx(1.0));
  CHECK(aff.zeta[0](0) == doctest::Approx(1.0));
  CHECK(aff.v[0](0) == doctest::Approx(-1.0));
  CHECK(aff.eta[0].norm() < 1e-15);
  CHECK(aff.certifying);
}

TEST_CASE("one-step drift offset with diffusion-coupled control") {
  const ProblemData p = testing::affine_onestep(1.0);
  const auto sol = riccati::solve_gre(p);
  const auto aff = affine::solve_lre(p, sol);
  CHECK(sol.UpsBar[0](0, 0) == doctest::Approx(2.0));
  CHECK(aff.zeta[0](0) == doctest::Approx(1.0));
  CHECK(aff.v[0](0) == doctest::Approx(-0.5));
  // Cross-check the resulting optimum against the exact tree solver.
  const auto exact = oracle::solve_exact(p);
  CHECK(exact.status == oracle::ExactSolution::Status::unique);
  CHECK(exact.value == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("affine pass is linear in the inhomogeneous data") {
  std::mt19937_64 rng(53);
  testing::RandomOptions opt;
  opt.standard_condition = true;
  opt.inhomogeneous = true;
  for (int trial = 0; trial < 10; ++trial) {
    const ProblemData p = testing::random_instance(rng, opt);
    const double c = 2.75;
    ProblemData scaled = p;
    for (auto& d : scaled.dynamics) {
      d.b *= c;
      d.sigma *= c;
    }
    for (auto& k : scaled.cost) {
      k.q *= c;
      k.qbar *= c;
      k.rho *= c;
      k.rhobar *= c;
    }
    scaled.terminal.g *= c;
    scaled.terminal.gbar *= c;

    const auto sol = riccati::solve_gre(p);
    const auto aff = affine::solve_lre(p, sol);
    const auto sol_scaled = riccati::solve_gre(scaled);
    const auto aff_scaled = affine::solve_lre(scaled, sol_scaled);
    for (std::size_t t = 0; t < aff.eta.size(); ++t) {
      CHECK((aff_scaled.eta[t] - c * aff.eta[t]).cwiseAbs().maxCoeff() < 1e-10);
    }
    for (std::size_t t = 0; t < aff.zeta.size(); ++t) {
      CHECK((aff_scaled.zeta[t] - c * aff.zeta[t]).cwiseAbs().maxCoeff() < 1e-10);
      CHECK((aff_scaled.v[t] - c * aff.v[t]).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("offset outside a singular mean weight marks the pass non-certifying") {
  // Second control column never enters the dynamics, so UpsBar = diag(*, 0);
  // a linear cost on that column pushes zeta outside the range.
  ProblemData p = make_zero_problem(1, 2, 0, 1);
  p.dynamics[0].B(0, 0) = 1.0;
  p.terminal.G(0, 0) = 1.0;
  p.cost[0].rho(1) = 1.0;
  const auto sol = riccati::solve_gre(p);
  const auto aff = affine::solve_lre(p, sol);
  CHECK(!aff.certifying);
  CHECK(!aff.range_ok[0]);
  CHECK(aff.range_residual[0] == doctest::Approx(1.0));
}
