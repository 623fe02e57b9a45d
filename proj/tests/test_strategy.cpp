#include <random>

#include "doctest.h"
#include "fixtures_common.hpp"
#include "mflq/matnum.hpp"
#include "mflq/oracle.hpp"
#include "mflq/strategy.hpp"

using namespace mflq;

TEST_CASE("synthesis on the scalar indefinite fixture") {
  const ProblemData p = testing::scalar_indefinite();
  const auto outcome = strategy::synthesize_closed_loop(p);
  REQUIRE(outcome.solvable);
  CHECK(outcome.verdict.kind == riccati::RegularityVerdict::Kind::strongly_regular);
  // gains follow -P/(3P-1) and -P/(Pi+2P-1) with the backward values
  CHECK(outcome.law.Theta[0](0, 0) == doctest::Approx(-28.0 / 73.0).epsilon(1e-13));
  CHECK(outcome.law.Theta[1](0, 0) == doctest::Approx(-4.0 / 11.0).epsilon(1e-13));
  CHECK(outcome.law.ThetaBar[0](0, 0) == doctest::Approx(-28.0 / 45.0).epsilon(1e-13));
  CHECK(outcome.law.ThetaBar[1](0, 0) == doctest::Approx(-0.5).epsilon(1e-13));
  for (const auto& v : outcome.law.v) CHECK(v.norm() == 0.0);
  CHECK(outcome.value.value == doctest::Approx(-308.0 / 495.0).epsilon(1e-13));
}

TEST_CASE("synthesis on the zero problem") {
  const auto outcome = strategy::synthesize_closed_loop(make_zero_problem(2, 1, 0, 2));
  REQUIRE(outcome.solvable);
  CHECK(outcome.value.value == 0.0);
  for (const auto& g : outcome.law.Theta) CHECK(g.norm() == 0.0);
}

TEST_CASE("synthesis refuses the irregular cross-term instance") {
  ProblemData p = make_zero_problem(1, 1, 0, 2);
  for (auto& c : p.cost) c.S(0, 0) = 1.0;
  const auto outcome = strategy::synthesize_closed_loop(p);
  CHECK(!outcome.solvable);
  CHECK(outcome.failure_reason.find("range inclusion") != std::string::npos);
}

TEST_CASE("synthesis refuses a non-certifying affine offset") {
  ProblemData p = make_zero_problem(1, 2, 0, 1);
  p.dynamics[0].B(0, 0) = 1.0;
  p.terminal.G(0, 0) = 1.0;
  p.cost[0].rho(1) = 1.0;
  const auto outcome = strategy::synthesize_closed_loop(p);
  CHECK(!outcome.solvable);
  CHECK(outcome.failure_reason.find("affine offset") != std::string::npos);
}

TEST_CASE("value decomposition on the two-control fixture") {
  ProblemData p = testing::two_control_singular();
  {
    const auto sol = riccati::solve_gre(p);
    const auto aff = affine::solve_lre(p, sol);
    const auto report = strategy::value_at(p, sol, aff);
    CHECK(report.value == doctest::Approx(3.0).epsilon(1e-13));  // deterministic start 1
    CHECK(report.quad_mean == doctest::Approx(3.0).epsilon(1e-13));
  }
  testing::set_two_point_start(p, 1.0);
  {
    const auto sol = riccati::solve_gre(p);
    const auto aff = affine::solve_lre(p, sol);
    const auto report = strategy::value_at(p, sol, aff);
    CHECK(report.value == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(report.quad_deviation == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(report.quad_mean == 0.0);
  }
  CHECK(strategy::synthesize_closed_loop(make_zero_problem(1, 1, 0, 1)).value.value == 0.0);
}

TEST_CASE("synthesized strategy is stationary on the tree") {
  ProblemData p = testing::scalar_indefinite();
  testing::set_two_point_start(p, 1.0);
  const auto outcome = strategy::synthesize_closed_loop(p);
  REQUIRE(outcome.solvable);
  auto [u, x] = oracle::induce_control(p, outcome.law.Theta, outcome.law.ThetaBar,
                                       outcome.law.v);
  CHECK(oracle::stationarity_residual(p, u) <= 1e-8);
  CHECK(oracle::exact_cost(p, u, x) == doctest::Approx(outcome.value.value).epsilon(1e-12));
}

TEST_CASE("regularized law approaches the exact minimizer on the two-control fixture") {
  const ProblemData p = testing::two_control_singular();
  const auto step = strategy::minimizing_sequence(p, 1e-6);
  CHECK(!step.singular);
  // The first coordinate cancels the mean in one move; the regularized gain
  // approaches -1 while the second coordinate stays inactive.
  CHECK(step.control.at(0)(0, 0) == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(std::abs(step.control.at(0)(1, 0)) < 1e-9);
  CHECK(step.cost == doctest::Approx(3.0).epsilon(1e-5));
}

TEST_CASE("regularized law of a zero-start homogeneous problem vanishes") {
  ProblemData p = testing::scalar_indefinite(0.0);
  const auto step = strategy::minimizing_sequence(p, 0.5);
  for (const auto& vals : step.control.values) CHECK(vals.norm() == 0.0);
  CHECK(step.cost == 0.0);
}

TEST_CASE("regularized costs approach the synthesized value from above") {
  ProblemData p = testing::scalar_indefinite();
  testing::set_two_point_start(p, 1.0);
  const auto outcome = strategy::synthesize_closed_loop(p);
  REQUIRE(outcome.solvable);
  const auto tight = strategy::minimizing_sequence(p, 1e-8);
  CHECK(std::abs(tight.cost - outcome.value.value) < 1e-6);

  double previous = std::numeric_limits<double>::infinity();
  for (double eps : strategy::geometric_schedule(1.0, 12)) {
    const auto step = strategy::minimizing_sequence(p, eps);
    CHECK(step.cost <= previous + 1e-12);
    CHECK(step.cost >= outcome.value.value - 1e-10);
    previous = step.cost;
  }
}

TEST_CASE("regularized control norms stay below the minimizer norm") {
  for (int which = 0; which < 2; ++which) {
    const ProblemData p =
        which == 0 ? testing::scalar_indefinite() : testing::two_control_singular();
    const auto exact = oracle::solve_exact(p);
    REQUIRE(exact.status != oracle::ExactSolution::Status::unbounded_below);
    const double limit_norm = oracle::l2_norm_sq(p, exact.minimizer);
    for (double eps : {1.0, 0.25, 1e-2, 1e-4}) {
      const auto step = strategy::minimizing_sequence(p, eps);
      CHECK(step.l2_norm_sq <= limit_norm + 1e-10);
    }
  }
}

TEST_CASE("finiteness scan on the convergent fixtures") {
  const auto schedule = strategy::geometric_schedule(1.0, 41);
  {
    const auto scan = strategy::finiteness_scan(testing::two_control_singular(), schedule);
    CHECK(scan.verdict == strategy::FinitenessScan::Verdict::finite);
    CHECK(scan.p_min_eig.back() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(scan.pi_min_eig.back() == doctest::Approx(3.0).epsilon(1e-6));
  }
  {
    const ProblemData p = testing::scalar_indefinite();
    const auto scan = strategy::finiteness_scan(p, schedule);
    CHECK(scan.verdict == strategy::FinitenessScan::Verdict::finite);
    const auto sol = riccati::solve_gre(p);
    CHECK(scan.p_min_eig.back() == doctest::Approx(sol.P[0](0, 0)).epsilon(1e-8));
    CHECK(scan.pi_min_eig.back() == doctest::Approx(sol.Pi[0](0, 0)).epsilon(1e-8));
  }
  {
    const auto scan = strategy::finiteness_scan(make_zero_problem(1, 1, 0, 2), schedule);
    CHECK(scan.verdict == strategy::FinitenessScan::Verdict::finite);
  }
}

TEST_CASE("finiteness scan flags the unbounded instance through the margin test") {
  const auto scan = strategy::finiteness_scan(testing::unbounded_instance(),
                                              strategy::geometric_schedule(1.0, 40));
  CHECK(scan.verdict == strategy::FinitenessScan::Verdict::infinite);
  CHECK(scan.convexity_violated);
}

TEST_CASE("open-loop detector converges on the two-control fixture") {
  const ProblemData p = testing::two_control_singular();
  const auto det = strategy::detect_open_loop(p, strategy::geometric_schedule(1.0, 41));
  REQUIRE(det.verdict == strategy::OpenLoopDetection::Verdict::solvable);
  CHECK(det.certified);
  CHECK(det.stationarity <= 1e-8);
  const auto exact = oracle::solve_exact(p);
  CHECK(oracle::l2_dist(p, det.limit, exact.minimizer) < 1e-6);
  CHECK(det.limit_cost == doctest::Approx(3.0).epsilon(1e-8));
}

TEST_CASE("open-loop detector recovers the closed-loop control when strongly regular") {
  ProblemData p = testing::scalar_indefinite();
  testing::set_two_point_start(p, 1.0);
  const auto det = strategy::detect_open_loop(p, strategy::geometric_schedule(1.0, 41));
  REQUIRE(det.verdict == strategy::OpenLoopDetection::Verdict::solvable);
  const auto outcome = strategy::synthesize_closed_loop(p);
  REQUIRE(outcome.solvable);
  auto [u, x] = oracle::induce_control(p, outcome.law.Theta, outcome.law.ThetaBar,
                                       outcome.law.v);
  CHECK(oracle::l2_dist(p, det.limit, u) < 1e-6);
}

TEST_CASE("solvability report gates the detector and keeps the implication chain") {
  const auto schedule = strategy::geometric_schedule(1.0, 41);
  {
    const auto report = strategy::solvability_report(testing::unbounded_instance(), schedule);
    CHECK(report.finiteness.verdict == strategy::FinitenessScan::Verdict::infinite);
    CHECK(!report.open_loop.has_value());
    CHECK(!report.closed_loop.solvable);
  }
  for (int which = 0; which < 2; ++which) {
    const ProblemData p =
        which == 0 ? testing::scalar_indefinite() : testing::two_control_singular();
    const auto report = strategy::solvability_report(p, schedule);
    if (report.closed_loop.solvable) {
      REQUIRE(report.open_loop.has_value());
      CHECK(report.open_loop->verdict == strategy::OpenLoopDetection::Verdict::solvable);
    }
    if (report.open_loop &&
        report.open_loop->verdict == strategy::OpenLoopDetection::Verdict::solvable) {
      CHECK(report.finiteness.verdict == strategy::FinitenessScan::Verdict::finite);
    }
  }
}

TEST_CASE("synthesized value lower-bounds sampled admissible controls") {
  std::mt19937_64 rng(111);
  std::uniform_real_distribution<double> unif(-1.5, 1.5);
  testing::RandomOptions opt;
  opt.standard_condition = true;
  opt.inhomogeneous = true;
  opt.two_atoms = true;
  for (int which = 0; which < 4; ++which) {
    ProblemData p;
    if (which == 0) {
      p = testing::scalar_indefinite();
      testing::set_two_point_start(p, 1.0);
    } else {
      p = testing::random_instance(rng, opt);
    }
    const auto outcome = strategy::synthesize_closed_loop(p);
    REQUIRE(outcome.solvable);
    for (int trial = 0; trial < 25; ++trial) {
      oracle::TreeProcess u = oracle::zero_control(p);
      for (auto& vals : u.values) {
        for (Eigen::Index i = 0; i < vals.rows(); ++i) {
          for (Eigen::Index j = 0; j < vals.cols(); ++j) vals(i, j) = unif(rng);
        }
      }
      CHECK(oracle::exact_cost(p, u) >= outcome.value.value - 1e-8);
    }
  }
}

TEST_CASE("open-loop detector on the zero problem returns the zero control") {
  const ProblemData p = make_zero_problem(1, 1, 0, 2);
  const auto det = strategy::detect_open_loop(p, strategy::geometric_schedule(1.0, 12));
  REQUIRE(det.verdict == strategy::OpenLoopDetection::Verdict::solvable);
  for (const auto& vals : det.limit.values) CHECK(vals.norm() == 0.0);
  CHECK(det.limit_cost == 0.0);
}

TEST_CASE("gain diagnostic stays bounded over the schedule on solvable fixtures") {
  const ProblemData p = testing::two_control_singular();
  const auto det = strategy::detect_open_loop(p, strategy::geometric_schedule(1.0, 30));
  CHECK(det.gain_sup < 1e3);
  double max_seen = 0.0;
  for (double g : det.gain_sum_sq) max_seen = std::max(max_seen, g);
  CHECK(det.gain_sup == doctest::Approx(max_seen));
}
