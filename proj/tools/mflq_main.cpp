#include <chrono>
#include <cmath>
#include <iostream>
#include <random>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mflq/affine.hpp"
#include "mflq/matnum.hpp"
#include "mflq/moments.hpp"
#include "mflq/oracle.hpp"
#include "mflq/problem.hpp"
#include "mflq/riccati.hpp"
#include "mflq/strategy.hpp"

namespace {

using nlohmann::ordered_json;

constexpr const char* kVersion = "0.1.0";

// Exit code contract: 0 affirmative, 2 negative verdict, 3 undetermined,
// 1 operational error.
enum ExitCode { kOk = 0, kError = 1, kNegative = 2, kUndetermined = 3 };

ordered_json matrix_json(const Eigen::MatrixXd& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

ordered_json vector_json(const Eigen::VectorXd& v) {
  ordered_json out = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

ordered_json matrix_seq_json(const std::vector<Eigen::MatrixXd>& seq) {
  ordered_json out = ordered_json::array();
  for (const auto& m : seq) out.push_back(matrix_json(m));
  return out;
}

ordered_json vector_seq_json(const std::vector<Eigen::VectorXd>& seq) {
  ordered_json out = ordered_json::array();
  for (const auto& v : seq) out.push_back(vector_json(v));
  return out;
}

ordered_json scalar_seq_json(const std::vector<double>& seq) {
  ordered_json out = ordered_json::array();
  for (double v : seq) out.push_back(v);
  return out;
}

ordered_json tree_process_json(const mflq::ProblemData& p,
                               const mflq::oracle::TreeProcess& u) {
  ordered_json out = ordered_json::array();
  for (int t = 0; t < u.times(); ++t) {
    const int depth = u.depths[static_cast<std::size_t>(t)];
    const auto& vals = u.values[static_cast<std::size_t>(t)];
    ordered_json nodes = ordered_json::array();
    const long long per_atom = 1LL << depth;
    for (std::size_t a = 0; a < p.initial.atoms.size(); ++a) {
      for (long long h = 0; h < per_atom; ++h) {
        std::string history;
        for (int lvl = 0; lvl < depth; ++lvl) {
          history += ((h >> (depth - 1 - lvl)) & 1LL) == 0 ? '+' : '-';
        }
        nodes.push_back({{"atom", a},
                         {"history", history},
                         {"value", vector_json(vals.col(static_cast<Eigen::Index>(
                              a * static_cast<std::size_t>(per_atom) +
                              static_cast<std::size_t>(h))))}});
      }
    }
    out.push_back({{"k", u.start + t}, {"depth", depth}, {"nodes", nodes}});
  }
  return out;
}

ordered_json verdict_json(const mflq::riccati::RegularityVerdict& v) {
  ordered_json failures = ordered_json::array();
  for (const auto& f : v.failures) {
    failures.push_back({{"k", f.k}, {"condition", f.condition}, {"residual", f.residual}});
  }
  return {{"kind", v.kind_name()},
          {"alpha", v.alpha},
          {"failures", failures},
          {"ups_min_eig", scalar_seq_json(v.ups_min_eig)},
          {"upsbar_min_eig", scalar_seq_json(v.upsbar_min_eig)},
          {"range_residual", scalar_seq_json(v.range_residual)},
          {"rangebar_residual", scalar_seq_json(v.rangebar_residual)}};
}

ordered_json riccati_json(const mflq::riccati::RiccatiSolution& sol) {
  return {{"P", matrix_seq_json(sol.P)},
          {"Pi", matrix_seq_json(sol.Pi)},
          {"Theta", matrix_seq_json(sol.Theta)},
          {"ThetaBar", matrix_seq_json(sol.ThetaBar)}};
}

ordered_json value_json(const mflq::strategy::ValueReport& v) {
  return {{"value", v.value},
          {"quad_deviation", v.quad_deviation},
          {"quad_mean", v.quad_mean},
          {"linear", v.linear},
          {"constant", v.constant}};
}

struct Context {
  std::string problem_path;
  std::string info_override;
  double eps0 = 1.0;
  int steps = 40;
  long paths = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

mflq::ProblemData load(const Context& ctx) {
  mflq::ProblemData p = mflq::load_problem(ctx.problem_path);
  if (ctx.info_override == "predictable") {
    p.info.kind = mflq::InfoPattern::Kind::predictable;
  } else if (ctx.info_override == "adapted") {
    p.info.kind = mflq::InfoPattern::Kind::adapted;
  }
  if (ctx.seed_set) p.noise.seed = ctx.seed;
  return p;
}

ordered_json problem_digest(const mflq::ProblemData& p) {
  return {{"n", p.dims.n},
          {"m", p.dims.m},
          {"l", p.dims.l},
          {"N", p.dims.N},
          {"atoms", p.initial.atoms.size()},
          {"homogeneous", p.homogeneous()},
          {"info", p.info.kind == mflq::InfoPattern::Kind::predictable ? "predictable"
                                                                       : "adapted"}};
}

ordered_json report_shell(const std::string& command, const Context& ctx,
                          const mflq::ProblemData& p) {
  ordered_json report;
  report["tool"] = {{"name", "mflq"}, {"version", kVersion}};
  report["command"] = command;
  report["arguments"] = {{"problem", ctx.problem_path},
                         {"eps0", ctx.eps0},
                         {"steps", ctx.steps},
                         {"paths", ctx.paths},
                         {"seed", ctx.seed_set ? ordered_json(ctx.seed) : ordered_json(nullptr)},
                         {"info", ctx.info_override.empty() ? ordered_json(nullptr)
                                                            : ordered_json(ctx.info_override)}};
  report["problem"] = problem_digest(p);
  return report;
}

const std::chrono::steady_clock::time_point g_start = std::chrono::steady_clock::now();

// Wall time goes to the human summary only; the JSON report stays
// byte-identical across runs.
void emit(const ordered_json& report, const std::string& summary) {
  std::cout << report.dump(2) << std::endl;
  const double ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - g_start)
                        .count();
  std::cerr << summary << " [" << ms << " ms]" << std::endl;
}

int cmd_solve(const Context& ctx) {
  const mflq::ProblemData p = load(ctx);
  const auto outcome = mflq::strategy::synthesize_closed_loop(p);

  ordered_json report = report_shell("solve", ctx, p);
  ordered_json result;
  result["riccati"] = riccati_json(outcome.gre);
  result["verdict"] = verdict_json(outcome.verdict);
  result["affine"] = {{"eta", vector_seq_json(outcome.affine.eta)},
                      {"zeta", vector_seq_json(outcome.affine.zeta)},
                      {"v", vector_seq_json(outcome.affine.v)},
                      {"certifying", outcome.affine.certifying}};
  result["closed_loop_solvable"] = outcome.solvable;
  if (outcome.solvable) {
    result["strategy"] = {{"Theta", matrix_seq_json(outcome.law.Theta)},
                          {"ThetaBar", matrix_seq_json(outcome.law.ThetaBar)},
                          {"v", vector_seq_json(outcome.law.v)}};
    result["value"] = value_json(outcome.value);
  } else {
    result["failure"] = outcome.failure_reason;
  }
  report["result"] = result;

  std::string summary = outcome.solvable
                            ? "closed-loop solvable (" + outcome.verdict.kind_name() +
                                  "), value " + std::to_string(outcome.value.value)
                            : "not closed-loop solvable: " + outcome.failure_reason;
  emit(report, summary);
  return outcome.solvable ? kOk : kNegative;
}

int cmd_classify(const Context& ctx) {
  const mflq::ProblemData p = load(ctx);
  const auto sol = mflq::riccati::solve_gre(p);
  const auto verdict = mflq::riccati::classify(sol);

  ordered_json report = report_shell("classify", ctx, p);
  report["result"] = {{"riccati", riccati_json(sol)}, {"verdict", verdict_json(verdict)}};
  emit(report, "regularity: " + verdict.kind_name() +
                   (verdict.regular() ? " (alpha " + std::to_string(verdict.alpha) + ")" : ""));
  return verdict.regular() ? kOk : kNegative;
}

int cmd_finiteness(const Context& ctx) {
  const mflq::ProblemData p = load(ctx);
  const auto schedule = mflq::strategy::geometric_schedule(ctx.eps0, ctx.steps);
  const auto scan = mflq::strategy::finiteness_scan(p, schedule);

  ordered_json report = report_shell("finiteness", ctx, p);
  report["result"] = {{"verdict", scan.verdict_name()},
                      {"eps", scalar_seq_json(scan.eps)},
                      {"p_min_eig", scalar_seq_json(scan.p_min_eig)},
                      {"pi_min_eig", scalar_seq_json(scan.pi_min_eig)},
                      {"convexity_violated", scan.convexity_violated}};
  emit(report, "finiteness: " + scan.verdict_name());
  switch (scan.verdict) {
    case mflq::strategy::FinitenessScan::Verdict::finite: return kOk;
    case mflq::strategy::FinitenessScan::Verdict::infinite: return kNegative;
    case mflq::strategy::FinitenessScan::Verdict::undetermined: return kUndetermined;
  }
  return kUndetermined;
}

int cmd_open_loop(const Context& ctx) {
  const mflq::ProblemData p = load(ctx);
  const auto schedule = mflq::strategy::geometric_schedule(ctx.eps0, ctx.steps);
  const auto report_data = mflq::strategy::solvability_report(p, schedule);

  ordered_json report = report_shell("open-loop", ctx, p);
  ordered_json result;
  result["finiteness"] = report_data.finiteness.verdict_name();
  if (report_data.open_loop) {
    const auto& det = *report_data.open_loop;
    result["verdict"] = det.verdict_name();
    result["trace"] = {{"eps", scalar_seq_json(det.eps)},
                       {"cost", scalar_seq_json(det.cost)},
                       {"l2_norm", scalar_seq_json(det.l2_norm)},
                       {"gain_sum_sq", scalar_seq_json(det.gain_sum_sq)},
                       {"cauchy", scalar_seq_json(det.cauchy)}};
    result["gain_sup"] = det.gain_sup;
    if (det.verdict == mflq::strategy::OpenLoopDetection::Verdict::solvable) {
      result["limit_cost"] = det.limit_cost;
      result["stationarity_residual"] = det.stationarity;
      result["limit_control"] = tree_process_json(p, det.limit);
    }
  } else {
    result["verdict"] = "not attempted";
  }
  report["result"] = result;

  std::string verdict_name = report_data.open_loop
                                 ? report_data.open_loop->verdict_name()
                                 : "not attempted (finiteness " +
                                       report_data.finiteness.verdict_name() + ")";
  emit(report, "open-loop: " + verdict_name);
  if (!report_data.open_loop) return kNegative;
  switch (report_data.open_loop->verdict) {
    case mflq::strategy::OpenLoopDetection::Verdict::solvable: return kOk;
    case mflq::strategy::OpenLoopDetection::Verdict::unsolvable: return kNegative;
    case mflq::strategy::OpenLoopDetection::Verdict::undetermined: return kUndetermined;
  }
  return kUndetermined;
}

int cmd_oracle(const Context& ctx, const std::string& check) {
  const mflq::ProblemData p = load(ctx);
  ordered_json report = report_shell("oracle", ctx, p);
  ordered_json result;
  result["check"] = check;
  int code = kOk;

  if (check == "value") {
    const auto exact = mflq::oracle::solve_exact(p);
    result["oracle_status"] = exact.status_name();
    result["oracle_value"] = exact.value;
    const auto outcome = mflq::strategy::synthesize_closed_loop(p);
    if (!outcome.solvable) {
      result["synthesis"] = outcome.failure_reason;
      code = kNegative;
    } else {
      result["synthesized_value"] = outcome.value.value;
      const double gap = std::abs(outcome.value.value - exact.value);
      result["gap"] = gap;
      code = gap <= 1e-8 ? kOk : kNegative;
    }
  } else if (check == "stationarity") {
    const auto exact = mflq::oracle::solve_exact(p);
    result["oracle_status"] = exact.status_name();
    if (exact.status == mflq::oracle::ExactSolution::Status::unbounded_below) {
      code = kNegative;
    } else {
      const double residual = mflq::oracle::stationarity_residual(p, exact.minimizer);
      result["stationarity_residual"] = residual;
      code = residual <= mflq::oracle::kResidualTol ? kOk : kNegative;
    }
  } else if (check == "convexity") {
    const auto model = mflq::oracle::assemble_quadratic(p);
    const double min_eig = mflq::matnum::min_eigenvalue(model.M);
    result["min_eig"] = min_eig;
    result["convex"] = min_eig >= -mflq::oracle::kEigTol;
    result["uniformly_convex"] = min_eig > mflq::oracle::kEigTol;
    code = min_eig >= -mflq::oracle::kEigTol ? kOk : kNegative;
  } else if (check == "identity") {
    const auto model = mflq::oracle::assemble_quadratic(p);
    std::mt19937_64 rng(12345);
    std::normal_distribution<double> normal(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      Eigen::VectorXd raw(model.dim());
      for (int i = 0; i < model.dim(); ++i) raw(i) = normal(rng);
      const double via_model = model.evaluate(raw);
      const double direct = mflq::oracle::exact_cost(p, mflq::oracle::unstack_control(p, raw));
      const double scale = std::max({1.0, std::abs(via_model), std::abs(direct)});
      worst = std::max(worst, std::abs(via_model - direct) / scale);
    }
    result["max_relative_residual"] = worst;
    code = worst <= 1e-9 ? kOk : kNegative;
  } else {
    throw std::invalid_argument("unknown oracle check: " + check);
  }

  report["result"] = result;
  emit(report, "oracle " + check + ": " + (code == kOk ? "ok" : "failed"));
  return code;
}

int cmd_simulate(const Context& ctx) {
  const mflq::ProblemData p = load(ctx);
  const auto outcome = mflq::strategy::synthesize_closed_loop(p);
  ordered_json report = report_shell("simulate", ctx, p);
  ordered_json result;
  if (!outcome.solvable) {
    result["failure"] = outcome.failure_reason;
    report["result"] = result;
    emit(report, "simulate: synthesis failed");
    return kNegative;
  }
  const double exact = mflq::moments::closed_loop_cost(p, outcome.law);
  result["exact_cost"] = exact;
  if (ctx.paths > 0) {
    const auto sim = mflq::moments::simulate(p, outcome.law, ctx.paths);
    result["estimate"] = sim.estimate;
    result["std_error"] = sim.std_error;
    result["paths"] = sim.paths;
  }
  report["result"] = result;
  emit(report, "simulate: exact cost " + std::to_string(exact));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite-horizon mean-field LQ solver with exact tree verification"};
  app.set_version_flag("--version", std::string("mflq ") + kVersion);
  app.require_subcommand(1);

  Context ctx;
  std::string check = "value";

  auto add_common = [&ctx](CLI::App* sub) {
    sub->add_option("problem", ctx.problem_path, "problem JSON file")->required();
    sub->add_option("--info", ctx.info_override, "information pattern override")
        ->check(CLI::IsMember({"predictable", "adapted"}));
    sub->add_option("--seed", ctx.seed, "noise seed override")
        ->each([&ctx](const std::string&) { ctx.seed_set = true; });
  };

  CLI::App* solve = app.add_subcommand("solve", "backward passes, synthesis and value");
  add_common(solve);
  CLI::App* classify = app.add_subcommand("classify", "regularity classification");
  add_common(classify);
  CLI::App* finiteness = app.add_subcommand("finiteness", "bounded-below scan");
  add_common(finiteness);
  finiteness->add_option("--eps0", ctx.eps0, "largest regularization");
  finiteness->add_option("--steps", ctx.steps, "schedule length");
  CLI::App* open_loop = app.add_subcommand("open-loop", "minimizing-sequence detector");
  add_common(open_loop);
  open_loop->add_option("--eps0", ctx.eps0, "largest regularization");
  open_loop->add_option("--steps", ctx.steps, "schedule length");
  CLI::App* oracle_cmd = app.add_subcommand("oracle", "exact tree cross-checks");
  add_common(oracle_cmd);
  oracle_cmd->add_option("--check", check, "value|stationarity|convexity|identity")
      ->check(CLI::IsMember({"value", "stationarity", "convexity", "identity"}));
  CLI::App* simulate = app.add_subcommand("simulate", "closed-loop Monte Carlo");
  add_common(simulate);
  simulate->add_option("--paths", ctx.paths, "Monte Carlo paths (0 = exact only)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed()) return cmd_solve(ctx);
    if (classify->parsed()) return cmd_classify(ctx);
    if (finiteness->parsed()) return cmd_finiteness(ctx);
    if (open_loop->parsed()) return cmd_open_loop(ctx);
    if (oracle_cmd->parsed()) return cmd_oracle(ctx, check);
    if (simulate->parsed()) return cmd_simulate(ctx);
  } catch (const mflq::ProblemError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kError;
  }
  return kError;
}
