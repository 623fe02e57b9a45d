#include "mflq/moments.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <thread>

#include "mflq/matnum.hpp"

namespace mflq::moments {

namespace {

void check_law(const ProblemData& p, const ClosedLoopLaw& law) {
  const int T = p.horizon();
  if (static_cast<int>(law.Theta.size()) != T ||
      static_cast<int>(law.ThetaBar.size()) != T) {
    throw std::invalid_argument("closed-loop law must span the horizon");
  }
  if (!law.v.empty() && static_cast<int>(law.v.size()) != T) {
    throw std::invalid_argument("closed-loop offsets must span the horizon");
  }
}

Eigen::VectorXd law_offset(const ClosedLoopLaw& law, int t, int m) {
  return law.v.empty() ? Eigen::VectorXd::Zero(m) : law.v[static_cast<std::size_t>(t)];
}

// splitmix64; the per-draw counter keyed on (seed, path, step) gives
// reproducible, order-independent streams.
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t draw(std::uint64_t seed, std::uint64_t path, std::uint64_t counter) {
  return mix64(mix64(mix64(seed) ^ (path * 0xd1342543de82ef95ULL)) ^
               (counter * 0xaf251af3b0f025b5ULL));
}

double to_unit_interval(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

double noise_sample(const ProblemData& p, std::uint64_t path, int step) {
  if (p.noise.kind == NoiseModel::Kind::rademacher) {
    return (draw(p.noise.seed, path, static_cast<std::uint64_t>(step)) >> 63) ? -1.0 : 1.0;
  }
  const double u1 =
      to_unit_interval(draw(p.noise.seed, path, 2 * static_cast<std::uint64_t>(step)));
  const double u2 =
      to_unit_interval(draw(p.noise.seed, path, 2 * static_cast<std::uint64_t>(step) + 1));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int select_atom(const ProblemData& p, std::uint64_t path) {
  const double u = to_unit_interval(draw(p.noise.seed, path, 0xa70eULL));
  double acc = 0.0;
  for (std::size_t i = 0; i < p.initial.atoms.size(); ++i) {
    acc += p.initial.atoms[i].prob;
    if (u <= acc) return static_cast<int>(i);
  }
  return static_cast<int>(p.initial.atoms.size()) - 1;
}

double pairwise_sum(const std::vector<double>& vals, std::size_t lo, std::size_t hi) {
  if (hi - lo <= 8) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += vals[i];
    return s;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  return pairwise_sum(vals, lo, mid) + pairwise_sum(vals, mid, hi);
}

int worker_count(int requested, long paths) {
  int n = requested;
  if (n <= 0) {
    if (const char* env = std::getenv("MFLQ_THREADS")) {
      n = std::atoi(env);
    }
  }
  if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
  if (n <= 0) n = 1;
  if (paths < n) n = static_cast<int>(paths);
  return std::max(1, n);
}

}  // namespace

MomentState propagate(const ProblemData& p, const ClosedLoopLaw& law) {
  check_law(p, law);
  const int T = p.horizon();

  MomentState state;
  state.mean.resize(static_cast<std::size_t>(T + 1));
  state.second.resize(static_cast<std::size_t>(T + 1));
  state.outer.resize(static_cast<std::size_t>(T + 1));

  state.mean[0] = p.initial.mean();
  state.outer[0] = state.mean[0] * state.mean[0].transpose();
  state.second[0] = p.initial.covariance() + state.outer[0];

  for (int t = 0; t < T; ++t) {
    const StageDynamics& d = p.dyn(t);
    const Eigen::MatrixXd& Th = law.Theta[static_cast<std::size_t>(t)];
    const Eigen::MatrixXd& ThBar = law.ThetaBar[static_cast<std::size_t>(t)];
    const Eigen::VectorXd v = law_offset(law, t, p.dims.m);

    const Eigen::VectorXd& m = state.mean[static_cast<std::size_t>(t)];
    const Eigen::MatrixXd sigma_c = state.central(t);

    const Eigen::VectorXd u_mean = ThBar * m + v;
    const Eigen::VectorXd m_next = (d.A + d.Abar) * m + (d.B + d.Bbar) * u_mean + d.b;

    const Eigen::MatrixXd drift_dev = d.A + d.B * Th;
    const Eigen::MatrixXd diff_dev = d.C + d.D * Th;
    const Eigen::VectorXd diff_const =
        (d.C + d.Cbar) * m + (d.D + d.Dbar) * u_mean + d.sigma;

    Eigen::MatrixXd sigma_next = drift_dev * sigma_c * drift_dev.transpose() +
                                 diff_dev * sigma_c * diff_dev.transpose() +
                                 diff_const * diff_const.transpose();
    sigma_next = matnum::symmetrize(sigma_next);

    state.mean[static_cast<std::size_t>(t + 1)] = m_next;
    state.outer[static_cast<std::size_t>(t + 1)] = m_next * m_next.transpose();
    state.second[static_cast<std::size_t>(t + 1)] =
        matnum::symmetrize(sigma_next + state.outer[static_cast<std::size_t>(t + 1)]);
  }
  return state;
}

double closed_loop_cost(const ProblemData& p, const ClosedLoopLaw& law) {
  const MomentState state = propagate(p, law);
  const int T = p.horizon();
  double total = 0.0;

  for (int t = 0; t < T; ++t) {
    const StageCost& c = p.stage(t);
    const Eigen::MatrixXd& Th = law.Theta[static_cast<std::size_t>(t)];
    const Eigen::VectorXd& m = state.mean[static_cast<std::size_t>(t)];
    const Eigen::MatrixXd sigma_c = state.central(t);
    const Eigen::VectorXd u_mean =
        law.ThetaBar[static_cast<std::size_t>(t)] * m + law_offset(law, t, p.dims.m);

    const Eigen::MatrixXd dev_weight = c.Q + Th.transpose() * c.R * Th +
                                       Th.transpose() * c.S + c.S.transpose() * Th;
    total += (dev_weight * sigma_c).trace();
    total += m.dot((c.Q + c.Qbar) * m) + 2.0 * u_mean.dot((c.S + c.Sbar) * m) +
             u_mean.dot((c.R + c.Rbar) * u_mean) + 2.0 * (c.q + c.qbar).dot(m) +
             2.0 * (c.rho + c.rhobar).dot(u_mean);
  }

  const Eigen::VectorXd& mN = state.mean[static_cast<std::size_t>(T)];
  total += (p.terminal.G * state.central(T)).trace();
  total += mN.dot((p.terminal.G + p.terminal.Gbar) * mN) +
           2.0 * (p.terminal.g + p.terminal.gbar).dot(mN);
  return total;
}

SimulationResult simulate(const ProblemData& p, const ClosedLoopLaw& law, long paths,
                          int threads) {
  if (paths < 1) throw std::invalid_argument("simulate: paths must be >= 1");
  check_law(p, law);
  const int T = p.horizon();
  const MomentState state = propagate(p, law);

  // Deterministic mean-field inputs shared by every path.
  std::vector<Eigen::VectorXd> u_mean(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    u_mean[static_cast<std::size_t>(t)] =
        law.ThetaBar[static_cast<std::size_t>(t)] * state.mean[static_cast<std::size_t>(t)] +
        law_offset(law, t, p.dims.m);
  }

  std::vector<double> path_cost(static_cast<std::size_t>(paths), 0.0);
  auto run_range = [&](long lo, long hi) {
    for (long path = lo; path < hi; ++path) {
      Eigen::VectorXd x =
          p.initial.atoms[static_cast<std::size_t>(select_atom(p, static_cast<std::uint64_t>(path)))]
              .value;
      double cost = 0.0;
      for (int t = 0; t < T; ++t) {
        const StageDynamics& d = p.dyn(t);
        const StageCost& c = p.stage(t);
        const Eigen::VectorXd& m = state.mean[static_cast<std::size_t>(t)];
        const Eigen::VectorXd u = law.Theta[static_cast<std::size_t>(t)] * (x - m) +
                                  u_mean[static_cast<std::size_t>(t)];
        cost += x.dot(c.Q * x) + 2.0 * u.dot(c.S * x) + u.dot(c.R * u) +
                2.0 * c.q.dot(x) + 2.0 * c.rho.dot(u);
        const double w = noise_sample(p, static_cast<std::uint64_t>(path), t + 1);
        x = d.A * x + d.Abar * m + d.B * u + d.Bbar * u_mean[static_cast<std::size_t>(t)] +
            d.b +
            w * (d.C * x + d.Cbar * m + d.D * u +
                 d.Dbar * u_mean[static_cast<std::size_t>(t)] + d.sigma);
      }
      cost += x.dot(p.terminal.G * x) + 2.0 * p.terminal.g.dot(x);
      path_cost[static_cast<std::size_t>(path)] = cost;
    }
  };

  const int workers = worker_count(threads, paths);
  if (workers == 1) {
    run_range(0, paths);
  } else {
    std::vector<std::thread> pool;
    const long chunk = (paths + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const long lo = w * chunk;
      const long hi = std::min(paths, lo + chunk);
      if (lo < hi) pool.emplace_back(run_range, lo, hi);
    }
    for (std::thread& th : pool) th.join();
  }

  const double sample_mean =
      pairwise_sum(path_cost, 0, path_cost.size()) / static_cast<double>(paths);

  // Deterministic part of the cost: mean-coupled terms evaluated exactly.
  double mean_terms = 0.0;
  for (int t = 0; t < T; ++t) {
    const StageCost& c = p.stage(t);
    const Eigen::VectorXd& m = state.mean[static_cast<std::size_t>(t)];
    const Eigen::VectorXd& um = u_mean[static_cast<std::size_t>(t)];
    mean_terms += m.dot(c.Qbar * m) + 2.0 * um.dot(c.Sbar * m) + um.dot(c.Rbar * um) +
                  2.0 * c.qbar.dot(m) + 2.0 * c.rhobar.dot(um);
  }
  const Eigen::VectorXd& mN = state.mean[static_cast<std::size_t>(T)];
  mean_terms += mN.dot(p.terminal.Gbar * mN) + 2.0 * p.terminal.gbar.dot(mN);

  std::vector<double> sq_dev(path_cost.size());
  for (std::size_t i = 0; i < path_cost.size(); ++i) {
    const double d = path_cost[i] - sample_mean;
    sq_dev[i] = d * d;
  }

  SimulationResult out;
  out.paths = paths;
  out.estimate = sample_mean + mean_terms;
  if (paths > 1) {
    const double var =
        pairwise_sum(sq_dev, 0, sq_dev.size()) / static_cast<double>(paths - 1);
    out.std_error = std::sqrt(var / static_cast<double>(paths));
  }
  return out;
}

}  // namespace mflq::moments
