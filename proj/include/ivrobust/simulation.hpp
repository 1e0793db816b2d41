#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "ivrobust/conditional.hpp"
#include "ivrobust/errors.hpp"
#include "ivrobust/hac.hpp"
#include "ivrobust/linalg.hpp"
#include "ivrobust/model.hpp"
#include "ivrobust/random.hpp"
#include "ivrobust/statistics.hpp"

namespace ivrobust {

struct PowerStudyConfig {
  Matrix sigma0;
  Vector mu;
  std::vector<double> deltas{0.0};
  std::vector<Vector> mu_grid;  // size_study only
  std::vector<StatSpec> stats{{Statistic::ar}, {Statistic::lm}, {Statistic::qlr}, {Statistic::lr}, {Statistic::il}};
  double alpha = 0.05;
  int reps = 2000;
  int mc_reps = 2000;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct PowerRow {
  std::string statistic;
  double delta = 0.0;
  double mu_norm = 0.0;
  double rate = 0.0;
  double se = 0.0;
  int reps = 0;
};

struct PowerTable {
  std::vector<PowerRow> rows;

  const PowerRow& at(std::string_view stat, double delta) const {
    for (const auto& r : rows)
      if (r.statistic == stat && r.delta == delta) return r;
    throw InvalidInput("no row for statistic '" + std::string(stat) + "'");
  }
};

inline double binomial_se(double p, int n) { return std::sqrt(p * (1.0 - p) / n); }

/// Runs body(i, worker) for i in [0, n) on up to `workers` threads. Each worker
/// index is used by one thread only, so per-worker state needs no locking.
inline void parallel_for(int n, int workers, const std::function<void(int, int)>& body) {
  workers = std::clamp(workers, 1, std::max(1, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) body(i, 0);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = next++; i < n; i = next++) body(i, w);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline void check_config(const PowerStudyConfig& c) {
  if (c.stats.empty()) throw InvalidInput("statistics list is empty");
  if (c.reps < 1) throw InvalidInput("reps must be positive");
  check_mc_reps(c.mc_reps);
  check_alpha(c.alpha);
  if (c.workers < 1) throw InvalidInput("workers must be positive");
}

namespace detail {

// decisions[stat][cell][rep] for cells of (Delta, mu) pairs at a fixed Sigma0.
inline std::vector<std::vector<std::vector<char>>> simulate_cells(const PowerStudyConfig& c,
                                                                  const std::vector<ModelParams>& cells) {
  const NullGeometry geom(c.sigma0);
  const std::size_t ns = c.stats.size(), nc = cells.size();
  const auto reps = static_cast<std::size_t>(c.reps);
  std::vector<std::vector<std::vector<char>>> out(ns, std::vector<std::vector<char>>(nc, std::vector<char>(reps)));
  std::vector<std::unique_ptr<ConditionalTest>> tests(static_cast<std::size_t>(c.workers));
  std::vector<R0Sampler> samplers;
  for (const auto& p : cells) samplers.emplace_back(p);
  const int jobs = static_cast<int>(nc * reps);
  parallel_for(jobs, c.workers, [&](int job, int worker) {
    auto& test = tests[static_cast<std::size_t>(worker)];
    if (!test) test = std::make_unique<ConditionalTest>(c.sigma0);
    const std::size_t cell = static_cast<std::size_t>(job) / reps, rep = static_cast<std::size_t>(job) % reps;
    CounterStream rng = CounterStream::derive(c.seed, {tag_hash("outer"), cell, rep});
    const STPair st = geom.st(samplers[cell].draw(rng));
    const std::uint64_t inner = CounterStream::derive(c.seed, {tag_hash("inner"), cell, rep})();
    for (std::size_t s = 0; s < ns; ++s)
      out[s][cell][rep] = test->run(c.stats[s], st, c.alpha, c.mc_reps, inner).reject ? 1 : 0;
  });
  return out;
}

inline PowerRow make_row(const StatSpec& spec, double delta, double mu_norm, const std::vector<char>& d) {
  int hits = 0;
  for (char x : d) hits += x;
  PowerRow r;
  r.statistic = std::string(statistic_name(spec.id));
  r.delta = delta;
  r.mu_norm = mu_norm;
  r.reps = static_cast<int>(d.size());
  r.rate = static_cast<double>(hits) / r.reps;
  r.se = binomial_se(r.rate, r.reps);
  return r;
}

}  // namespace detail

/// Rejection rates of the conditional tests over the Delta grid; rows are
/// statistic-major, Delta-minor. Output does not depend on the worker count.
inline PowerTable power_curve(const PowerStudyConfig& c) {
  check_config(c);
  if (c.deltas.empty()) throw InvalidInput("Delta grid is empty");
  std::vector<ModelParams> cells;
  for (double d : c.deltas) cells.push_back({d, c.mu, c.sigma0});
  const auto dec = detail::simulate_cells(c, cells);
  PowerTable t;
  for (std::size_t s = 0; s < c.stats.size(); ++s)
    for (std::size_t i = 0; i < cells.size(); ++i)
      t.rows.push_back(detail::make_row(c.stats[s], c.deltas[i], c.mu.norm(), dec[s][i]));
  return t;
}

/// Null rejection rates over the mu grid (Delta = 0); rows statistic-major, mu-minor.
inline PowerTable size_study(const PowerStudyConfig& c) {
  check_config(c);
  std::vector<Vector> grid = c.mu_grid;
  if (grid.empty()) grid.push_back(c.mu);
  std::vector<ModelParams> cells;
  for (const auto& mu : grid) cells.push_back({0.0, mu, c.sigma0});
  const auto dec = detail::simulate_cells(c, cells);
  PowerTable t;
  for (std::size_t s = 0; s < c.stats.size(); ++s)
    for (std::size_t i = 0; i < cells.size(); ++i)
      t.rows.push_back(detail::make_row(c.stats[s], 0.0, grid[i].norm(), dec[s][i]));
  return t;
}

/// Generates a raw sample of size n.
using Dgp = std::function<RawSample(CounterStream&, Eigen::Index)>;

/// iid Z ~ N(0, I_k), (v1, v2) ~ N(0, Omega), y2 = Z pi + v2, y1 = Z pi beta + v1.
/// The standardized reduced-form covariance is Omega kron I_k.
inline Dgp homoskedastic_dgp(const Vector& pi, const Eigen::Matrix2d& omega, double beta) {
  const Eigen::Matrix2d f = psd_sqrt(omega);
  return [pi, f, beta](CounterStream& rng, Eigen::Index n) {
    const Eigen::Index k = pi.size();
    RawSample raw;
    raw.z.resize(n, k);
    raw.y1.resize(n);
    raw.y2.resize(n);
    for (Eigen::Index t = 0; t < n; ++t) {
      for (Eigen::Index j = 0; j < k; ++j) raw.z(t, j) = rng.normal();
      const Eigen::Vector2d e(rng.normal(), rng.normal());
      const Eigen::Vector2d v = f * e;
      const double zp = raw.z.row(t).dot(pi);
      raw.y2(t) = zp + v(1);
      raw.y1(t) = zp * beta + v(0);
    }
    return raw;
  };
}

struct FeasibleRow {
  std::string statistic;
  Eigen::Index n = 0;
  double rate = 0.0;
  double se = 0.0;
  int reps = 0;
  double sigma_error = 0.0;  // mean relative Frobenius error of Sigma_hat
};

struct FeasibleStudyConfig {
  std::vector<Eigen::Index> n_grid{2000};
  std::vector<StatSpec> stats{{Statistic::ar}, {Statistic::lm}, {Statistic::qlr}};
  double beta0 = 0.0;
  double alpha = 0.05;
  int reps = 2000;
  int mc_reps = 2000;
  std::uint64_t seed = 0;
  int workers = 1;
  Kernel kernel = Kernel::bartlett;
  std::optional<int> bandwidth;
  Matrix sigma_true;  // optional, for the Sigma_hat error column
};

/// Full feasible pipeline per replication (reduced form, HAC, conditional test);
/// rows statistic-major, n-minor.
inline std::vector<FeasibleRow> feasible_size_study(const FeasibleStudyConfig& c, const Dgp& dgp) {
  if (c.n_grid.empty() || c.stats.empty() || c.reps < 1) throw InvalidInput("empty feasible study");
  check_mc_reps(c.mc_reps);
  check_alpha(c.alpha);
  const std::size_t ns = c.stats.size(), nn = c.n_grid.size(), reps = static_cast<std::size_t>(c.reps);
  std::vector<std::vector<std::vector<char>>> dec(ns, std::vector<std::vector<char>>(nn, std::vector<char>(reps)));
  std::vector<std::vector<double>> err(nn, std::vector<double>(reps, 0.0));
  const double true_norm = c.sigma_true.size() > 0 ? c.sigma_true.norm() : 1.0;
  parallel_for(static_cast<int>(nn * reps), c.workers, [&](int job, int) {
    const std::size_t cell = static_cast<std::size_t>(job) / reps, rep = static_cast<std::size_t>(job) % reps;
    CounterStream rng = CounterStream::derive(c.seed, {tag_hash("feasible"), cell, rep});
    const RawSample raw = dgp(rng, c.n_grid[cell]);
    const FeasibleProblem fp = feasible_problem(raw, c.beta0, c.kernel, c.bandwidth);
    if (c.sigma_true.size() > 0) err[cell][rep] = (fp.hac.sigma_hat - c.sigma_true).norm() / true_norm;
    ConditionalTest test(fp.problem.sigma0);
    const STPair st = test.geometry().st(fp.problem.r0);
    const std::uint64_t inner = CounterStream::derive(c.seed, {tag_hash("feasible-inner"), cell, rep})();
    for (std::size_t s = 0; s < ns; ++s)
      dec[s][cell][rep] = test.run(c.stats[s], st, c.alpha, c.mc_reps, inner).reject ? 1 : 0;
  });
  std::vector<FeasibleRow> rows;
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t i = 0; i < nn; ++i) {
      const PowerRow pr = detail::make_row(c.stats[s], 0.0, 0.0, dec[s][i]);
      double e = 0.0;
      for (double x : err[i]) e += x;
      rows.push_back({pr.statistic, c.n_grid[i], pr.rate, pr.se, pr.reps, e / static_cast<double>(reps)});
    }
  return rows;
}

}  // namespace ivrobust
