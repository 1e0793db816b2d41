// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "ivrobust/ivrobust.hpp"

using namespace ivrobust;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

int worker_count() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

std::string fmt(double x, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << x;
  return os.str();
}

Matrix random_gaussian(Eigen::Index r, Eigen::Index c, CounterStream& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

Matrix unit_det(const Matrix& phi) { return phi / std::pow(phi.determinant(), 1.0 / static_cast<double>(phi.rows())); }

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

double max_rel(const Matrix& a, const Matrix& b) {
  double e = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) e = std::max(e, rel(a.data()[i], b.data()[i]));
  return e;
}

// 1. Null rejection of AR/LM/QLR/LR/IL within 0.05 +- 0.015.
Outcome size_similarity() {
  Outcome o;
  std::ostringstream os;
  double worst = 0.0;
  for (int k : {2, 4}) {
    std::vector<std::pair<std::string, PowerStudyConfig>> configs;
    for (int i = 0; i < 3; ++i) {
      CounterStream rng = CounterStream::derive(1001, {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i)});
      PowerStudyConfig c;
      c.sigma0 = random_spd(2 * k, rng);
      c.mu = 2.0 * random_gaussian(k, 1, rng);
      configs.emplace_back("random" + std::to_string(i), c);
    }
    DesignSpec d;
    d.k = k;
    PowerStudyConfig dc;
    dc.sigma0 = low_power_sigma(d);
    dc.mu = d.mu();
    configs.emplace_back("design", dc);
    for (auto& [name, c] : configs) {
      c.stats = {{Statistic::ar}, {Statistic::lm}, {Statistic::qlr}, {Statistic::lr}, {Statistic::il}};
      c.reps = 2000;
      c.mc_reps = 2000;
      c.seed = 1100 + static_cast<std::uint64_t>(k);
      c.workers = worker_count();
      const auto t0 = std::chrono::steady_clock::now();
      const PowerTable t = size_study(c);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      os << " k=" << k << "/" << name << "[";
      for (const auto& r : t.rows) {
        os << r.statistic << "=" << fmt(r.rate, 3) << (&r == &t.rows.back() ? "" : " ");
        worst = std::max(worst, std::abs(r.rate - 0.05));
        if (std::abs(r.rate - 0.05) > 0.015) o.pass = false;
      }
      os << "] " << fmt(secs, 3) << "s;";
    }
  }
  o.detail = "max |rate - 0.05| = " + fmt(worst, 3) + ";" + os.str();
  return o;
}

// 2. Low-power design at Delta = 1.
Outcome low_power() {
  DesignSpec d;
  PowerStudyConfig c;
  c.sigma0 = low_power_sigma(d);
  c.mu = d.mu();
  c.deltas = {1.0};
  c.stats = {{Statistic::ar}, {Statistic::lm}, {Statistic::qlr}, {Statistic::clc, 0.5}, {Statistic::lr}, {Statistic::il}};
  c.reps = 2000;
  c.mc_reps = 2000;
  c.seed = 2002;
  c.workers = worker_count();
  const PowerTable t = power_curve(c);
  const auto rate = [&](const char* s) { return t.at(s, 1.0).rate; };
  const auto se = [&](const char* s) { return t.at(s, 1.0).se; };
  const auto diff_se = [&](const char* a, const char* b) { return std::hypot(se(a), se(b)); };
  const double oracle = ar_power_oracle(1.0, c.mu, c.sigma0, c.alpha);
  std::vector<std::pair<std::string, bool>> checks{
      {"AR>=0.95", rate("ar") >= 0.95 - 3 * se("ar")},
      {"AR~oracle", std::abs(rate("ar") - oracle) <= 3 * binomial_se(oracle, c.reps)},
      {"LM<=0.15", rate("lm") <= 0.15 + 3 * se("lm")},
      {"AR-QLR>=0.2", rate("ar") - rate("qlr") >= 0.2 - 3 * diff_se("ar", "qlr")},
      {"AR-CLC>=0.2", rate("ar") - rate("clc") >= 0.2 - 3 * diff_se("ar", "clc")},
      {"LR-LM>=0.3", rate("lr") - rate("lm") >= 0.3 - 3 * diff_se("lr", "lm")},
      {"IL-LM>=0.3", rate("il") - rate("lm") >= 0.3 - 3 * diff_se("il", "lm")},
  };
  Outcome o;
  std::ostringstream os;
  os << "power:";
  for (const auto& r : t.rows) os << " " << r.statistic << "=" << fmt(r.rate, 3);
  os << " (AR oracle " << fmt(oracle, 6) << ");";
  for (const auto& [name, ok] : checks) {
    os << " " << name << (ok ? " ok" : " FAILED") << ";";
    o.pass = o.pass && ok;
  }
  o.detail = os.str();
  return o;
}

// 3. Invariance of statistics and decisions.
Outcome invariance_suite() {
  Outcome o;
  std::ostringstream os;
  for (int k : {2, 3}) {
    const InvarianceReport r = check_invariance(k, 100, 3000 + static_cast<std::uint64_t>(k), 2000, 5);
    const double stat_dev = std::max({r.max_rel_dev_ar, r.max_rel_dev_lm, r.max_rel_dev_qlr, r.max_rel_dev_lr});
    const bool ok = stat_dev <= 1e-8 && r.max_il_ratio_spread <= 1e-6 && r.decisions_agree == r.decisions_compared;
    o.pass = o.pass && ok;
    os << " k=" << k << ": stat dev " << fmt(stat_dev, 3) << ", IL ratio spread " << fmt(r.max_il_ratio_spread, 3)
       << ", decisions " << r.decisions_agree << "/" << r.decisions_compared << ";";
  }
  o.detail = os.str();
  return o;
}

// 4. f(g x; g theta) |g1|^2 |g2|^k = f(x; theta).
Outcome density_multiplier() {
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    CounterStream rng = CounterStream::derive(4004, {static_cast<std::uint64_t>(i)});
    const int k = 1 + i % 4;
    const ModelParams p{rng.normal(), random_gaussian(k, 1, rng), random_spd(2 * k, rng)};
    const GroupElement g = sample_group(k, rng);
    const Matrix r0 = draw_r0(p, rng);
    const ModelParams q = act_params(g, p);
    const Matrix moved = g.g1 * r0 * g.g2.transpose();
    const double jac = std::pow(std::abs(g.g1.determinant()), 2) * std::pow(std::abs(g.g2.determinant()), k);
    const double lhs = log_density_r(moved, q) + std::log(jac);
    worst = std::max(worst, std::abs(std::expm1(lhs - log_density_r(r0, p))));
  }
  return {worst <= 1e-10, "max |ratio - 1| = " + fmt(worst, 3) + " over 100 instances"};
}

// 5. Kronecker consistency.
Outcome kronecker_consistency() {
  double st_err = 0.0, lr_err = 0.0, q_err = 0.0, q2_err = 0.0;
  for (int i = 0; i < 100; ++i) {
    CounterStream rng = CounterStream::derive(5005, {static_cast<std::uint64_t>(i)});
    const int k = 2 + i % 3;
    const Eigen::Matrix2d omega = Matrix(random_spd(2, rng));
    const Matrix phi = unit_det(random_spd(k, rng));
    const Matrix r = random_gaussian(k, 2, rng);
    const double beta0 = rng.normal();
    const STPair a = st_kron(r, omega, phi, beta0);
    const NullProblem np = build_null_problem(r, kron(Matrix(omega), phi), beta0);
    const STPair b = compute_st(np);
    st_err = std::max({st_err, max_rel(a.s, b.s), max_rel(a.t, b.t)});

    const double qs = a.s.squaredNorm(), qt = a.t.squaredNorm(), qst = a.s.dot(a.t);
    const double closed = 0.5 * (qs - qt + std::sqrt((qs - qt) * (qs - qt) + 4 * qst * qst));
    lr_err = std::max(lr_err, rel(lr(np.r0, np.sigma0), closed));

    Matrix g1 = sample_group(k, rng).g1;
    if (g1.determinant() < 0) g1.col(0) = -g1.col(0);
    g1 = unit_det(g1);
    const QMatrix qa = QMatrix::from(a);
    const QMatrix qb = QMatrix::from(st_kron(g1 * r, omega, g1 * phi * g1.transpose(), beta0));
    q_err = std::max({q_err, rel(qb.qs, qa.qs), rel(qb.qst, qa.qst), rel(qb.qt, qa.qt)});

    GroupElement g = sample_group(k, rng, 1.0, true);
    g.g1 = Matrix::Identity(k, k);
    const QMatrix qc = QMatrix::from(compute_st(act_data(g, np)));
    const QMatrix qn = QMatrix::from(b);
    q2_err = std::max({q2_err, rel(qc.qs, qn.qs), rel(qc.qt, qn.qt), rel(qc.qst * qc.qst, qn.qst * qn.qst)});
  }
  const bool ok = st_err <= 1e-10 && lr_err <= 1e-6 && q_err <= 1e-10 && q2_err <= 1e-10;
  return {ok, "S/T " + fmt(st_err, 3) + ", LR vs closed form " + fmt(lr_err, 3) + ", Q under SL_k " + fmt(q_err, 3) +
                  ", (QS, QT, QST^2) under sign action " + fmt(q2_err, 3)};
}

// 6. IL = pi at k = 2, Sigma0 = I, R0 = 0.
Outcome il_analytic() {
  const double v = il(Matrix::Zero(2, 2), Matrix::Identity(4, 4));
  const double err = std::abs(v - std::numbers::pi);
  return {err <= 1e-6, "IL = " + fmt(v, 15) + ", |IL - pi| = " + fmt(err, 3)};
}

// 7. Two-sided map: involution and maximal invariants.
Outcome two_sided_map() {
  double inv_err = 0.0, mi_err = 0.0;
  for (int i = 0; i < 100; ++i) {
    CounterStream rng = CounterStream::derive(7007, {static_cast<std::uint64_t>(i)});
    const Eigen::Matrix2d omega = Matrix(random_spd(2, rng));
    const double beta0 = rng.normal(), beta = beta0 + rng.normal(), lambda = rng.uniform(0.1, 20.0);
    const TwoSidedImage once = two_sided_param_map(beta, lambda, omega, beta0);
    const TwoSidedImage twice = two_sided_param_map(once.beta, once.lambda, omega, beta0);
    inv_err = std::max({inv_err, rel(twice.beta, beta), std::abs(twice.lambda - lambda) / lambda});
    const CDScalars a = cd_scalars(beta, beta0, omega), b = cd_scalars(once.beta, beta0, omega);
    mi_err = std::max({mi_err, rel(b.c * b.c * once.lambda, a.c * a.c * lambda),
                       rel(b.d * b.d * once.lambda, a.d * a.d * lambda),
                       rel(std::abs(b.c * b.d) * once.lambda, std::abs(a.c * a.d) * lambda)});
  }
  return {inv_err <= 1e-10 && mi_err <= 1e-10,
          "involution " + fmt(inv_err, 3) + ", invariants (c^2 l, d^2 l, |cd| l) " + fmt(mi_err, 3)};
}

// 8. Nearest Kronecker approximation.
Outcome nearest_kron() {
  double exact = 0.0;
  for (int i = 0; i < 20; ++i) {
    CounterStream rng = CounterStream::derive(8008, {static_cast<std::uint64_t>(i)});
    const int k = 1 + i % 5;
    const Matrix sigma = kron(Matrix(random_spd(2, rng)), unit_det(random_spd(k, rng)));
    exact = std::max(exact, nearest_kronecker(sigma).residual_norm / sigma.norm());
  }
  CounterStream rng(8009);
  const int k = 3;
  const Matrix sigma0 = random_spd(2 * k, rng);
  const NearestKronecker nk = nearest_kronecker(sigma0);
  int beaten = 0;
  for (int i = 0; i < 1000; ++i) {
    const double eps = std::pow(10.0, rng.uniform(-6.0, 0.0));
    const Matrix om = Matrix(nk.omega0) + eps * random_gaussian(2, 2, rng);
    const Matrix ph = nk.phi + eps * random_gaussian(k, k, rng);
    if ((sigma0 - kron(om, ph)).norm() < nk.residual_norm) ++beaten;
  }
  return {exact < 1e-10 && beaten == 0,
          "exact-input residual " + fmt(exact, 3) + ", candidates closer than the fit: " + std::to_string(beaten) + "/1000"};
}

// 9. Conditional quantiles of AR and LM against chi-square quantiles.
Outcome quantile_oracles() {
  const int m = 100000, k = 3;
  CounterStream rng(9009);
  const Matrix sigma0 = random_spd(2 * k, rng);
  const Vector t = random_gaussian(k, 1, rng);
  const auto check = [&](Statistic s, double dof, std::uint64_t seed, std::ostringstream& os) {
    const double q = conditional_quantile({s}, t, sigma0, 0.05, m, seed);
    const boost::math::chi_squared dist(dof);
    const double target = boost::math::quantile(dist, 0.95);
    const double se = std::sqrt(0.05 * 0.95 / m) / boost::math::pdf(dist, target);
    os << statistic_name(s) << " " << fmt(q, 6) << " vs " << fmt(target, 6) << " (" << fmt(std::abs(q - target) / se, 3)
       << " se); ";
    return std::abs(q - target) <= 2 * se;
  };
  std::ostringstream os;
  const bool a = check(Statistic::ar, k, 9010, os);
  const bool b = check(Statistic::lm, 1, 9011, os);
  return {a && b, os.str()};
}

// 10. Feasible pipeline size and Sigma_hat consistency.
Outcome feasible_pipeline() {
  Eigen::Matrix2d omega;
  omega << 1.0, 0.5, 0.5, 1.0;
  const int k = 3;
  FeasibleStudyConfig c;
  c.n_grid = {500, 2000, 10000};
  c.stats = {{Statistic::ar}, {Statistic::lm}, {Statistic::qlr}};
  c.reps = 2000;
  c.mc_reps = 2000;
  c.seed = 10010;
  c.workers = worker_count();
  c.sigma_true = kron(Matrix(omega), Matrix::Identity(k, k));
  const auto rows = feasible_size_study(c, homoskedastic_dgp(Vector::Constant(k, 0.1), omega, 0.0));
  Outcome o;
  std::ostringstream os;
  os << "n=2000:";
  for (const auto& r : rows)
    if (r.n == 2000) {
      os << " " << r.statistic << "=" << fmt(r.rate, 3);
      if (std::abs(r.rate - 0.05) > 0.02) o.pass = false;
    }
  os << "; Sigma_hat error by n:";
  double prev = 1e300;
  for (const auto& r : rows)
    if (r.statistic == "ar") {
      os << " " << r.n << "->" << fmt(r.sigma_error, 3);
      if (!(r.sigma_error < prev)) o.pass = false;
      prev = r.sigma_error;
    }
  o.detail = os.str();
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"size and similarity", size_similarity},
      {"low-power design", low_power},
      {"invariance suite", invariance_suite},
      {"density multiplier identity", density_multiplier},
      {"Kronecker consistency", kronecker_consistency},
      {"IL analytic value", il_analytic},
      {"two-sided map", two_sided_map},
      {"nearest Kronecker", nearest_kron},
      {"conditional quantile oracles", quantile_oracles},
      {"feasible pipeline", feasible_pipeline},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("Criterion %d (%s): %s - %s [%.1fs]\n", id, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
