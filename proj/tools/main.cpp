#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ivrobust/ivrobust.hpp"

namespace iv = ivrobust;
using iv::io::Json;

namespace {

std::optional<int> parse_bandwidth(const std::string& s) {
  if (s == "auto") return std::nullopt;
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used == s.size() && v >= 0) return v;
  } catch (const std::exception&) {
  }
  throw iv::InvalidInput("--bandwidth must be 'auto' or a non-negative integer");
}

std::vector<iv::StatSpec> parse_stats(const Json& j, double clc_m) {
  std::vector<iv::StatSpec> out;
  for (const auto& s : j) out.push_back({iv::parse_statistic(s.get<std::string>()), clc_m});
  return out;
}

std::string dir_of(const std::string& path) {
  const auto p = std::filesystem::path(path).parent_path();
  return p.empty() ? "." : p.string();
}

std::string resolve(const std::string& base, const std::string& path) {
  return std::filesystem::path(path).is_absolute() ? path : base + "/" + path;
}

/// Shared by power and size: Sigma0 from sigma0_path or a low-power design block.
iv::PowerStudyConfig study_config(const std::string& path, int workers, bool need_mu) {
  auto in = iv::io::open_in(path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw iv::InvalidInput("config '" + path + "': " + e.what());
  }
  const std::string base = dir_of(path);
  iv::PowerStudyConfig c;
  try {
    if (j.contains("design")) {
      const Json& d = j.at("design");
      iv::DesignSpec spec;
      spec.k = d.value("k", 2);
      spec.c11 = d.value("c11", 1.0);
      spec.c12 = d.value("c12", 100.0);
      if (d.contains("c22")) spec.c22 = d.at("c22").get<double>();
      spec.lambda = d.value("lambda", 50.0);
      if (d.contains("mu_direction")) spec.mu_direction = iv::io::vector_from_json(d.at("mu_direction"));
      c.sigma0 = iv::low_power_sigma(spec);
      c.mu = spec.mu();
    } else {
      c.sigma0 = iv::io::read_matrix_csv(resolve(base, j.at("sigma0_path").get<std::string>()));
    }
    if (j.contains("mu")) c.mu = iv::io::vector_from_json(j.at("mu"));
    if (j.contains("deltas")) c.deltas = j.at("deltas").get<std::vector<double>>();
    if (j.contains("mu_grid"))
      for (const auto& m : j.at("mu_grid")) c.mu_grid.push_back(iv::io::vector_from_json(m));
    const double clc_m = j.value("clc_m", 0.5);
    if (j.contains("stats")) c.stats = parse_stats(j.at("stats"), clc_m);
    c.alpha = j.value("alpha", c.alpha);
    c.reps = j.value("reps", c.reps);
    c.mc_reps = j.value("mc_reps", c.mc_reps);
    c.seed = j.value("seed", c.seed);
  } catch (const Json::exception& e) {
    throw iv::InvalidInput("config '" + path + "': " + e.what());
  }
  c.workers = workers;
  if (need_mu && c.mu.size() == 0) throw iv::InvalidInput("config needs mu (or a design block)");
  if (!need_mu && c.mu.size() == 0 && c.mu_grid.empty()) throw iv::InvalidInput("config needs mu_grid, mu or a design block");
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weak-instrument robust tests for a linear IV model with HAC errors"};
  app.require_subcommand(1);
  int workers = 1;
  app.add_option("--workers", workers, "Worker threads (affects wall time only)")->check(CLI::PositiveNumber);

  // test
  auto* test = app.add_subcommand("test", "Feasible conditional test from a raw dataset; prints a JSON TestResult");
  std::string data_path;
  double beta0 = 0.0, alpha = 0.05, clc_m = 0.5;
  std::string stat_name = "ar", kernel_name = "bartlett", bandwidth = "auto";
  int mc_reps = iv::kDefaultMcReps;
  std::uint64_t seed = 0;
  test->add_option("--data", data_path, "CSV with header y1,y2,z1..zk[,w1..wp]")->required()->check(CLI::ExistingFile);
  test->add_option("--beta0", beta0, "Null value of beta")->capture_default_str();
  test->add_option("--stat", stat_name, "ar, lm, lm1, qlr, clc, lr or il")->capture_default_str();
  test->add_option("--alpha", alpha, "Nominal level")->capture_default_str();
  test->add_option("--kernel", kernel_name, "HAC kernel")->capture_default_str();
  test->add_option("--bandwidth", bandwidth, "HAC bandwidth: integer or auto")->capture_default_str();
  test->add_option("--mc-reps", mc_reps, "Monte Carlo draws for the critical value")->capture_default_str();
  test->add_option("--seed", seed, "Base seed")->capture_default_str();
  test->add_option("--clc-m", clc_m, "Constant CLC weight m in [0, 1]")->capture_default_str();

  // power / size
  auto* power = app.add_subcommand("power", "Power curve from a JSON config; prints a CSV table");
  std::string config_path, out_path;
  power->add_option("--config", config_path, "JSON study config")->required()->check(CLI::ExistingFile);
  power->add_option("--out", out_path, "Write the CSV here instead of stdout");
  auto* size = app.add_subcommand("size", "Null rejection rates over a mu grid from a JSON config; prints CSV");
  size->add_option("--config", config_path, "JSON study config")->required()->check(CLI::ExistingFile);
  size->add_option("--out", out_path, "Write the CSV here instead of stdout");

  // design lowpower
  auto* design = app.add_subcommand("design", "Covariance designs");
  design->require_subcommand(1);
  auto* lowpower = design->add_subcommand("lowpower", "Low-power design; prints Sigma0 as headerless CSV");
  iv::DesignSpec dspec;
  std::optional<double> c22;
  std::string sigma_out;
  std::vector<double> deltas{-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0};
  lowpower->add_option("--k", dspec.k, "Number of instruments")->capture_default_str()->check(CLI::Range(2, 1000));
  lowpower->add_option("--c12", dspec.c12, "Cross-block scale")->capture_default_str();
  lowpower->add_option("--lambda", dspec.lambda, "Concentration mu'mu")->capture_default_str();
  lowpower->add_option("--c11", dspec.c11, "Sigma11 scale")->capture_default_str();
  lowpower->add_option("--c22", c22, "Sigma22 scale (default c12^2 + c12^-3)");
  lowpower->add_option("--alpha", alpha, "Level for the AR power oracle")->capture_default_str();
  lowpower->add_option("--deltas", deltas, "Delta grid for the oracle table")->capture_default_str();
  bool design_json = false;
  lowpower->add_flag("--json", design_json, "Print a JSON report (eigenvalues, bound, oracle table) instead of the CSV");
  lowpower->add_option("--sigma-out", sigma_out, "Also write Sigma0 as headerless CSV to this file");

  // check invariance
  auto* check = app.add_subcommand("check", "Property checks");
  check->require_subcommand(1);
  auto* inv = check->add_subcommand("invariance", "Invariance of statistics and decisions; prints JSON");
  int k = 2, pairs = 100;
  int inv_mc = iv::kMinMcReps;
  inv->add_option("--k", k, "Number of instruments")->capture_default_str()->check(CLI::Range(1, 50));
  inv->add_option("--pairs", pairs, "Random (problem, g) pairs")->capture_default_str()->check(CLI::PositiveNumber);
  inv->add_option("--seed", seed, "Base seed")->capture_default_str();
  inv->add_option("--mc-reps", inv_mc, "Draws per conditional test (0 skips decisions)")->capture_default_str();

  // kron approx
  auto* kron = app.add_subcommand("kron", "Kronecker structure");
  kron->require_subcommand(1);
  auto* approx = kron->add_subcommand("approx", "Nearest Omega0 kron Phi; prints JSON, optional CSV outputs");
  std::string sigma_path, out_dir;
  approx->add_option("--sigma", sigma_path, "Sigma0 CSV (2k x 2k)")->required()->check(CLI::ExistingFile);
  approx->add_option("--out-dir", out_dir, "Write omega0.csv, phi.csv and residual.csv here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    std::cout.precision(17);
    if (*test) {
      const iv::RawSample raw = iv::io::read_dataset_csv(data_path);
      const iv::TestResult r = iv::feasible_test(raw, beta0, {iv::parse_statistic(stat_name), clc_m}, alpha, mc_reps,
                                                 seed, iv::parse_kernel(kernel_name), parse_bandwidth(bandwidth));
      std::cout << iv::io::to_json(r).dump(2) << '\n';
    } else if (*power || *size) {
      const iv::PowerStudyConfig c = study_config(config_path, workers, power->parsed());
      const iv::PowerTable t = *power ? iv::power_curve(c) : iv::size_study(c);
      if (out_path.empty()) {
        iv::io::write_power_csv(std::cout, t);
      } else {
        auto out = iv::io::open_out(out_path);
        iv::io::write_power_csv(out, t);
      }
    } else if (*lowpower) {
      dspec.c22 = c22;
      const iv::Matrix s = iv::low_power_sigma(dspec);
      const auto [e1, e2] = iv::design_eigenvalues(dspec);
      const iv::Vector mu = dspec.mu();
      const iv::PartitionedSigma ps = iv::partition(s);
      Json rep{{"k", dspec.k},
               {"c11", dspec.c11},
               {"c12", dspec.c12},
               {"c22", dspec.c22_value()},
               {"lambda", dspec.lambda},
               {"mu", iv::io::to_json(mu)},
               {"eigenvalues", {e1, e2}},
               {"sigma_sup22_diag", ps.sup22(0, 0)},
               {"orthogonality_gap", iv::orthogonality_gap(mu, s)},
               {"lm_mean_bound", iv::lm_mean_bound(mu, s)},
               {"alpha", alpha}};
      Json grid = Json::array();
      for (double d : deltas)
        grid.push_back({{"delta", d},
                        {"ar_power", iv::ar_power_oracle(d, mu, s, alpha)},
                        {"lm_asymptotic_mean", iv::lm_asymptotic_mean(d, mu, s)}});
      rep["oracle"] = std::move(grid);
      rep["sigma0"] = iv::io::to_json(s);
      if (!sigma_out.empty()) iv::io::write_matrix_csv(sigma_out, s);
      if (design_json) {
        std::cout << rep.dump(2) << '\n';
      } else {
        iv::io::write_matrix_csv(std::cout, s);
      }
    } else if (*inv) {
      const iv::InvarianceReport r = iv::check_invariance(k, pairs, seed, inv_mc);
      Json j{{"k", r.k},
             {"pairs", r.pairs},
             {"seed", r.seed},
             {"mc_reps", r.mc_reps},
             {"max_rel_dev", {{"ar", r.max_rel_dev_ar}, {"lm", r.max_rel_dev_lm}, {"qlr", r.max_rel_dev_qlr},
                              {"lr", r.max_rel_dev_lr}}},
             {"il_ratio_spread", r.max_il_ratio_spread},
             {"decisions_compared", r.decisions_compared},
             {"decisions_agree", r.decisions_agree}};
      std::cout << j.dump(2) << '\n';
    } else if (*approx) {
      const iv::Matrix s = iv::io::read_matrix_csv(sigma_path);
      const iv::NearestKronecker nk = iv::nearest_kronecker(s);
      if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        iv::io::write_matrix_csv(out_dir + "/omega0.csv", nk.omega0);
        iv::io::write_matrix_csv(out_dir + "/phi.csv", nk.phi);
        iv::io::write_matrix_csv(out_dir + "/residual.csv", nk.residual);
      }
      Json j{{"omega0", iv::io::to_json(iv::Matrix(nk.omega0))},
             {"phi", iv::io::to_json(nk.phi)},
             {"residual_norm", nk.residual_norm},
             {"sigma_norm", s.norm()},
             {"singular_values", iv::io::to_json(iv::Vector(nk.singular_values))}};
      std::cout << j.dump(2) << '\n';
    }
  } catch (const iv::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 2;
  } catch (const iv::InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
