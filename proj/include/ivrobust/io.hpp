#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ivrobust/conditional.hpp"
#include "ivrobust/errors.hpp"
#include "ivrobust/hac.hpp"
#include "ivrobust/linalg.hpp"
#include "ivrobust/simulation.hpp"

namespace ivrobust::io {

using Json = nlohmann::ordered_json;

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_number(const std::string& s, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size())
    throw InvalidInput("line " + std::to_string(line) + ": cannot parse number '" + s + "'");
  return v;
}

/// Shortest round-tripping decimal form.
inline std::string format_number(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline Matrix parse_matrix_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    for (const auto& c : split_csv_line(line)) row.push_back(parse_number(c, n));
    if (!rows.empty() && row.size() != rows.front().size())
      throw InvalidInput("line " + std::to_string(n) + ": ragged matrix row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InvalidInput("matrix CSV is empty");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open '" + path + "' for writing");
  return out;
}

inline Matrix read_matrix_csv(const std::string& path) {
  auto in = open_in(path);
  return parse_matrix_csv(in);
}

/// Row-major, headerless.
inline void write_matrix_csv(std::ostream& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_number(m(i, j));
    out << '\n';
  }
}

inline void write_matrix_csv(const std::string& path, const Matrix& m) {
  auto out = open_out(path);
  write_matrix_csv(out, m);
}

/// Dataset with header y1, y2, z1..zk[, w1..wp] (columns in any order).
inline RawSample parse_dataset_csv(std::istream& in) {
  std::string line;
  std::size_t n = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++n;
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw InvalidInput("dataset CSV is empty");
  int iy1 = -1, iy2 = -1;
  std::vector<std::pair<int, int>> zc, wc;  // (index in name, column)
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    const std::string& h = header[static_cast<std::size_t>(c)];
    if (h == "y1") {
      iy1 = c;
    } else if (h == "y2") {
      iy2 = c;
    } else if ((h[0] == 'z' || h[0] == 'w') && h.size() > 1 && h.find_first_not_of("0123456789", 1) == std::string::npos) {
      (h[0] == 'z' ? zc : wc).emplace_back(std::stoi(h.substr(1)), c);
    } else {
      throw InvalidInput("unexpected dataset column '" + h + "' (expected y1, y2, z1..zk, w1..wp)");
    }
  }
  if (iy1 < 0 || iy2 < 0 || zc.empty()) throw InvalidInput("dataset needs columns y1, y2 and at least z1");
  std::sort(zc.begin(), zc.end());
  std::sort(wc.begin(), wc.end());
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) throw InvalidInput("line " + std::to_string(n) + ": wrong number of fields");
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(parse_number(c, n));
    rows.push_back(std::move(row));
  }
  const auto nobs = static_cast<Eigen::Index>(rows.size());
  RawSample raw;
  raw.y1.resize(nobs);
  raw.y2.resize(nobs);
  raw.z.resize(nobs, static_cast<Eigen::Index>(zc.size()));
  raw.w.resize(nobs, static_cast<Eigen::Index>(wc.size()));
  for (Eigen::Index t = 0; t < nobs; ++t) {
    const auto& r = rows[static_cast<std::size_t>(t)];
    raw.y1(t) = r[static_cast<std::size_t>(iy1)];
    raw.y2(t) = r[static_cast<std::size_t>(iy2)];
    for (std::size_t j = 0; j < zc.size(); ++j) raw.z(t, static_cast<Eigen::Index>(j)) = r[static_cast<std::size_t>(zc[j].second)];
    for (std::size_t j = 0; j < wc.size(); ++j) raw.w(t, static_cast<Eigen::Index>(j)) = r[static_cast<std::size_t>(wc[j].second)];
  }
  return raw;
}

inline RawSample read_dataset_csv(const std::string& path) {
  auto in = open_in(path);
  return parse_dataset_csv(in);
}

inline void write_dataset_csv(std::ostream& out, const RawSample& raw) {
  out << "y1,y2";
  for (Eigen::Index j = 0; j < raw.k(); ++j) out << ",z" << j + 1;
  for (Eigen::Index j = 0; j < raw.p(); ++j) out << ",w" << j + 1;
  out << '\n';
  for (Eigen::Index t = 0; t < raw.n(); ++t) {
    out << format_number(raw.y1(t)) << ',' << format_number(raw.y2(t));
    for (Eigen::Index j = 0; j < raw.k(); ++j) out << ',' << format_number(raw.z(t, j));
    for (Eigen::Index j = 0; j < raw.p(); ++j) out << ',' << format_number(raw.w(t, j));
    out << '\n';
  }
}

inline Json to_json(const Matrix& m) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    a.push_back(std::move(row));
  }
  return a;
}

inline Json to_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Vector vector_from_json(const Json& j) {
  if (!j.is_array()) throw InvalidInput("expected a JSON array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw InvalidInput("expected a JSON array of numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline Json to_json(const TestResult& r) {
  return Json{{"statistic", r.statistic}, {"value", r.value},     {"critical_value", r.critical_value},
              {"p_value", r.p_value},     {"reject", r.reject},   {"alpha", r.alpha},
              {"mc_reps", r.mc_reps},     {"seed", r.seed}};
}

inline TestResult test_result_from_json(const Json& j) {
  TestResult r;
  r.statistic = j.at("statistic").get<std::string>();
  r.value = j.at("value").get<double>();
  r.critical_value = j.at("critical_value").get<double>();
  r.p_value = j.at("p_value").get<double>();
  r.reject = j.at("reject").get<bool>();
  r.alpha = j.at("alpha").get<double>();
  r.mc_reps = j.at("mc_reps").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

/// CSV rows (stat, value, critical, p, reject).
inline void write_test_rows(std::ostream& out, const std::vector<TestResult>& rs) {
  out << "stat,value,critical,p,reject\n";
  for (const auto& r : rs)
    out << r.statistic << ',' << format_number(r.value) << ',' << format_number(r.critical_value) << ','
        << format_number(r.p_value) << ',' << (r.reject ? 1 : 0) << '\n';
}

inline void write_power_csv(std::ostream& out, const PowerTable& t) {
  out << "statistic,delta,mu_norm,rate,se,reps\n";
  for (const auto& r : t.rows)
    out << r.statistic << ',' << format_number(r.delta) << ',' << format_number(r.mu_norm) << ','
        << format_number(r.rate) << ',' << format_number(r.se) << ',' << r.reps << '\n';
}

inline PowerTable read_power_csv(std::istream& in) {
  std::string line;
  std::getline(in, line);
  if (trim(line) != "statistic,delta,mu_norm,rate,se,reps") throw InvalidInput("unexpected power table header");
  PowerTable t;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 6) throw InvalidInput("line " + std::to_string(n) + ": expected 6 fields");
    t.rows.push_back({c[0], parse_number(c[1], n), parse_number(c[2], n), parse_number(c[3], n),
                      parse_number(c[4], n), static_cast<int>(parse_number(c[5], n))});
  }
  return t;
}

inline void write_feasible_csv(std::ostream& out, const std::vector<FeasibleRow>& rows) {
  out << "statistic,n,rate,se,reps,sigma_error\n";
  for (const auto& r : rows)
    out << r.statistic << ',' << r.n << ',' << format_number(r.rate) << ',' << format_number(r.se) << ',' << r.reps
        << ',' << format_number(r.sigma_error) << '\n';
}

/// {delta, mu: [...], sigma0_path}; relative sigma0_path resolves against base_dir.
inline ModelParams model_params_from_json(const Json& j, const std::string& base_dir = "") {
  ModelParams p;
  p.delta = j.at("delta").get<double>();
  p.mu = vector_from_json(j.at("mu"));
  std::string path = j.at("sigma0_path").get<std::string>();
  if (!base_dir.empty() && !path.empty() && path[0] != '/') path = base_dir + "/" + path;
  p.sigma0 = read_matrix_csv(path);
  return p;
}

inline Json to_json(const ModelParams& p, const std::string& sigma0_path) {
  return Json{{"delta", p.delta}, {"mu", to_json(p.mu)}, {"sigma0_path", sigma0_path}};
}

}  // namespace ivrobust::io
