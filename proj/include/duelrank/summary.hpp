#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace duelrank {

inline constexpr const char* kCsvHeader =
    "algo,N,N_pre,n_target,rep,seed,subopt,err_h,err_2,nu_l1,policy_mode,"
    "wall_ms";

struct CsvRow {
  std::string algo;
  long long N = 0, N_pre = 0, n_target = 0, rep = 0;
  unsigned long long seed = 0;
  double subopt = 0.0, err_h = 0.0, err_2 = 0.0, nu_l1 = 0.0;
  std::string policy_mode;
  double wall_ms = 0.0;
};

inline std::string csv_line(const CsvRow& r) {
  std::ostringstream out;
  out.precision(17);
  out << r.algo << ',' << r.N << ',' << r.N_pre << ',' << r.n_target << ','
      << r.rep << ',' << r.seed << ',' << r.subopt << ',' << r.err_h << ','
      << r.err_2 << ',' << r.nu_l1 << ',' << r.policy_mode << ',' << r.wall_ms;
  return out.str();
}

inline std::vector<CsvRow> parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty CSV");
  if (line != kCsvHeader)
    throw std::runtime_error("CSV header mismatch at line 1");
  std::vector<CsvRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 12)
      throw std::runtime_error("malformed CSV at line " +
                               std::to_string(line_no));
    try {
      CsvRow r;
      r.algo = fields[0];
      r.N = std::stoll(fields[1]);
      r.N_pre = std::stoll(fields[2]);
      r.n_target = std::stoll(fields[3]);
      r.rep = std::stoll(fields[4]);
      r.seed = std::stoull(fields[5]);
      r.subopt = std::stod(fields[6]);
      r.err_h = std::stod(fields[7]);
      r.err_2 = std::stod(fields[8]);
      r.nu_l1 = std::stod(fields[9]);
      r.policy_mode = fields[10];
      r.wall_ms = std::stod(fields[11]);
      rows.push_back(std::move(r));
    } catch (const std::exception&) {
      throw std::runtime_error("malformed CSV at line " +
                               std::to_string(line_no));
    }
  }
  return rows;
}

inline std::vector<CsvRow> parse_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_csv(in);
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty set");
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("quantile of empty set");
  std::sort(v.begin(), v.end());
  const double pos = q * (v.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(v.size() - 1, lo + 1);
  const double frac = pos - lo;
  return (1.0 - frac) * v[lo] + frac * v[hi];
}

struct SummaryCell {
  std::string algo;
  long long N = 0;
  int count = 0;
  double subopt_median = 0.0, subopt_iqr = 0.0;
  double err_h_median = 0.0, err_h_iqr = 0.0;
};

struct SummaryTable {
  std::vector<SummaryCell> cells;
  // Fitted log-log slope of median SubOpt vs N, keyed by algo. Only present
  // for algos with at least two distinct N values.
  std::map<std::string, double> slope;
};

// Least-squares slope of y against x.
inline double fit_slope(const std::vector<double>& x,
                        const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("slope fit needs >= 2 points");
  double mx = 0, my = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= x.size();
  my /= y.size();
  double num = 0, den = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    num += (x[i] - mx) * (y[i] - my);
    den += (x[i] - mx) * (x[i] - mx);
  }
  return num / den;
}

inline SummaryTable summarize(const std::vector<CsvRow>& rows) {
  std::map<std::pair<std::string, long long>,
           std::pair<std::vector<double>, std::vector<double>>>
      groups;  // (algo, N) -> (subopts, err_hs)
  for (const auto& r : rows) {
    auto& g = groups[{r.algo, r.N}];
    g.first.push_back(r.subopt);
    g.second.push_back(r.err_h);
  }
  SummaryTable table;
  std::map<std::string, std::vector<std::pair<double, double>>> medians;
  for (auto& [key, g] : groups) {
    SummaryCell cell;
    cell.algo = key.first;
    cell.N = key.second;
    cell.count = static_cast<int>(g.first.size());
    cell.subopt_median = median(g.first);
    cell.subopt_iqr = quantile(g.first, 0.75) - quantile(g.first, 0.25);
    cell.err_h_median = median(g.second);
    cell.err_h_iqr = quantile(g.second, 0.75) - quantile(g.second, 0.25);
    table.cells.push_back(cell);
    medians[cell.algo].emplace_back(static_cast<double>(cell.N),
                                    cell.subopt_median);
  }
  for (auto& [algo, pts] : medians) {
    if (pts.size() < 2) continue;
    std::vector<double> lx, ly;
    for (auto& [n, s] : pts) {
      if (s <= 0.0) continue;  // log of a zero-SubOpt cell is undefined
      lx.push_back(std::log(n));
      ly.push_back(std::log(s));
    }
    if (lx.size() >= 2) table.slope[algo] = fit_slope(lx, ly);
  }
  return table;
}

}  // namespace duelrank
