#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "crdql/channel.hpp"
#include "crdql/errors.hpp"

namespace crdql {

struct AmcRow {
  double snr_threshold_db;
  double spectral_efficiency;  // bits/s/Hz
};

// Step map from SINR to spectral efficiency (the AMC abstraction), plus the
// constants of the relative throughput change model.
struct AmcTable {
  std::vector<AmcRow> rows;
  double bandwidth_hz = 180e3;
  double snr_gap = 1.0;  // linear
  double xi = 4.0;       // PN spectral efficiency without SN transmission

  void validate() const {
    if (rows.empty()) throw ConfigError("AMC table is empty");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!std::isfinite(rows[i].snr_threshold_db) || !(rows[i].spectral_efficiency >= 0.0))
        throw ConfigError("AMC table row " + std::to_string(i) + " is invalid");
      if (i > 0 && !(rows[i].snr_threshold_db > rows[i - 1].snr_threshold_db))
        throw ConfigError("AMC thresholds must be strictly increasing");
      if (i > 0 && rows[i].spectral_efficiency < rows[i - 1].spectral_efficiency)
        throw ConfigError("AMC efficiencies must be nondecreasing");
    }
    if (!(bandwidth_hz > 0.0)) throw ConfigError("bandwidth must be positive");
    if (!(snr_gap > 0.0)) throw ConfigError("SNR gap must be positive");
    if (!(xi > 0.0)) throw ConfigError("xi must be positive");
  }

  double max_efficiency() const { return rows.empty() ? 0.0 : rows.back().spectral_efficiency; }
};

// Fifteen CQI-like modes between -6 dB and 20 dB.
inline std::vector<AmcRow> default_amc_rows() {
  return {{-6.0, 0.15}, {-4.0, 0.23}, {-2.0, 0.38}, {0.0, 0.60},  {2.0, 0.88},
          {4.0, 1.18},  {6.0, 1.48},  {8.0, 1.91},  {10.0, 2.41}, {11.5, 2.73},
          {13.0, 3.32}, {14.5, 3.90}, {16.5, 4.52}, {18.0, 5.12}, {20.0, 6.00}};
}

inline AmcTable default_amc_table() {
  AmcTable t;
  t.rows = default_amc_rows();
  return t;
}

// Throughput in Mbps for a linear SINR.
inline double throughput(double sinr, const AmcTable& table) {
  if (table.rows.empty()) throw ConfigError("AMC table is empty");
  if (!(sinr > 0.0)) return 0.0;
  const double db = linear_to_db(sinr);
  auto it = std::upper_bound(table.rows.begin(), table.rows.end(), db,
                             [](double v, const AmcRow& row) { return v < row.snr_threshold_db; });
  if (it == table.rows.begin()) return 0.0;
  return std::prev(it)->spectral_efficiency * table.bandwidth_hz * 1e-6;
}

// Relative PN throughput change caused by interference `interference_db`
// measured relative to the PN background level. Always <= 0.
inline double relative_throughput_change(double interference_db, const AmcTable& table) {
  return -std::log2(1.0 + table.snr_gap * db_to_linear(interference_db)) / table.xi;
}

// Same quantity from a linear interference ratio; a zero ratio gives exactly 0.
inline double relative_throughput_change_linear(double interference_ratio, const AmcTable& table) {
  return -std::log2(1.0 + table.snr_gap * interference_ratio) / table.xi;
}

// CSV with header `snr_db,spectral_efficiency`.
inline std::vector<AmcRow> parse_amc_csv(std::istream& in) {
  auto trim = [](std::string s) {
    s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); }), s.end());
    return s;
  };
  std::string line;
  int lineno = 0;
  do {
    if (!std::getline(in, line)) throw ConfigError("AMC CSV is empty");
    ++lineno;
    line = trim(line);
  } while (line.empty() || line[0] == '#');
  if (line != "snr_db,spectral_efficiency") throw ConfigError("AMC CSV header must be 'snr_db,spectral_efficiency'");
  std::vector<AmcRow> rows;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ConfigError("AMC CSV line " + std::to_string(lineno) + ": expected two fields");
    try {
      std::size_t used = 0;
      const std::string a = line.substr(0, comma);
      const std::string b = line.substr(comma + 1);
      const double snr = std::stod(a, &used);
      if (used != a.size()) throw std::invalid_argument(a);
      const double eff = std::stod(b, &used);
      if (used != b.size()) throw std::invalid_argument(b);
      rows.push_back({snr, eff});
    } catch (const std::logic_error&) {
      throw ConfigError("AMC CSV line " + std::to_string(lineno) + ": not a number");
    }
  }
  return rows;
}

inline std::vector<AmcRow> load_amc_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open AMC table '" + path + "'");
  return parse_amc_csv(in);
}

}  // namespace crdql
