#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "crdql/errors.hpp"
#include "crdql/random.hpp"
#include "crdql/topology.hpp"
#include "json.hpp"

namespace crdql {

inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }
inline double mw_to_dbm(double mw) { return 10.0 * std::log10(mw); }
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double x) { return 10.0 * std::log10(x); }

// Dense row-major matrix indexed (transmitter, receiver).
class GainMatrix {
 public:
  GainMatrix() = default;
  GainMatrix(int n_tx, int n_rx, double fill = 0.0)
      : n_tx_(n_tx), n_rx_(n_rx), data_(static_cast<std::size_t>(n_tx) * n_rx, fill) {}

  int n_tx() const { return n_tx_; }
  int n_rx() const { return n_rx_; }
  double operator()(int tx, int rx) const { return data_[index(tx, rx)]; }
  double& operator()(int tx, int rx) { return data_[index(tx, rx)]; }
  const std::vector<double>& values() const { return data_; }

  friend bool operator==(const GainMatrix&, const GainMatrix&) = default;

 private:
  std::size_t index(int tx, int rx) const {
    if (tx < 0 || tx >= n_tx_ || rx < 0 || rx >= n_rx_) throw ArgumentError("gain matrix index out of range");
    return static_cast<std::size_t>(tx) * n_rx_ + rx;
  }

  int n_tx_ = 0;
  int n_rx_ = 0;
  std::vector<double> data_;
};

// Urban macro loss with fixed penetration loss and log-normal shadowing.
// Loss [dB] = 128.1 + 37.6 log10(d_km) + penetration + S.
struct PathLossModel {
  double intercept_db = 128.1;
  double slope_db = 37.6;
  double penetration_db = 10.0;
  double shadowing_std_db = 6.0;
  double min_distance_m = 1.0;
};

// Linear power gain for one link. Distances below the model minimum are
// clamped; the gain never exceeds unity.
inline double path_gain(double distance_m, double shadowing_db, const PathLossModel& model = {}) {
  if (!std::isfinite(distance_m) || !std::isfinite(shadowing_db))
    throw ArgumentError("path_gain: non-finite distance or shadowing");
  const double d_km = std::max(distance_m, model.min_distance_m) / 1000.0;
  const double loss_db = model.intercept_db + model.slope_db * std::log10(d_km) + model.penetration_db + shadowing_db;
  return db_to_linear(-std::max(loss_db, 0.0));
}

inline double sample_shadowing_db(const PathLossModel& model, Rng& rng) {
  return std::normal_distribution<double>(0.0, model.shadowing_std_db)(rng);
}

// All gains are indexed (transmitter, receiver):
//   pn_to_pn     active AP i -> PN receiver j          (M x M)
//   cr_to_pn     CR transmitter k -> PN receiver j      (N x M)
//   cr_to_cr     CR transmitter k -> CR receiver l      (N x N)
//   pn_to_cr     active AP i -> CR receiver l           (M x N)
//   pn_to_cr_tx  active AP i -> CR transmitter k        (M x N), used for sensing
struct ChannelGains {
  GainMatrix pn_to_pn;
  GainMatrix cr_to_pn;
  GainMatrix cr_to_cr;
  GainMatrix pn_to_cr;
  GainMatrix pn_to_cr_tx;
  double noise_mw = dbm_to_mw(-130.0);

  int n_pn() const { return pn_to_pn.n_tx(); }
  int n_cr() const { return cr_to_cr.n_tx(); }

  void validate() const {
    const int m = n_pn();
    const int n = n_cr();
    if (pn_to_pn.n_rx() != m || cr_to_pn.n_tx() != n || cr_to_pn.n_rx() != m || cr_to_cr.n_rx() != n ||
        pn_to_cr.n_tx() != m || pn_to_cr.n_rx() != n || pn_to_cr_tx.n_tx() != m || pn_to_cr_tx.n_rx() != n)
      throw ArgumentError("channel gain matrices are dimension-inconsistent");
    if (!(noise_mw > 0.0) || !std::isfinite(noise_mw)) throw ArgumentError("noise power must be positive");
    for (const GainMatrix* g : {&pn_to_pn, &cr_to_pn, &cr_to_cr, &pn_to_cr, &pn_to_cr_tx})
      for (double v : g->values())
        if (!(v > 0.0 && v <= 1.0)) throw ArgumentError("channel gains must lie in (0, 1]");
  }

  friend bool operator==(const ChannelGains&, const ChannelGains&) = default;
};

// Shadowing is drawn once per transmitter-receiver pair and frozen.
inline ChannelGains sample_gains(const NodePlacement& placement, const GridSpec& spec, const PathLossModel& model,
                                 double noise_dbm, Rng& rng) {
  const int m = placement.n_pn();
  const int n = placement.n_cr();
  ChannelGains g{GainMatrix(m, m), GainMatrix(n, m), GainMatrix(n, n), GainMatrix(m, n), GainMatrix(m, n),
                 dbm_to_mw(noise_dbm)};
  auto link = [&](Point a, Point b) {
    return path_gain(wrap_distance(a, b, spec), sample_shadowing_db(model, rng), model);
  };
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) g.pn_to_pn(i, j) = link(placement.active_ap(i), placement.pn_rx_positions[j]);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < m; ++j) g.cr_to_pn(k, j) = link(placement.cr_tx_positions[k], placement.pn_rx_positions[j]);
  for (int k = 0; k < n; ++k)
    for (int l = 0; l < n; ++l) g.cr_to_cr(k, l) = link(placement.cr_tx_positions[k], placement.cr_rx_positions[l]);
  for (int i = 0; i < m; ++i)
    for (int l = 0; l < n; ++l) g.pn_to_cr(i, l) = link(placement.active_ap(i), placement.cr_rx_positions[l]);
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < n; ++k) g.pn_to_cr_tx(i, k) = link(placement.active_ap(i), placement.cr_tx_positions[k]);
  return g;
}

// Transmit powers in dBm; a CR entry without a value is silent.
struct PowerVector {
  std::vector<double> pn_dbm;
  std::vector<std::optional<double>> cr_dbm;

  double pn_mw(int i) const { return dbm_to_mw(pn_dbm.at(i)); }
  double cr_mw(int k) const {
    const auto& p = cr_dbm.at(k);
    return p ? dbm_to_mw(*p) : 0.0;
  }
};

inline constexpr double kPnMinDbm = -20.0;
inline constexpr double kPnMaxDbm = 40.0;

namespace detail {
inline void check_dims(const ChannelGains& g, const PowerVector& p) {
  if (static_cast<int>(p.pn_dbm.size()) != g.n_pn() || static_cast<int>(p.cr_dbm.size()) != g.n_cr())
    throw ArgumentError("power vector does not match channel dimensions");
}
}  // namespace detail

// Co-channel PN interference at PN receiver `link` (excludes SN and noise).
inline double pn_cochannel_interference_mw(int link, const ChannelGains& g, const PowerVector& p) {
  double sum = 0.0;
  for (int j = 0; j < g.n_pn(); ++j)
    if (j != link) sum += g.pn_to_pn(j, link) * p.pn_mw(j);
  return sum;
}

// SN interference received at PN receiver `link`.
inline double sn_interference_at_pn_mw(int link, const ChannelGains& g, const PowerVector& p) {
  double sum = 0.0;
  for (int k = 0; k < g.n_cr(); ++k) sum += g.cr_to_pn(k, link) * p.cr_mw(k);
  return sum;
}

inline double pn_sinr(int link, const ChannelGains& g, const PowerVector& p) {
  detail::check_dims(g, p);
  if (link < 0 || link >= g.n_pn()) throw ArgumentError("pn_sinr: link index out of range");
  const double signal = g.pn_to_pn(link, link) * p.pn_mw(link);
  return signal / (pn_cochannel_interference_mw(link, g, p) + sn_interference_at_pn_mw(link, g, p) + g.noise_mw);
}

inline double sn_sinr(int link, const ChannelGains& g, const PowerVector& p) {
  detail::check_dims(g, p);
  if (link < 0 || link >= g.n_cr()) throw ArgumentError("sn_sinr: link index out of range");
  const double signal = g.cr_to_cr(link, link) * p.cr_mw(link);
  double interference = g.noise_mw;
  for (int j = 0; j < g.n_cr(); ++j)
    if (j != link) interference += g.cr_to_cr(j, link) * p.cr_mw(j);
  for (int i = 0; i < g.n_pn(); ++i) interference += g.pn_to_cr(i, link) * p.pn_mw(i);
  return signal / interference;
}

// JSON ----------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const GainMatrix& m) {
  j = nlohmann::json::array();
  for (int tx = 0; tx < m.n_tx(); ++tx) {
    auto row = nlohmann::json::array();
    for (int rx = 0; rx < m.n_rx(); ++rx) row.push_back(m(tx, rx));
    j.push_back(std::move(row));
  }
}
inline void from_json(const nlohmann::json& j, GainMatrix& m) {
  const int n_tx = static_cast<int>(j.size());
  const int n_rx = n_tx > 0 ? static_cast<int>(j.at(0).size()) : 0;
  m = GainMatrix(n_tx, n_rx);
  for (int tx = 0; tx < n_tx; ++tx) {
    if (static_cast<int>(j.at(tx).size()) != n_rx) throw ConfigError("ragged gain matrix");
    for (int rx = 0; rx < n_rx; ++rx) m(tx, rx) = j.at(tx).at(rx).get<double>();
  }
}

inline void to_json(nlohmann::json& j, const ChannelGains& g) {
  j = {{"pn_to_pn", g.pn_to_pn},       {"cr_to_pn", g.cr_to_pn}, {"cr_to_cr", g.cr_to_cr},
       {"pn_to_cr", g.pn_to_cr},       {"pn_to_cr_tx", g.pn_to_cr_tx},
       {"noise_mw", g.noise_mw}};
}
inline void from_json(const nlohmann::json& j, ChannelGains& g) {
  g.pn_to_pn = j.at("pn_to_pn").get<GainMatrix>();
  g.cr_to_pn = j.at("cr_to_pn").get<GainMatrix>();
  g.cr_to_cr = j.at("cr_to_cr").get<GainMatrix>();
  g.pn_to_cr = j.at("pn_to_cr").get<GainMatrix>();
  g.pn_to_cr_tx = j.at("pn_to_cr_tx").get<GainMatrix>();
  g.noise_mw = j.at("noise_mw").get<double>();
  g.validate();
}

}  // namespace crdql
