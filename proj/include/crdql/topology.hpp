#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "crdql/errors.hpp"
#include "crdql/random.hpp"
#include "json.hpp"

namespace crdql {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

// Layout of the primary network access points. Distances wrap around all
// grid edges, so the plane is a torus of size (cols*spacing) x (rows*spacing).
struct GridSpec {
  int rows = 3;
  int cols = 3;
  double spacing_m = 200.0;
  int active_ap_count = 7;
  // Radius of the disk around each AP in which its receiver is placed.
  // Defaults to half the spacing when <= 0.
  double coverage_radius_m = 0.0;
  double cr_link_radius_m = 50.0;

  double width() const { return cols * spacing_m; }
  double height() const { return rows * spacing_m; }
  double coverage_radius() const {
    return coverage_radius_m > 0.0 ? coverage_radius_m : 0.5 * spacing_m;
  }

  void validate() const {
    if (rows < 1 || cols < 1) throw ConfigError("grid must have at least one row and column");
    if (!(spacing_m > 0.0) || !std::isfinite(spacing_m)) throw ConfigError("grid spacing must be positive");
    if (active_ap_count < 1 || active_ap_count > rows * cols)
      throw ConfigError("active_ap_count must lie in [1, rows*cols]");
    if (!(cr_link_radius_m > 0.0)) throw ConfigError("cr_link_radius_m must be positive");
  }
};

struct NodePlacement {
  std::vector<Point> ap_positions;        // all grid APs, row-major
  std::vector<int> active_ap_indices;     // sorted, into ap_positions
  std::vector<Point> pn_rx_positions;     // one per active AP, same order
  std::vector<Point> cr_tx_positions;
  std::vector<Point> cr_rx_positions;

  int n_pn() const { return static_cast<int>(active_ap_indices.size()); }
  int n_cr() const { return static_cast<int>(cr_tx_positions.size()); }
  Point active_ap(int link) const { return ap_positions[active_ap_indices[link]]; }

  friend bool operator==(const NodePlacement&, const NodePlacement&) = default;
};

inline double wrap_axis(double delta, double extent) {
  const double d = std::fabs(delta);
  return std::min(d, extent - d);
}

inline double wrap_distance(Point a, Point b, const GridSpec& spec) {
  return std::hypot(wrap_axis(a.x - b.x, spec.width()), wrap_axis(a.y - b.y, spec.height()));
}

inline Point wrap_point(Point p, const GridSpec& spec) {
  auto wrap = [](double v, double extent) {
    double r = std::fmod(v, extent);
    if (r < 0.0) r += extent;
    // fmod of a tiny negative value can round up to exactly `extent`.
    return r >= extent ? 0.0 : r;
  };
  return {wrap(p.x, spec.width()), wrap(p.y, spec.height())};
}

// Uniform over the disk of the given radius (inverse CDF on r^2), wrapped
// back into the grid extent.
inline Point sample_in_disk(Point center, double radius, const GridSpec& spec, Rng& rng) {
  const double r = radius * std::sqrt(uniform01(rng));
  const double theta = 2.0 * std::numbers::pi * uniform01(rng);
  return wrap_point({center.x + r * std::cos(theta), center.y + r * std::sin(theta)}, spec);
}

inline NodePlacement sample_placement(const GridSpec& spec, int n_cr, Rng& rng) {
  spec.validate();
  if (n_cr < 1) throw ConfigError("n_cr must be at least 1");

  NodePlacement out;
  for (int r = 0; r < spec.rows; ++r)
    for (int c = 0; c < spec.cols; ++c)
      out.ap_positions.push_back({(c + 0.5) * spec.spacing_m, (r + 0.5) * spec.spacing_m});

  // Partial Fisher-Yates over the AP indices.
  std::vector<int> idx(out.ap_positions.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  for (int i = 0; i < spec.active_ap_count; ++i) {
    const int j = i + uniform_index(rng, static_cast<int>(idx.size()) - i);
    std::swap(idx[i], idx[j]);
  }
  out.active_ap_indices.assign(idx.begin(), idx.begin() + spec.active_ap_count);
  std::sort(out.active_ap_indices.begin(), out.active_ap_indices.end());

  for (int ap : out.active_ap_indices)
    out.pn_rx_positions.push_back(sample_in_disk(out.ap_positions[ap], spec.coverage_radius(), spec, rng));

  for (int k = 0; k < n_cr; ++k) {
    const Point tx{spec.width() * uniform01(rng), spec.height() * uniform01(rng)};
    out.cr_tx_positions.push_back(wrap_point(tx, spec));
    out.cr_rx_positions.push_back(sample_in_disk(tx, spec.cr_link_radius_m, spec, rng));
  }
  return out;
}

// JSON ----------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const Point& p) { j = nlohmann::json::array({p.x, p.y}); }
inline void from_json(const nlohmann::json& j, Point& p) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("point must be a [x, y] array");
  p.x = j.at(0).get<double>();
  p.y = j.at(1).get<double>();
}

inline void to_json(nlohmann::json& j, const GridSpec& g) {
  j = {{"rows", g.rows},
       {"cols", g.cols},
       {"spacing_m", g.spacing_m},
       {"active_ap_count", g.active_ap_count},
       {"coverage_radius_m", g.coverage_radius()},
       {"cr_link_radius_m", g.cr_link_radius_m}};
}
inline void from_json(const nlohmann::json& j, GridSpec& g) {
  g.rows = j.value("rows", g.rows);
  g.cols = j.value("cols", g.cols);
  g.spacing_m = j.value("spacing_m", g.spacing_m);
  g.active_ap_count = j.value("active_ap_count", g.active_ap_count);
  g.coverage_radius_m = j.value("coverage_radius_m", g.coverage_radius_m);
  g.cr_link_radius_m = j.value("cr_link_radius_m", g.cr_link_radius_m);
}

inline void to_json(nlohmann::json& j, const NodePlacement& p) {
  j = {{"ap_positions", p.ap_positions},
       {"active_ap_indices", p.active_ap_indices},
       {"pn_rx_positions", p.pn_rx_positions},
       {"cr_tx_positions", p.cr_tx_positions},
       {"cr_rx_positions", p.cr_rx_positions}};
}
inline void from_json(const nlohmann::json& j, NodePlacement& p) {
  p.ap_positions = j.at("ap_positions").get<std::vector<Point>>();
  p.active_ap_indices = j.at("active_ap_indices").get<std::vector<int>>();
  p.pn_rx_positions = j.at("pn_rx_positions").get<std::vector<Point>>();
  p.cr_tx_positions = j.at("cr_tx_positions").get<std::vector<Point>>();
  p.cr_rx_positions = j.at("cr_rx_positions").get<std::vector<Point>>();
  if (p.pn_rx_positions.size() != p.active_ap_indices.size() ||
      p.cr_rx_positions.size() != p.cr_tx_positions.size())
    throw ConfigError("placement arrays are dimension-inconsistent");
  for (int ap : p.active_ap_indices)
    if (ap < 0 || ap >= static_cast<int>(p.ap_positions.size()))
      throw ConfigError("active AP index out of range");
}

}  // namespace crdql
