// lattice.hpp - uniform cell-centered grids, site regions, and fields on them.
//
// Coordinates are cell centers x_k = -L + (k + 1/2) h with h = 2L/N, so no
// site ever sits on +-L and periodic wrapping never duplicates a point.
// Periodic distances use the per-axis minimum image; truncated lattices use
// the plain Euclidean metric.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "lclab/core.hpp"

namespace lclab {

enum class Boundary { periodic, truncated };

struct Lattice {
  int dim = 1;                 // 1 or 2
  double half_width = 0.0;     // L
  int points_per_axis = 0;     // N
  Boundary boundary = Boundary::periodic;
  double spacing = 0.0;        // h = 2L/N

  int sites() const { return dim == 1 ? points_per_axis : points_per_axis * points_per_axis; }
  double cell_volume() const { return dim == 1 ? spacing : spacing * spacing; }

  // Row-major site -> per-axis indices.
  int axis_index(int site, int axis) const {
    return dim == 1 ? site : (axis == 0 ? site / points_per_axis : site % points_per_axis);
  }

  double axis_coordinate(int k) const {
    return -half_width + (k + 0.5) * spacing;
  }

  // Coordinates of a site; y is 0 for dim == 1.
  std::array<double, 2> coordinate(int site) const {
    if (dim == 1) return {axis_coordinate(site), 0.0};
    return {axis_coordinate(axis_index(site, 0)), axis_coordinate(axis_index(site, 1))};
  }

  double wrap_axis(double diff) const {
    double span = 2.0 * half_width;
    return diff - span * std::round(diff / span);
  }

  double distance_points(const std::array<double, 2>& a, const std::array<double, 2>& b) const {
    double dx = a[0] - b[0];
    double dy = a[1] - b[1];
    if (boundary == Boundary::periodic) {
      dx = wrap_axis(dx);
      if (dim == 2) dy = wrap_axis(dy);
    }
    return dim == 1 ? std::abs(dx) : std::hypot(dx, dy);
  }

  double distance(int site_a, int site_b) const {
    return distance_points(coordinate(site_a), coordinate(site_b));
  }
};

inline Lattice build_lattice(int dim, double half_width, int points_per_axis,
                             Boundary boundary) {
  if (dim != 1 && dim != 2)
    throw invalid_argument_error("build_lattice: dim must be 1 or 2");
  if (!(half_width > 0.0))
    throw invalid_argument_error("build_lattice: half_width must be positive");
  if (points_per_axis < 2)
    throw invalid_argument_error("build_lattice: need at least 2 points per axis");
  Lattice lat;
  lat.dim = dim;
  lat.half_width = half_width;
  lat.points_per_axis = points_per_axis;
  lat.boundary = boundary;
  lat.spacing = 2.0 * half_width / points_per_axis;
  return lat;
}

// ===== regions and fields =====

struct RegionSet {
  std::vector<std::uint8_t> mask;  // one flag per site
  std::string description;

  int count() const { return static_cast<int>(std::count(mask.begin(), mask.end(), 1)); }
  bool contains(int site) const { return mask[static_cast<size_t>(site)] != 0; }
};

struct RealField {
  VecR values;
  std::string description;
};

struct State {
  VecC amplitudes;
  double time = 0.0;
};

inline RegionSet region_from_predicate(const Lattice& lat,
                                       const std::function<bool(double, double)>& pred,
                                       const std::string& description) {
  RegionSet r;
  r.mask.assign(static_cast<size_t>(lat.sites()), 0);
  r.description = description;
  for (int s = 0; s < lat.sites(); ++s) {
    auto c = lat.coordinate(s);
    if (pred(c[0], c[1])) r.mask[static_cast<size_t>(s)] = 1;
  }
  return r;
}

// Axis-aligned closed box [lo, hi] (second axis ignored for dim 1).
inline RegionSet region_box(const Lattice& lat, std::array<double, 2> lo,
                            std::array<double, 2> hi) {
  return region_from_predicate(
      lat,
      [&](double x, double y) {
        bool in = x >= lo[0] && x <= hi[0];
        if (lat.dim == 2) in = in && y >= lo[1] && y <= hi[1];
        return in;
      },
      "box");
}

inline RegionSet region_ball(const Lattice& lat, std::array<double, 2> center,
                             double radius) {
  return region_from_predicate(
      lat,
      [&](double x, double y) {
        return lat.distance_points({x, y}, center) <= radius;
      },
      "ball");
}

inline RegionSet region_complement(const RegionSet& r) {
  RegionSet c = r;
  for (auto& m : c.mask) m = m ? 0 : 1;
  c.description = "complement(" + r.description + ")";
  return c;
}

// Exact distance to the region: minimum lattice metric over member sites.
inline RealField distance_function(const Lattice& lat, const RegionSet& region) {
  if (static_cast<int>(region.mask.size()) != lat.sites())
    throw invalid_argument_error("distance_function: region size mismatch");
  std::vector<int> members;
  for (int s = 0; s < lat.sites(); ++s)
    if (region.contains(s)) members.push_back(s);
  if (members.empty())
    throw invalid_argument_error("distance_function: empty region");
  RealField f;
  f.values.resize(lat.sites());
  f.description = "distance(" + region.description + ")";
  for (int s = 0; s < lat.sites(); ++s) {
    double best = std::numeric_limits<double>::infinity();
    for (int m : members) best = std::min(best, lat.distance(s, m));
    f.values(s) = best;
  }
  return f;
}

inline RegionSet enlarge_region(const Lattice& lat, const RegionSet& region, double margin) {
  if (margin < 0.0) throw invalid_argument_error("enlarge_region: negative margin");
  RealField d = distance_function(lat, region);
  RegionSet out;
  out.mask.assign(static_cast<size_t>(lat.sites()), 0);
  out.description = region.description + "+" + std::to_string(margin);
  for (int s = 0; s < lat.sites(); ++s)
    if (d.values(s) <= margin) out.mask[static_cast<size_t>(s)] = 1;
  return out;
}

// Mass h^d sum_{x in region} |psi(x)|^2.
inline double region_mass(const Lattice& lat, const RegionSet& region, const State& psi) {
  if (psi.amplitudes.size() != lat.sites() ||
      static_cast<int>(region.mask.size()) != lat.sites())
    throw invalid_argument_error("region_mass: size mismatch");
  double sum = 0.0;
  for (int s = 0; s < lat.sites(); ++s)
    if (region.contains(s)) sum += std::norm(psi.amplitudes(s));
  return sum * lat.cell_volume();
}

inline double total_mass(const Lattice& lat, const State& psi) {
  return psi.amplitudes.squaredNorm() * lat.cell_volume();
}

// Normalized Gaussian bump exp(-|x-center|^2 / (2 width^2)).
inline State gaussian_state(const Lattice& lat, std::array<double, 2> center, double width) {
  if (!(width > 0.0)) throw invalid_argument_error("gaussian_state: width must be positive");
  State psi;
  psi.amplitudes.resize(lat.sites());
  for (int s = 0; s < lat.sites(); ++s) {
    auto c = lat.coordinate(s);
    double r = lat.distance_points(c, center);
    psi.amplitudes(s) = std::exp(-r * r / (2.0 * width * width));
  }
  double nrm = std::sqrt(total_mass(lat, psi));
  if (nrm == 0.0) throw numerical_error("gaussian_state: vanishing norm");
  psi.amplitudes /= nrm;
  return psi;
}

}  // namespace lclab
