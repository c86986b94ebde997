// kernels.hpp - radial hopping kernels, direct operator assembly, and the
// Schur-type norm data that feeds every propagation-speed bound.
//
// The operator acts as (H u)(x) = sum_y (u(x) - u(y)) K(x,y) h^d, assembled
// literally: off-diagonal entries -K(x,y) h^d, diagonal the exact negative of
// the stored off-diagonal row sum, so H is symmetric and annihilates
// constants to the last bit.
#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "lclab/core.hpp"
#include "lclab/lattice.hpp"
#include "lclab/quadrature.hpp"

namespace lclab {

enum class KernelFamily { power_law, gaussian, compact, singular_power };

struct KernelSpec {
  KernelFamily family = KernelFamily::gaussian;
  int dim = 1;
  double amplitude = 1.0;
  // family parameters (unused ones ignored):
  double a = 4.0;      // power_law: J = amp * (1+r^2)^(-a/2)
  double sigma = 1.0;  // gaussian:  J = amp * exp(-(r/sigma)^2)
  double range = 1.0;  // compact:   J = amp * 1_{r <= range}
  double b = 0.5;      // singular_power: J = amp * r^(-b) for r >= eps
  double eps = 0.1;    //                 J = amp * eps^(-b) for r <  eps

  double profile(double r) const {
    switch (family) {
      case KernelFamily::power_law:
        return amplitude * std::pow(1.0 + r * r, -a / 2.0);
      case KernelFamily::gaussian: {
        double u = r / sigma;
        return amplitude * std::exp(-u * u);
      }
      case KernelFamily::compact:
        return r <= range ? amplitude : 0.0;
      case KernelFamily::singular_power:
        return amplitude * std::pow(std::max(r, eps), -b);
    }
    return 0.0;
  }

  std::string family_name() const {
    switch (family) {
      case KernelFamily::power_law: return "power_law";
      case KernelFamily::gaussian: return "gaussian";
      case KernelFamily::compact: return "compact";
      case KernelFamily::singular_power: return "singular_power";
    }
    return "?";
  }

  void validate() const {
    if (dim != 1 && dim != 2)
      throw invalid_argument_error("KernelSpec: dim must be 1 or 2");
    if (!(amplitude > 0.0))
      throw invalid_argument_error("KernelSpec: amplitude must be positive");
    switch (family) {
      case KernelFamily::power_law:
        if (!(a > 0.0)) throw invalid_argument_error("KernelSpec: power_law needs a > 0");
        break;
      case KernelFamily::gaussian:
        if (!(sigma > 0.0)) throw invalid_argument_error("KernelSpec: gaussian needs sigma > 0");
        break;
      case KernelFamily::compact:
        if (!(range > 0.0)) throw invalid_argument_error("KernelSpec: compact needs range > 0");
        break;
      case KernelFamily::singular_power:
        if (!(eps > 0.0)) throw invalid_argument_error("KernelSpec: singular_power needs eps > 0");
        if (!(b < dim + 1.0))
          throw invalid_argument_error("KernelSpec: singular_power needs b < d + 1");
        break;
    }
  }
};

inline double sphere_area(int dim) { return dim == 1 ? 2.0 : 2.0 * std::numbers::pi; }

// Continuum moment  omega_{d-1} * int_0^inf r^{p+d-1} J(r) dr.
//
// Divergent cases raise divergence_error: analytically for power_law with
// a <= d + p, via the dyadic block detector otherwise (singular_power tails).
inline IntegralResult moment_bound(const KernelSpec& spec, int p, double rel_tol = 1e-12) {
  spec.validate();
  if (p < 0) throw invalid_argument_error("moment_bound: p must be >= 0");
  if (spec.family == KernelFamily::power_law && spec.a <= spec.dim + p)
    throw divergence_error("moment_bound: power_law moment diverges for a <= d + p (a=" +
                               std::to_string(spec.a) + ", d+p=" + std::to_string(spec.dim + p) +
                               ")",
                           0.0, 0.0);
  auto integrand = [&](double r) {
    return std::pow(r, p + spec.dim - 1) * spec.profile(r);
  };
  IntegralResult res = integrate_semi_infinite(integrand, 0.0, rel_tol);
  double w = sphere_area(spec.dim);
  res.value *= w;
  res.error_estimate *= w;
  return res;
}

struct NonlocalOperator {
  Lattice lattice;
  KernelSpec spec;
  MatR matrix;             // dense real symmetric
  double truncation_tail;  // continuum kernel mass beyond the half-width, inf if divergent

  MatC complex_matrix() const { return matrix.cast<cplx>(); }
  int size() const { return static_cast<int>(matrix.rows()); }
};

inline NonlocalOperator assemble_operator(const Lattice& lat, const KernelSpec& spec) {
  spec.validate();
  if (spec.dim != lat.dim)
    throw invalid_argument_error("assemble_operator: kernel/lattice dimension mismatch");
  if (spec.family == KernelFamily::singular_power && spec.eps < 0.5 * lat.spacing)
    throw invalid_argument_error(
        "assemble_operator: singular kernel needs eps >= h/2 (eps=" +
        std::to_string(spec.eps) + ", h=" + std::to_string(lat.spacing) + ")");

  int n = lat.sites();
  double hd = lat.cell_volume();
  NonlocalOperator op;
  op.lattice = lat;
  op.spec = spec;
  op.matrix = MatR::Zero(n, n);
  for (int x = 0; x < n; ++x) {
    for (int y = x + 1; y < n; ++y) {
      double v = -spec.profile(lat.distance(x, y)) * hd;
      op.matrix(x, y) = v;
      op.matrix(y, x) = v;
    }
  }
  // Diagonal = exact negative of the stored row, so rows sum to zero in fp.
  for (int x = 0; x < n; ++x) {
    double s = 0.0;
    for (int y = 0; y < n; ++y)
      if (y != x) s += op.matrix(x, y);
    op.matrix(x, x) = -s;
  }
  try {
    auto tail = [&](double r) { return std::pow(r, spec.dim - 1) * spec.profile(r); };
    op.truncation_tail =
        sphere_area(spec.dim) * integrate_semi_infinite(tail, lat.half_width).value;
  } catch (const divergence_error&) {
    op.truncation_tail = std::numeric_limits<double>::infinity();
  }
  return op;
}

// ===== discrete Schur data =====

// Max over rows (and over columns) of sum_y |K(x,y)| w(x,y)^p h^d.
inline std::pair<double, double> weighted_row_col_sup(const NonlocalOperator& op,
                                                      const std::function<double(int, int)>& w,
                                                      int p) {
  int n = op.size();
  VecR row = VecR::Zero(n), col = VecR::Zero(n);
  for (int x = 0; x < n; ++x) {
    for (int y = 0; y < n; ++y) {
      if (y == x) continue;
      double v = std::abs(op.matrix(x, y)) * std::pow(std::abs(w(x, y)), p);
      row(x) += v;
      col(y) += v;
    }
  }
  return {row.maxCoeff(), col.maxCoeff()};
}

// Schur bound sqrt(row_sup * col_sup) for the p-fold commutator with phi.
inline double schur_kappa(const NonlocalOperator& op, const RealField& phi, int p) {
  if (p < 1) throw invalid_argument_error("schur_kappa: p must be >= 1");
  if (phi.values.size() != op.size())
    throw invalid_argument_error("schur_kappa: field size mismatch");
  auto w = [&](int x, int y) { return phi.values(x) - phi.values(y); };
  auto [r, c] = weighted_row_col_sup(op, w, p);
  return std::sqrt(r * c);
}

// Discrete p-th moment Schur value with the lattice metric as weight.
inline double discrete_moment(const NonlocalOperator& op, int p) {
  auto w = [&](int x, int y) { return op.lattice.distance(x, y); };
  auto [r, c] = weighted_row_col_sup(op, w, p);
  return std::sqrt(r * c);
}

// Largest |phi(x)-phi(y)| / dist(x,y) over site pairs.
inline double discrete_lipschitz(const Lattice& lat, const RealField& phi) {
  double best = 0.0;
  for (int x = 0; x < lat.sites(); ++x)
    for (int y = x + 1; y < lat.sites(); ++y)
      best = std::max(best, std::abs(phi.values(x) - phi.values(y)) / lat.distance(x, y));
  return best;
}

struct SpeedBounds {
  std::vector<double> kappa;  // kappa[p-1] bounds ||ad^p_phi(H)||, p = 1..n+1
  double moment_scale = 0.0;  // M: max_p discrete p-th moment Schur value
  int order = 0;              // n

  double kappa1() const { return kappa.at(0); }
};

inline SpeedBounds compute_speed_bounds(const NonlocalOperator& op, const RealField& phi,
                                        int n) {
  if (n < 1) throw invalid_argument_error("compute_speed_bounds: n must be >= 1");
  SpeedBounds sb;
  sb.order = n;
  for (int p = 1; p <= n + 1; ++p) {
    sb.kappa.push_back(schur_kappa(op, phi, p));
    sb.moment_scale = std::max(sb.moment_scale, discrete_moment(op, p));
  }
  return sb;
}

}  // namespace lclab
