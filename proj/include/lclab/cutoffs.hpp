// cutoffs.hpp - smooth switch functions chi built as chi(x) = int_0^x w(y)^2 dy
// from a bump weight w supported on (0, delta), their exact derivatives, the
// weighted integral norms that control resolvent expansions, and the
// almost-analytic extension machinery built on top of them.
//
// Two bump families:
//   polynomial   w(y) = amp * (y(delta-y))^m     (factored-form derivatives)
//   exponential  w(y) = amp * exp(-1/(y(delta-y)))  (recurrence derivatives)
// Both vanish with all tracked derivatives at 0 and delta, so chi is 0 on
// (-inf, 0], strictly increasing on (0, delta), and constant sup_value on
// [delta, inf).
//
// Polynomial bumps are never expanded into the power basis: amplitudes reach
// ~1/Beta(2m+1,2m+1) and the expanded antiderivative cancels catastrophically
// near delta. Values come from fixed-node Gauss-Legendre of w^2 (exact for
// polynomials) and derivatives from the factored product rule.
#pragma once

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "lclab/core.hpp"
#include "lclab/quadrature.hpp"

namespace lclab {

// int_0^delta (y(delta-y))^{2m} dy = delta^{4m+1} B(2m+1, 2m+1).
inline double bump_square_integral(double delta, int m) {
  double log_beta = 2.0 * std::lgamma(2.0 * m + 1.0) - std::lgamma(4.0 * m + 2.0);
  return std::pow(delta, 4.0 * m + 1.0) * std::exp(log_beta);
}

enum class BumpKind { polynomial, exponential };

class CutoffFunction {
 public:
  double delta = 0.0;
  int bump_exponent = 0;       // m for the polynomial family
  BumpKind kind = BumpKind::polynomial;
  double bump_amplitude = 0.0;
  double sup_value = 0.0;      // chi(delta)

  // ----- weight w and its derivatives -----

  double weight(double y) const { return weight_derivative(y, 0); }

  double weight_derivative(double y, int k) const {
    if (y <= 0.0 || y >= delta) return 0.0;
    if (kind == BumpKind::polynomial) return poly_weight_derivative(y, k);
    return exp_weight_derivative(y, k);
  }

  // ----- chi and its derivatives -----

  double value(double x) const {
    if (x <= 0.0) return 0.0;
    if (x >= delta) return sup_value;
    auto w2 = [this](double y) { double w = weight(y); return w * w; };
    if (kind == BumpKind::polynomial)
      return boost::math::quadrature::gauss<double, 30>::integrate(w2, 0.0, x);
    // Exponential kind: prefix table over uniform panels + partial-panel pass.
    double h = delta / static_cast<double>(cum_.size() - 1);
    auto i = static_cast<size_t>(x / h);
    if (i >= cum_.size() - 1) i = cum_.size() - 2;
    double x_i = static_cast<double>(i) * h;
    return cum_[i] + boost::math::quadrature::gauss<double, 15>::integrate(w2, x_i, x);
  }

  // chi^{(k)}; k = 0 is the value itself, k >= 1 is (w^2)^{(k-1)} by Leibniz.
  double derivative(double x, int k) const {
    if (k < 0) throw invalid_argument_error("CutoffFunction: negative derivative order");
    if (k == 0) return value(x);
    if (x <= 0.0 || x >= delta) return 0.0;
    int n = k - 1;
    double sum = 0.0;
    for (int j = 0; j <= n; ++j)
      sum += binom(n, j) * weight_derivative(x, j) * weight_derivative(x, n - j);
    return sum;
  }

  // Number of continuous derivatives guaranteed for chi across 0 and delta.
  int continuity() const {
    return kind == BumpKind::polynomial ? 2 * bump_exponent : 1 << 20;
  }

  static CutoffFunction make(double delta, int bump_exponent, BumpKind kind,
                             double target_sup);

  static CutoffFunction make_unnormalized(double delta, int bump_exponent, BumpKind kind,
                                          double amplitude);

 private:
  std::vector<double> cum_;  // exponential kind: prefix integrals of w^2

  static double binom(int n, int k) {
    double r = 1.0;
    for (int j = 1; j <= k; ++j) r = r * (n - k + j) / j;
    return r;
  }

  // d^k/dy^k [amp y^m (delta-y)^m] via the product rule, each term kept as a
  // product of nonnegative powers so no large-coefficient cancellation occurs.
  double poly_weight_derivative(double y, int k) const {
    int m = bump_exponent;
    double sum = 0.0;
    for (int i = std::max(0, k - m); i <= std::min(k, m); ++i) {
      double t = binom(k, i);
      for (int j = 0; j < i; ++j) t *= (m - j);              // falling factorial on y^m
      for (int j = 0; j < k - i; ++j) t *= -(m - j);         // ... on (delta-y)^m
      t *= std::pow(y, m - i) * std::pow(delta - y, m - (k - i));
      sum += t;
    }
    return bump_amplitude * sum;
  }

  // Derivatives of exp(-1/q), q = y(delta-y), via q g = -1 and w' = w g'.
  double exp_weight_derivative(double y, int k) const {
    double q = y * (delta - y);
    double w0 = bump_amplitude * std::exp(-1.0 / q);
    if (w0 == 0.0) return 0.0;
    std::vector<double> g(k + 2), w(k + 1);
    g[0] = -1.0 / q;
    double q1 = delta - 2.0 * y, q2 = -2.0;
    for (int j = 1; j <= k + 1; ++j) {
      double s = binom(j, 1) * q1 * g[j - 1];
      if (j >= 2) s += binom(j, 2) * q2 * g[j - 2];
      g[j] = -s / q;
    }
    w[0] = w0;
    for (int j = 0; j < k; ++j) {
      double s = 0.0;
      for (int i = 0; i <= j; ++i) s += binom(j, i) * w[i] * g[j - i + 1];
      w[j + 1] = s;
    }
    return w[k];
  }

  void finish() {
    if (kind == BumpKind::polynomial) {
      sup_value = bump_amplitude * bump_amplitude * bump_square_integral(delta, bump_exponent);
      return;
    }
    auto w2 = [this](double y) { double w = weight(y); return w * w; };
    constexpr size_t kPanels = 2048;
    cum_.assign(kPanels + 1, 0.0);
    double h = delta / static_cast<double>(kPanels);
    for (size_t i = 0; i < kPanels; ++i)
      cum_[i + 1] = cum_[i] + boost::math::quadrature::gauss<double, 15>::integrate(
                                  w2, i * h, (i + 1) * h);
    sup_value = cum_[kPanels];
  }

  friend CutoffFunction combine_cutoffs(const CutoffFunction&, const CutoffFunction&, double);
};

inline CutoffFunction CutoffFunction::make_unnormalized(double delta, int bump_exponent,
                                                        BumpKind kind, double amplitude) {
  if (!(delta > 0.0 && delta < 1.0))
    throw invalid_argument_error("make_cutoff: delta must lie in (0,1)");
  if (kind == BumpKind::polynomial && (bump_exponent < 1 || bump_exponent > 14))
    throw invalid_argument_error(
        "make_cutoff: polynomial bump exponent must lie in [1, 14]; use the "
        "exponential family for higher orders");
  CutoffFunction f;
  f.delta = delta;
  f.bump_exponent = bump_exponent;
  f.kind = kind;
  f.bump_amplitude = amplitude;
  f.finish();
  return f;
}

inline CutoffFunction CutoffFunction::make(double delta, int bump_exponent, BumpKind kind,
                                           double target_sup) {
  CutoffFunction f = make_unnormalized(delta, bump_exponent, kind, 1.0);
  if (!(f.sup_value > 0.0)) throw numerical_error("make_cutoff: degenerate bump");
  double amp = std::sqrt(target_sup / f.sup_value);
  return make_unnormalized(delta, bump_exponent, kind, amp);
}

// Standard cutoff: polynomial bump, exponent n+4, normalized so chi(delta)=1.
// The exponent keeps both chi and w at least (n+3)-fold continuously
// differentiable, which is what order-n expansions consume.
inline CutoffFunction make_cutoff(double delta, int n, BumpKind kind = BumpKind::polynomial,
                                  int bump_exponent = -1) {
  if (n < 1) throw invalid_argument_error("make_cutoff: order n must be >= 1");
  int m = bump_exponent > 0 ? bump_exponent : n + 4;
  return CutoffFunction::make(delta, m, kind, 1.0);
}

// xi >= xi1 + c * xi2 with xi' >= xi1' + c * xi2' pointwise, staying in the
// same class: both weights are rescaled onto the smaller exponent using
// q = y(delta-y) <= delta^2/4.
inline CutoffFunction combine_cutoffs(const CutoffFunction& x1, const CutoffFunction& x2,
                                      double c) {
  if (c < 0.0) throw invalid_argument_error("combine_cutoffs: c must be >= 0");
  if (x1.delta != x2.delta)
    throw invalid_argument_error("combine_cutoffs: mismatched delta");
  if (x1.kind != x2.kind)
    throw invalid_argument_error("combine_cutoffs: mismatched bump families");
  double delta = x1.delta;
  CutoffFunction out;
  if (x1.kind == BumpKind::exponential) {
    double amp = std::sqrt(x1.bump_amplitude * x1.bump_amplitude +
                           c * x2.bump_amplitude * x2.bump_amplitude);
    out = CutoffFunction::make_unnormalized(delta, 0, BumpKind::exponential, amp);
  } else {
    int m = std::min(x1.bump_exponent, x2.bump_exponent);
    double qmax = delta * delta / 4.0;
    double a = x1.bump_amplitude * x1.bump_amplitude *
                   std::pow(qmax, 2.0 * (x1.bump_exponent - m)) +
               c * x2.bump_amplitude * x2.bump_amplitude *
                   std::pow(qmax, 2.0 * (x2.bump_exponent - m));
    out = CutoffFunction::make_unnormalized(delta, m, BumpKind::polynomial, std::sqrt(a));
  }
  // Domination check on a fixed sample, required at construction.
  constexpr int kSamples = 1000;
  for (int i = 1; i <= kSamples; ++i) {
    double y = delta * i / (kSamples + 1.0);
    double lhs_p = out.derivative(y, 1);
    double rhs_p = x1.derivative(y, 1) + c * x2.derivative(y, 1);
    double lhs_v = out.value(y);
    double rhs_v = x1.value(y) + c * x2.value(y);
    double scale_p = std::abs(rhs_p) + 1e-300;
    double scale_v = std::abs(rhs_v) + 1e-300;
    if (lhs_p < rhs_p - 1e-9 * scale_p || lhs_v < rhs_v - 1e-9 * scale_v)
      throw numerical_error("combine_cutoffs: domination failed at y=" + std::to_string(y));
  }
  return out;
}

// Auxiliary dominating cutoff of lower endpoint order, used as the xi_k in
// recursive monotonicity checks; unnormalized, sup of xi' pinned to 1.
inline CutoffFunction auxiliary_cutoff(const CutoffFunction& chi, int k) {
  if (chi.kind != BumpKind::polynomial)
    throw invalid_argument_error("auxiliary_cutoff: polynomial bumps only");
  int m = std::max(2, chi.bump_exponent - std::max(1, k - 1));
  double qmax = chi.delta * chi.delta / 4.0;
  double amp = std::pow(qmax, -static_cast<double>(m));
  return CutoffFunction::make_unnormalized(chi.delta, m, BumpKind::polynomial, amp);
}

// ===== weighted integral norm =====

// N(f, p) = sum_{m=0}^{nu+2} int <x>^{m-p-1} |f^{(m)}(x)| dx.
// The m = 0 term covers the constant right tail analytically via dyadic
// blocks; for p = 0 that tail diverges and raises divergence_error.
inline IntegralResult weighted_norm(const CutoffFunction& f, int p, int nu) {
  if (p < 0 || nu < 0) throw invalid_argument_error("weighted_norm: p, nu must be >= 0");
  IntegralResult total;
  for (int m = 0; m <= nu + 2; ++m) {
    double expo = m - p - 1.0;
    auto wfun = [&](double x) {
      return std::pow(std::sqrt(1.0 + x * x), expo) * std::abs(f.derivative(x, m));
    };
    IntegralResult core = integrate_interval(wfun, 0.0, f.delta, 1e-11);
    total.value += core.value;
    total.error_estimate += core.error_estimate;
    if (m == 0 && f.sup_value != 0.0) {
      IntegralResult tail = integrate_semi_infinite(wfun, f.delta, 1e-11);
      total.value += tail.value;
      total.error_estimate += tail.error_estimate;
    }
  }
  return total;
}

// ===== smooth window eta =====

// Quintic smoothstep: 1 on |mu| <= 1, 0 on |mu| >= 2, C^2 across the joins.
// Max slope is 15/8 (no width-1 smooth transition can stay below 1).
inline double window_eta(double mu) {
  double r = std::abs(mu);
  if (r <= 1.0) return 1.0;
  if (r >= 2.0) return 0.0;
  double u = 2.0 - r;
  return u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
}

inline double window_eta_prime(double mu) {
  double r = std::abs(mu);
  if (r <= 1.0 || r >= 2.0) return 0.0;
  double u = 2.0 - r;
  double ds = 30.0 * u * u * (1.0 - u) * (1.0 - u);
  return (mu > 0 ? -1.0 : 1.0) * ds;
}

// ===== almost-analytic extension =====

// f~(x + iy) = eta(y/<x>) sum_{k=0}^{nu+1} f^{(k)}(x) (iy)^k / k!, carrying
// the structural data needed to integrate against it: derivatives are
// supported in [box_lo, box_hi] and f is constant outside.
struct AnalyticExtension {
  std::function<double(double, int)> deriv;  // f^{(k)}(x), k = 0 is f
  int nu = 0;
  double box_lo = 0.0, box_hi = 0.0;
  double left_value = 0.0, right_value = 0.0;

  static AnalyticExtension from_cutoff(const CutoffFunction& f, int nu) {
    AnalyticExtension e;
    e.deriv = [f](double x, int k) { return f.derivative(x, k); };
    e.nu = nu;
    e.box_lo = 0.0;
    e.box_hi = f.delta;
    e.left_value = 0.0;
    e.right_value = f.sup_value;
    return e;
  }

  cplx taylor(double x, double y) const {
    cplx iy(0.0, y), pw(1.0, 0.0);
    cplx sum(0.0, 0.0);
    double fact = 1.0;
    for (int k = 0; k <= nu + 1; ++k) {
      if (k > 0) {
        pw *= iy;
        fact *= k;
      }
      sum += deriv(x, k) * pw / fact;
    }
    return sum;
  }

  cplx value(double x, double y) const {
    double bracket = std::sqrt(1.0 + x * x);
    double eta = window_eta(y / bracket);
    if (eta == 0.0) return {0.0, 0.0};
    return eta * taylor(x, y);
  }
};

// Density of df~ with respect to dx dy:  -(1/2pi) (d_x + i d_y) f~.
// Closed form: the window-derivative term plus the top Taylor remainder
//   d_zbar f~ = eta'(y/<x>) (i/<x> - yx/<x>^3) T(z)
//             + eta(y/<x>) f^{(nu+2)}(x) (iy)^{nu+1} / (nu+1)!.
inline cplx extension_measure(const AnalyticExtension& ext, cplx z) {
  double x = z.real(), y = z.imag();
  double br = std::sqrt(1.0 + x * x);
  double mu = y / br;
  cplx out(0.0, 0.0);
  double etp = window_eta_prime(mu);
  if (etp != 0.0)
    out += etp * (cplx(0.0, 1.0) / br - y * x / (br * br * br)) * ext.taylor(x, y);
  double eta = window_eta(mu);
  if (eta != 0.0) {
    cplx iy(0.0, y), pw(1.0, 0.0);
    double fact = 1.0;
    for (int k = 1; k <= ext.nu + 1; ++k) {
      pw *= iy;
      fact *= k;
    }
    out += eta * ext.deriv(x, ext.nu + 2) * pw / fact;
  }
  return -out / (2.0 * std::numbers::pi);
}

namespace detail {

// int_{y_lo}^{y_hi} |density(x,y)| y^{-(p+1)} dy on log-spaced panels.
inline double abs_measure_column(const AnalyticExtension& ext, double x, int p,
                                 double y_lo, double y_hi, double rel_tol) {
  if (!(y_lo < y_hi)) return 0.0;
  auto f = [&](double y) {
    return std::abs(extension_measure(ext, cplx(x, y))) * std::pow(y, -(p + 1.0));
  };
  double total = 0.0;
  double lo = y_lo;
  while (lo < y_hi) {
    double hi = std::min(y_hi, lo * 2.0);
    total += integrate_interval(f, lo, hi, rel_tol).value;
    lo = hi;
  }
  return total;
}

// x-strip contribution: integrate the column integral over [x_lo, x_hi].
inline double strip_contribution(const AnalyticExtension& ext, int p, double x_lo,
                                 double x_hi, double y_lo, double rel_tol) {
  auto g = [&](double x) {
    double y_hi = 2.0 * std::sqrt(1.0 + x * x);
    return abs_measure_column(ext, x, p, y_lo, y_hi, rel_tol);
  };
  return integrate_interval(g, x_lo, x_hi, rel_tol).value;
}

}  // namespace detail

// int |df~(z)| |Im z|^{-(p+1)} dx dy, the quantity controlling order-p
// resolvent expansions. Upper half-plane times 2 (the density is conjugate
// symmetric). The y -> 0 edge is refined geometrically and extrapolated; the
// constant-tail strips are summed dyadically with divergence detection (p = 0
// on a non-decaying cutoff genuinely diverges and reports as such).
inline IntegralResult remainder_integral(const AnalyticExtension& ext, int p,
                                         double rel_tol = 1e-9) {
  if (p < 0 || p > ext.nu)
    throw invalid_argument_error("remainder_integral: need 0 <= p <= nu");
  double pad = 1.0;
  double core_lo = ext.box_lo - pad, core_hi = ext.box_hi + pad;
  double y_start = 0.25;

  IntegralResult total;
  // Core strips above y_start plus their dyadic continuations sideways.
  total.value += detail::strip_contribution(ext, p, core_lo, core_hi, y_start, rel_tol);
  for (int side = 0; side < 2; ++side) {
    bool right = side == 0;
    double cval = right ? ext.right_value : ext.left_value;
    if (cval == 0.0) continue;  // density vanishes where f is identically 0
    double lo = right ? core_hi : core_lo;
    double width = core_hi - core_lo;
    double prev = -1.0;
    int flat = 0;
    for (int j = 0; j < 200; ++j) {
      double a = right ? lo : lo - width;
      double b = right ? lo + width : lo;
      // Tail columns live in the window cone, y >= <x> > y_start.
      double blk = detail::strip_contribution(ext, p, a, b, y_start, rel_tol);
      total.value += blk;
      total.blocks = j + 1;
      if (blk <= rel_tol * std::abs(total.value)) break;
      if (prev > 0.0) {
        double ratio = blk / prev;
        flat = ratio >= 0.995 ? flat + 1 : 0;
        if (flat >= 4)
          throw divergence_error("remainder_integral: tail strips stopped decaying",
                                 total.value, blk);
        if (ratio < 0.6 && blk < 1e-3 * std::abs(total.value) * (1.0 - ratio)) {
          total.value += blk * ratio / (1.0 - ratio);
          break;
        }
      }
      prev = blk;
      lo = right ? b : a;
      width *= 2.0;
    }
  }
  // Small-y edge over the derivative box, refined toward y = 0.
  double y_min = y_start;
  double edge = 0.0;
  double prev_inc = -1.0;
  for (int j = 0; j < 60; ++j) {
    double y_next = y_min / 2.0;
    auto g = [&](double x) {
      return detail::abs_measure_column(ext, x, p, y_next, y_min, rel_tol);
    };
    double inc = integrate_interval(g, core_lo, core_hi, rel_tol).value;
    edge += inc;
    y_min = y_next;
    double scale = std::abs(total.value + edge) + 1e-300;
    if (prev_inc >= 0.0 && inc >= prev_inc && inc > 1e-6 * scale)
      throw divergence_error("remainder_integral: y->0 edge not integrable", total.value + edge,
                             inc);
    if (inc <= 0.25 * rel_tol * scale && j >= 6) {
      if (prev_inc > 0.0 && inc > 0.0 && inc < prev_inc) {
        double r = inc / prev_inc;
        edge += inc * r / (1.0 - r);  // geometric completion of the remaining edge
      }
      break;
    }
    prev_inc = inc;
  }
  total.value += edge;
  total.value *= 2.0;  // lower half-plane by symmetry
  total.error_estimate = std::abs(total.value) * 10.0 * rel_tol;
  return total;
}

}  // namespace lclab
