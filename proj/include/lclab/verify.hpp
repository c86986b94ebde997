// verify.hpp - numerical checks of the propagation estimates: geometric
// sandwiches between sharp steps and smoothed observables, the differential
// monotonicity inequality, monotone envelopes, the operator localization
// bound with its state-level counterpart, and the dispersive consequences
// (tail decay fits, time-integrated tails, level-set measures, traveling
// profile speed consistency).
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "lclab/core.hpp"
#include "lclab/cutoffs.hpp"
#include "lclab/kernels.hpp"
#include "lclab/lattice.hpp"
#include "lclab/opcalc.hpp"
#include "lclab/propagate.hpp"

namespace lclab {

// ===== reports =====

// Outcome of one inequality sweep. Each margin is the worst signed slack
// (RHS - LHS; the minimum eigenvalue for operator checks) at one sample; the
// sweep passes iff every margin clears -tolerance. smallest_c is the fitted
// value of the free constant, 0 when none is needed.
struct InequalityReport {
  std::string name;
  std::vector<double> samples;  // parameter grid, usually times
  std::vector<double> margins;  // signed slack per sample
  double smallest_c = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

inline InequalityReport finalize_report(InequalityReport r) {
  r.passed = !r.margins.empty();
  for (double m : r.margins)
    if (!(m >= -r.tolerance)) r.passed = false;  // NaN fails
  return r;
}

// Two fitted constants agree within the relative band the refinement
// stability checks use (20% by default).
inline bool constants_stable(double a, double b, double band = 0.2) {
  double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 || std::abs(a - b) <= band * scale;
}

// Masses at or below this fraction of the initial mass are round-off, not
// decay evidence.
inline constexpr double kTailFloor = 1e-14;

enum class FitStatus { fitted, exact_zero, inconclusive };

inline std::string fit_status_name(FitStatus s) {
  switch (s) {
    case FitStatus::fitted: return "fitted";
    case FitStatus::exact_zero: return "exact_zero";
    case FitStatus::inconclusive: return "inconclusive";
  }
  return "unknown";
}

// Power-law fit of a sampled decay series over a time window. Samples below
// the round-off floor are excluded from the fit; a series that is identically
// zero is exact_zero, and fewer than 8 usable samples is inconclusive
// (neither outcome is evidence of a decay rate).
struct DecayFit {
  std::vector<double> times;   // window samples
  std::vector<double> values;
  double window_lo = 0.0;
  double window_hi = 0.0;
  double fitted_exponent = 0.0;  // log-log least-squares slope
  double residual = 0.0;         // rms log residual about the fit line
  double fitted_c = 0.0;         // sup over the window of |t|^moment * value
  int moment = 0;                // reference decay rate |t|^-moment
  int points_above_floor = 0;
  FitStatus status = FitStatus::inconclusive;
};

namespace detail {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double rms = 0.0;
};

inline LineFit line_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
  const size_t n = xs.size();
  if (n < 2 || ys.size() != n)
    throw invalid_argument_error("line_fit: need two matched samples at least");
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx <= 0.0) throw invalid_argument_error("line_fit: abscissae are degenerate");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double r = ys[i] - (f.intercept + f.slope * xs[i]);
    ss += r * r;
  }
  f.rms = std::sqrt(ss / static_cast<double>(n));
  return f;
}

// 1_{(a, infinity)}(phi) as a diagonal 0/1 matrix.
inline MatC step_projector(const RealField& phi, double a) {
  VecR d(phi.values.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = phi.values[i] > a ? 1.0 : 0.0;
  return diagonal_matrix(d);
}

// g((phi - c|t|)/s) through either backend of a family; the dense backend
// reuses one eigendecomposition of phi across calls.
class SmoothedStepApplier {
 public:
  explicit SmoothedStepApplier(const AstloFamily& fam) : fam_(&fam) {
    if (!(fam.scale_s > 0.0))
      throw invalid_argument_error("verify: observable scale must be positive");
    if (const auto* op = std::get_if<HermitianOperator>(&fam.phi)) es_ = eigensystem(op->matrix);
  }

  int size() const {
    if (const auto* field = std::get_if<RealField>(&fam_->phi))
      return static_cast<int>(field->values.size());
    return std::get<HermitianOperator>(fam_->phi).size();
  }

  MatC at(double t, const std::function<double(double)>& g) const {
    const double shift = fam_->speed_c * std::abs(t);
    const double s = fam_->scale_s;
    if (const auto* field = std::get_if<RealField>(&fam_->phi)) {
      VecR d(field->values.size());
      for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = g((field->values[i] - shift) / s);
      return diagonal_matrix(d);
    }
    return apply_function(*es_, [&](double lam) { return g((lam - shift) / s); });
  }

  double expectation(const VecC& psi, double t, const std::function<double(double)>& g) const {
    const double shift = fam_->speed_c * std::abs(t);
    const double s = fam_->scale_s;
    if (const auto* field = std::get_if<RealField>(&fam_->phi)) {
      if (field->values.size() != psi.size())
        throw invalid_argument_error("verify: state/observable size mismatch");
      double acc = 0.0;
      for (Eigen::Index i = 0; i < psi.size(); ++i)
        acc += std::norm(psi[i]) * g((field->values[i] - shift) / s);
      return acc;
    }
    MatC a = at(t, g);
    return (psi.adjoint() * a * psi)(0, 0).real();
  }

 private:
  const AstloFamily* fam_;
  std::optional<EigenSystem> es_;
};

// U(t, 0) factory: one eigendecomposition reused for autonomous Hamiltonians,
// midpoint-exponential stepping for sampled ones.
class PropagatorFactory {
 public:
  PropagatorFactory(const MatC& h0, const PotentialSpec& v, double dt)
      : h0_(h0), v_(v), dt_(dt) {
    require_hermitian(h0, 1e-12, "propagator");
    if (v.kind == PotentialKind::nls)
      throw invalid_argument_error("propagator: nonlinear flow has no state-independent matrix");
    if (v.kind == PotentialKind::none || v.kind == PotentialKind::static_multiplication) {
      MatC h = h0;
      if (v.kind == PotentialKind::static_multiplication) {
        if (v.field.values.size() != h.rows())
          throw invalid_argument_error("propagator: potential field size mismatch");
        h.diagonal() += v.field.values.cast<cplx>();
      }
      es_ = eigensystem(h);
    } else if (!(dt > 0.0)) {
      throw invalid_argument_error("propagator: sampled potential needs dt > 0");
    }
  }

  MatC at(double t) const {
    if (es_) return spectral_step(*es_, t);
    return evolution_operator(h0_, v_, t, dt_);
  }

 private:
  MatC h0_;
  PotentialSpec v_;
  double dt_ = 0.0;
  std::optional<EigenSystem> es_;
};

inline MatC conjugate_by(const MatC& u, const MatC& a) { return MatC(u.adjoint() * a * u); }

// V(t) as a matrix, empty for the trivial potential.
inline std::optional<MatC> potential_matrix(const PotentialSpec& v, double t) {
  switch (v.kind) {
    case PotentialKind::none: return std::nullopt;
    case PotentialKind::static_multiplication: return diagonal_matrix(v.field.values);
    case PotentialKind::time_dependent: return v.sampler(t);
    default:
      throw invalid_argument_error("verify: nonlinear potential has no fixed matrix");
  }
}

}  // namespace detail

// ===== geometric sandwich =====

// With eta in {chi, xi} supported as a cutoff of width delta, a height
// function f with f(t) > c'|t|, and the scale s(t) = (f(t) - c'|t|)/delta,
// the normalized observable eta((phi - c'|t|)/s)/sup(eta) is pinched between
// the sharp steps of phi:
//   eta(phi/s)/sup(eta) <= 1_{(0,oo)}(phi)   and
//   1_{(f(t),oo)}(phi) <= eta((phi - c'|t|)/s)/sup(eta).
// Both hold entrywise-exactly for a diagonal phi, so the tolerance is pure
// round-off. The two cutoffs must share one support width.
inline InequalityReport geometric_sandwich_check(
    const RealField& phi, const CutoffFunction& chi, const CutoffFunction& xi,
    const std::function<double(double)>& f_height, double c_prime,
    const std::vector<double>& times) {
  if (times.empty()) throw invalid_argument_error("geometric_sandwich_check: no samples");
  if (!(c_prime > 0.0))
    throw invalid_argument_error("geometric_sandwich_check: interior speed must be positive");
  if (!f_height) throw invalid_argument_error("geometric_sandwich_check: height function required");
  if (std::abs(chi.delta - xi.delta) > 1e-12 * chi.delta)
    throw invalid_argument_error(
        "geometric_sandwich_check: cutoffs must share one support width");

  InequalityReport rep;
  rep.name = "geometric-sandwich";
  rep.tolerance = 1e-14;
  const CutoffFunction* etas[2] = {&chi, &xi};
  for (double t : times) {
    const double reach = c_prime * std::abs(t);
    const double gap = f_height(t) - reach;
    if (!(gap > 0.0))
      throw invalid_argument_error(
          "geometric_sandwich_check: height must stay above c'|t| at t = " +
          to_string_shortest(t));
    const double s = gap / chi.delta;
    double margin = std::numeric_limits<double>::infinity();
    for (const CutoffFunction* eta : etas) {
      const double sup = eta->sup_value;
      for (Eigen::Index i = 0; i < phi.values.size(); ++i) {
        const double x = phi.values[i];
        const double upper = x > 0.0 ? 1.0 : 0.0;            // 1_{(0,oo)}
        const double lower = x > f_height(t) ? 1.0 : 0.0;    // 1_{(f(t),oo)}
        margin = std::min(margin, upper - eta->value(x / s) / sup);
        margin = std::min(margin, eta->value((x - reach) / s) / sup - lower);
      }
    }
    rep.samples.push_back(t);
    rep.margins.push_back(margin);
  }
  return finalize_report(rep);
}

// ===== differential monotonicity =====

struct RmeOptions {
  double fd_factor = 1e-4;  // finite-difference step = fd_factor * scale
  double tol_scale = 1e-8;  // tolerance = tol_scale * (size of the checked terms)
};

// L^1-in-time size of [phi, V(t)] over [0, t_max], by trapezoid at step dt;
// the constant feeding the |t|^{-1} correction of the localization bound.
// Identically zero when phi and V are both multiplication operators.
inline double commutator_l1_bound(const RealField& phi, const PotentialSpec& v, double t_max,
                                  double dt) {
  if (v.kind == PotentialKind::none || v.kind == PotentialKind::static_multiplication)
    return 0.0;  // diagonal commutes with diagonal exactly
  if (!(dt > 0.0) || !(t_max > 0.0))
    throw invalid_argument_error("commutator_l1_bound: need positive horizon and step");
  MatC p = diagonal_matrix(phi.values);
  int nsub = std::max(1, static_cast<int>(std::ceil(t_max / dt - 1e-12)));
  double h = t_max / nsub;
  auto g = [&](double t) {
    std::optional<MatC> vm = detail::potential_matrix(v, t);
    return vm ? operator_norm(MatC(p * *vm - *vm * p)) : 0.0;
  };
  double acc = 0.5 * (g(0.0) + g(t_max));
  for (int k = 1; k < nsub; ++k) acc += g(k * h);
  return acc * h;
}

// Checks the derivative inequality for the smoothed observable along the
// driven evolution: with delta = c - kappa,
//   d/dt U(t)^* A_s(t, chi) U(t)
//     <= -(delta/s) U^* A_s(t, chi') U + sum_{k=2}^n s^{-k} U^* A_s(t, xi') U
//        + C s^{-(n+1)} + C s^{-1} ||[phi, V(t)]||
// as positive semidefiniteness of the defect matrix. One auxiliary cutoff xi
// serves every order k >= 2 (a single dominating function is enough). The
// time derivative is a Richardson-extrapolated central difference with step
// fd_factor * s, cross-checked at twice the step; samples must stay away from
// the kink at t = 0. Reports the smallest C that clears every sample; the
// margins are evaluated at that C. The fit targets the half-tolerance line so
// the binding margin clears -tolerance with rounding headroom.
inline InequalityReport rme_check(const MatC& h0, const PotentialSpec& v,
                                  const AstloFamily& family, const CutoffFunction& xi,
                                  double kappa, int order_n, const std::vector<double>& times,
                                  double dt = 0.0, RmeOptions opt = {}) {
  if (order_n < 1) throw invalid_argument_error("rme_check: order must be >= 1");
  if (!(kappa >= 0.0) || !std::isfinite(kappa))
    throw invalid_argument_error("rme_check: kappa must be finite and nonnegative");
  const double c = family.speed_c;
  if (!(c > kappa))
    throw invalid_argument_error("rme_check: speed must exceed the commutator bound");
  if (times.empty()) throw invalid_argument_error("rme_check: no samples");

  detail::SmoothedStepApplier smooth(family);
  if (h0.rows() != smooth.size())
    throw invalid_argument_error("rme_check: Hamiltonian/observable size mismatch");
  detail::PropagatorFactory prop(h0, v, dt);

  const double s = family.scale_s;
  const double delta = c - kappa;
  const double h_fd = opt.fd_factor * s;
  const CutoffFunction& chi = family.chi;
  auto chi_val = [&](double x) { return chi.value(x); };
  auto chi_der = [&](double x) { return chi.derivative(x, 1); };
  auto xi_der = [&](double x) { return xi.derivative(x, 1); };
  double wsum = 0.0;  // sum_{k=2}^n s^{-k}
  for (int k = 2; k <= order_n; ++k) wsum += std::pow(s, -k);
  MatC phi_m = phi_matrix(family);

  InequalityReport rep;
  rep.name = "differential-monotonicity";
  std::vector<double> floors;   // min eigenvalue of the C-free defect
  std::vector<double> weights;  // coefficient of C at each sample
  double smallest = 0.0;
  for (double t : times) {
    if (!(std::abs(t) > 2.0 * h_fd))
      throw invalid_argument_error("rme_check: sample too close to the kink at t = 0");
    auto conjugated = [&](double tau) {
      return detail::conjugate_by(prop.at(tau), smooth.at(tau, chi_val));
    };
    MatC fd1 = (conjugated(t + h_fd) - conjugated(t - h_fd)) / (2.0 * h_fd);
    MatC fd2 = (conjugated(t + 2.0 * h_fd) - conjugated(t - 2.0 * h_fd)) / (4.0 * h_fd);
    MatC fd = (4.0 * fd1 - fd2) / 3.0;  // h^2 term eliminated
    double fd_spread = operator_norm(MatC(fd1 - fd2));

    MatC u_t = prop.at(t);
    MatC decay = (delta / s) * detail::conjugate_by(u_t, smooth.at(t, chi_der));
    MatC aux = MatC::Zero(h0.rows(), h0.cols());
    if (wsum > 0.0) aux = wsum * detail::conjugate_by(u_t, smooth.at(t, xi_der));

    double g_t = 0.0;
    if (std::optional<MatC> vm = detail::potential_matrix(v, t))
      g_t = operator_norm(MatC(phi_m * *vm - *vm * phi_m));

    MatC defect = -fd - decay + aux;
    double scale = operator_norm(fd) + operator_norm(decay) + operator_norm(aux) + g_t / s;
    if (fd_spread > 1e-3 * (1.0 + scale))
      throw numerical_error("rme_check: finite difference failed its step cross-check at t = " +
                            to_string_shortest(t));
    double tol_t = opt.tol_scale * scale;
    double weight = std::pow(s, -(order_n + 1)) + g_t / s;
    double floor = min_eigenvalue(defect);
    floors.push_back(floor);
    weights.push_back(weight);
    rep.samples.push_back(t);
    rep.tolerance = std::max(rep.tolerance, tol_t);
    smallest = std::max(smallest, (-0.5 * tol_t - floor) / weight);
  }
  rep.smallest_c = std::max(0.0, smallest);
  for (size_t i = 0; i < floors.size(); ++i)
    rep.margins.push_back(floors[i] + rep.smallest_c * weights[i]);
  return finalize_report(rep);
}

// ===== monotone envelope =====

// Expectation-level transport bound along a solved trajectory, with times
// measured from the first sample:
//   <A_s(t, chi)>_t <= <A_s(0, chi)>_0 + s^{-1} <A_s(0, xi)>_0
//                      + C s^{-1} (s^{-n} |t| + c_v) ||psi_0||^2.
// The coefficient on the xi term is exactly one; only the last term carries
// the fitted constant. The family scale is expected to be tied to the
// horizon (s of the order of max |t|).
inline InequalityReport envelope_check(const StateTrajectory& traj, const AstloFamily& family,
                                       const CutoffFunction& xi, int order_n, double c_v = 0.0) {
  if (order_n < 1) throw invalid_argument_error("envelope_check: order must be >= 1");
  if (!(c_v >= 0.0)) throw invalid_argument_error("envelope_check: c_v must be >= 0");
  if (traj.times.empty()) throw invalid_argument_error("envelope_check: empty trajectory");

  detail::SmoothedStepApplier smooth(family);
  const double s = family.scale_s;
  const CutoffFunction& chi = family.chi;
  auto chi_val = [&](double x) { return chi.value(x); };
  auto xi_val = [&](double x) { return xi.value(x); };

  const VecC& psi0 = traj.states.front().amplitudes;
  const double t0 = traj.times.front();
  const double mass0 = psi0.squaredNorm();
  const double base =
      smooth.expectation(psi0, 0.0, chi_val) + smooth.expectation(psi0, 0.0, xi_val) / s;
  const double tol = 1e-8 * (base + mass0);

  InequalityReport rep;
  rep.name = "monotone-envelope";
  rep.tolerance = tol;
  std::vector<double> lhs, weights;
  double smallest = 0.0;
  for (size_t i = 0; i < traj.times.size(); ++i) {
    double tau = traj.times[i] - t0;
    double value = smooth.expectation(traj.states[i].amplitudes, tau, chi_val);
    double weight = (std::pow(s, -order_n) * std::abs(tau) + c_v) / s * mass0;
    lhs.push_back(value);
    weights.push_back(weight);
    rep.samples.push_back(tau);
    // fit against the half-tolerance line: the binding margin keeps headroom
    if (weight > 0.0) smallest = std::max(smallest, (value - base - 0.5 * tol) / weight);
  }
  rep.smallest_c = std::max(0.0, smallest);
  for (size_t i = 0; i < lhs.size(); ++i)
    rep.margins.push_back(base + rep.smallest_c * weights[i] - lhs[i]);
  return finalize_report(rep);
}

// ===== localization bound =====

// Operator-level localization along phi for speeds c above the commutator
// bound kappa:
//   U(t)^* 1_{(c|t|,oo)}(phi) U(t) <= P_0 + C (P_0 + c_v) |t|^{-1} + C |t|^{-n},
// with P_0 = 1_{(0,oo)}(phi). The smallest admissible C solves one
// generalized eigenproblem per sample (the C-weighted side is positive
// definite); margins are evaluated at that C. Reflections (phi -> -phi) and
// level shifts (phi -> phi - b) are obtained by transforming phi before the
// call; pass fixed_c >= 0 to skip the fit and judge such a variant at a
// constant fitted elsewhere (uniformity of C across variants).
inline InequalityReport main_inequality_check(const MatC& h0, const PotentialSpec& v,
                                              const RealField& phi, double speed_c, double kappa,
                                              int order_n, const std::vector<double>& times,
                                              double dt = 0.0, double c_v = 0.0,
                                              double fixed_c = -1.0) {
  if (order_n < 1) throw invalid_argument_error("main_inequality_check: order must be >= 1");
  if (!(kappa >= 0.0)) throw invalid_argument_error("main_inequality_check: kappa must be >= 0");
  if (!(speed_c > kappa))
    throw invalid_argument_error("main_inequality_check: speed must exceed the commutator bound");
  if (!(c_v >= 0.0)) throw invalid_argument_error("main_inequality_check: c_v must be >= 0");
  if (times.empty()) throw invalid_argument_error("main_inequality_check: no samples");
  if (h0.rows() != phi.values.size())
    throw invalid_argument_error("main_inequality_check: size mismatch");

  detail::PropagatorFactory prop(h0, v, dt);
  const Eigen::Index n = h0.rows();
  const MatC p0 = detail::step_projector(phi, 0.0);
  const MatC id = MatC::Identity(n, n);

  InequalityReport rep;
  rep.name = "localization-operator";
  std::vector<MatC> gaps, costs;
  for (double t : times) {
    if (!(std::abs(t) > 0.0))
      throw invalid_argument_error("main_inequality_check: t = 0 carries no content");
    const double at = std::abs(t);
    MatC lhs = detail::conjugate_by(prop.at(t), detail::step_projector(phi, speed_c * at));
    MatC gap = p0 - lhs;                                            // C-free slack
    MatC cost = (p0 + c_v * id) / at + std::pow(at, -order_n) * id;  // C-weighted side
    double tol_t = 1e-8 * (1.0 + (1.0 + c_v) / at + std::pow(at, -order_n));
    if (fixed_c >= 0.0) {
      rep.smallest_c = fixed_c;
    } else {
      // fit against the half-tolerance line: the binding margin keeps headroom
      Eigen::GeneralizedSelfAdjointEigenSolver<MatC> ges(MatC(-gap - 0.5 * tol_t * id), cost);
      if (ges.info() != Eigen::Success)
        throw numerical_error("main_inequality_check: generalized eigensolver failed");
      rep.smallest_c = std::max(rep.smallest_c, std::max(0.0, ges.eigenvalues().maxCoeff()));
    }
    rep.tolerance = std::max(rep.tolerance, tol_t);
    rep.samples.push_back(t);
    gaps.push_back(std::move(gap));
    costs.push_back(std::move(cost));
  }
  for (size_t i = 0; i < gaps.size(); ++i)
    rep.margins.push_back(min_eigenvalue(MatC(gaps[i] + rep.smallest_c * costs[i])));
  return finalize_report(rep);
}

// State-level counterpart over a batch of initial states:
//   ||1_{(c|t|,oo)}(phi) psi_t|| <= C (||P_0 psi_0|| + |t|^{-n} ||psi_0||).
// Reports the smallest C over all (time, state) samples, flattened time-major
// in `samples`; margins are the slack at that C.
inline InequalityReport localization_state_check(const MatC& h0, const PotentialSpec& v,
                                                 const RealField& phi, double speed_c,
                                                 double kappa, int order_n,
                                                 const std::vector<State>& initial_states,
                                                 const std::vector<double>& times,
                                                 double dt = 0.0) {
  if (order_n < 1) throw invalid_argument_error("localization_state_check: order must be >= 1");
  if (!(speed_c > kappa))
    throw invalid_argument_error(
        "localization_state_check: speed must exceed the commutator bound");
  if (times.empty() || initial_states.empty())
    throw invalid_argument_error("localization_state_check: need samples and states");
  if (h0.rows() != phi.values.size())
    throw invalid_argument_error("localization_state_check: size mismatch");
  for (const State& st : initial_states)
    if (st.amplitudes.size() != h0.rows() || st.amplitudes.norm() == 0.0)
      throw invalid_argument_error("localization_state_check: states must be nonzero and sized");

  detail::PropagatorFactory prop(h0, v, dt);
  const MatC p0 = detail::step_projector(phi, 0.0);

  InequalityReport rep;
  rep.name = "localization-states";
  std::vector<double> lhs, rhs;
  for (double t : times) {
    if (!(std::abs(t) > 0.0))
      throw invalid_argument_error("localization_state_check: t = 0 carries no content");
    MatC u = prop.at(t);
    MatC pct = detail::step_projector(phi, speed_c * std::abs(t));
    for (const State& st : initial_states) {
      VecC evolved = u * st.amplitudes;
      lhs.push_back((pct * evolved).norm());
      rhs.push_back((p0 * st.amplitudes).norm() +
                    std::pow(std::abs(t), -order_n) * st.amplitudes.norm());
      rep.samples.push_back(t);
    }
  }
  for (size_t i = 0; i < lhs.size(); ++i)
    rep.smallest_c = std::max(rep.smallest_c, lhs[i] / rhs[i]);
  double rhs_max = *std::max_element(rhs.begin(), rhs.end());
  rep.tolerance = 1e-8 * (1.0 + rep.smallest_c) * rhs_max;
  for (size_t i = 0; i < lhs.size(); ++i)
    rep.margins.push_back(rep.smallest_c * rhs[i] - lhs[i]);
  return finalize_report(rep);
}

// ===== dispersive tails =====

// Mass outside the enlarged region {dist(., X) <= c|t|} at every trajectory
// sample (lattice measure, cell volume included).
inline std::vector<double> tail_mass_series(const StateTrajectory& traj, const Lattice& lat,
                                            const RegionSet& x, double speed_c) {
  if (!(speed_c > 0.0)) throw invalid_argument_error("tail_mass_series: speed must be positive");
  if (static_cast<int>(x.mask.size()) != lat.sites())
    throw invalid_argument_error("tail_mass_series: region/lattice size mismatch");
  RealField dist = distance_function(lat, x);
  const double hd = lat.cell_volume();
  std::vector<double> out;
  out.reserve(traj.times.size());
  for (size_t i = 0; i < traj.times.size(); ++i) {
    const VecC& amp = traj.states[i].amplitudes;
    if (amp.size() != dist.values.size())
      throw invalid_argument_error("tail_mass_series: state/lattice size mismatch");
    const double reach = speed_c * std::abs(traj.times[i]);
    double acc = 0.0;
    for (Eigen::Index k = 0; k < amp.size(); ++k)
      if (dist.values[k] > reach) acc += std::norm(amp[k]);
    out.push_back(acc * hd);
  }
  return out;
}

// Log-log least-squares fit of the outside-the-cone mass against the
// |t|^-order_n reference rate over [window_lo, window_hi]. Pre: the first
// trajectory sample is supported in X. Samples below the round-off floor are
// excluded from the fit; an identically zero series is exact_zero, fewer than
// 8 usable samples inconclusive. fitted_c is the window sup of |t|^n * mass.
inline DecayFit lightcone_decay_fit(const StateTrajectory& traj, const Lattice& lat,
                                    const RegionSet& x, double speed_c, int order_n,
                                    double window_lo, double window_hi) {
  if (order_n < 1) throw invalid_argument_error("lightcone_decay_fit: order must be >= 1");
  if (!(window_lo > 0.0) || !(window_hi > window_lo))
    throw invalid_argument_error("lightcone_decay_fit: window must satisfy 0 < lo < hi");
  if (traj.times.empty()) throw invalid_argument_error("lightcone_decay_fit: empty trajectory");
  const double mass0 = total_mass(lat, traj.states.front());
  const double outside0 = region_mass(lat, region_complement(x), traj.states.front());
  if (outside0 > 1e-12 * mass0)
    throw invalid_argument_error(
        "lightcone_decay_fit: the initial state must be supported in the region");

  std::vector<double> series = tail_mass_series(traj, lat, x, speed_c);
  DecayFit fit;
  fit.window_lo = window_lo;
  fit.window_hi = window_hi;
  fit.moment = order_n;
  for (size_t i = 0; i < series.size(); ++i) {
    double at = std::abs(traj.times[i]);
    if (at < window_lo || at > window_hi) continue;
    fit.times.push_back(at);
    fit.values.push_back(series[i]);
    fit.fitted_c = std::max(fit.fitted_c, std::pow(at, order_n) * series[i]);
  }
  if (fit.times.empty())
    throw invalid_argument_error("lightcone_decay_fit: window contains no samples");

  const double floor = kTailFloor * mass0;
  bool all_zero = true;
  std::vector<double> lx, ly;
  for (size_t i = 0; i < fit.values.size(); ++i) {
    if (fit.values[i] != 0.0) all_zero = false;
    if (fit.values[i] > floor) {
      lx.push_back(std::log(fit.times[i]));
      ly.push_back(std::log(fit.values[i]));
    }
  }
  fit.points_above_floor = static_cast<int>(lx.size());
  if (all_zero) {
    fit.status = FitStatus::exact_zero;
    return fit;
  }
  if (fit.points_above_floor < 8) {
    fit.status = FitStatus::inconclusive;
    return fit;
  }
  detail::LineFit lf = detail::line_fit(lx, ly);
  fit.fitted_exponent = lf.slope;
  fit.residual = lf.rms;
  fit.status = FitStatus::fitted;
  return fit;
}

// Trapezoid of series^p over the sampled times plus a power-law completion
// from the last sample to infinity: values beyond the window are modeled as
// c_fit * t^{-n_decay}, which must be time-integrable at power p. Returns the
// p-th root. Pass c_fit = 0 to skip the completion.
inline double integrated_tail_norm(const std::vector<double>& times,
                                   const std::vector<double>& values, double p_exp,
                                   double c_fit, double n_decay) {
  if (times.size() < 2 || times.size() != values.size())
    throw invalid_argument_error("integrated_tail_norm: need two matched samples at least");
  if (!(p_exp > 0.0)) throw invalid_argument_error("integrated_tail_norm: exponent must be > 0");
  double acc = 0.0;
  for (size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1]))
      throw invalid_argument_error("integrated_tail_norm: times must increase");
    acc += 0.5 * (std::pow(values[i - 1], p_exp) + std::pow(values[i], p_exp)) *
           (times[i] - times[i - 1]);
  }
  if (c_fit > 0.0) {
    const double rate = p_exp * n_decay;
    if (!(rate > 1.0))
      throw divergence_error("integrated_tail_norm: fitted tail is not time-integrable", acc,
                             rate);
    acc += std::pow(c_fit, p_exp) * std::pow(times.back(), 1.0 - rate) / (rate - 1.0);
  }
  return std::pow(acc, 1.0 / p_exp);
}

// Time-integrated tail norm of a trajectory outside the moving cone,
// (integral over t of tail_mass(t)^p)^(1/p), over the positive sampled times
// and completed beyond the last sample by the fitted decay law. Pre: the
// initial state is supported in X and p > 1/order_n (the integrability
// threshold of the reference decay).
inline double strichartz_norm(const StateTrajectory& traj, const Lattice& lat,
                              const RegionSet& x, double speed_c, double p_exp, int order_n) {
  if (order_n < 1) throw invalid_argument_error("strichartz_norm: order must be >= 1");
  if (!(p_exp * order_n > 1.0))
    throw invalid_argument_error(
        "strichartz_norm: exponent must exceed 1/n for a convergent time integral");
  std::vector<double> series = tail_mass_series(traj, lat, x, speed_c);
  std::vector<double> ts, vs;
  for (size_t i = 0; i < series.size(); ++i)
    if (traj.times[i] > 0.0) {
      ts.push_back(traj.times[i]);
      vs.push_back(series[i]);
    }
  if (ts.size() < 2)
    throw invalid_argument_error("strichartz_norm: need two positive-time samples at least");
  DecayFit fit = lightcone_decay_fit(traj, lat, x, speed_c, order_n, ts.front(), ts.back());
  return integrated_tail_norm(ts, vs, p_exp, fit.fitted_c, order_n);
}

// Lattice measure of the high-amplitude set outside the cone at each nonzero
// sample time: points with dist(x, X) > c|t| and |psi_t(x)|^2 >= |t|^{-n}.
// By Chebyshev's inequality each value is bounded by |t|^n times the
// outside-cone mass at the same time.
inline std::vector<std::pair<double, double>> markov_tail_measure(const StateTrajectory& traj,
                                                                  const Lattice& lat,
                                                                  const RegionSet& x,
                                                                  double speed_c, int order_n) {
  if (order_n < 1) throw invalid_argument_error("markov_tail_measure: order must be >= 1");
  if (!(speed_c > 0.0))
    throw invalid_argument_error("markov_tail_measure: speed must be positive");
  if (static_cast<int>(x.mask.size()) != lat.sites())
    throw invalid_argument_error("markov_tail_measure: region/lattice size mismatch");
  RealField dist = distance_function(lat, x);
  const double hd = lat.cell_volume();
  std::vector<std::pair<double, double>> out;
  for (size_t i = 0; i < traj.times.size(); ++i) {
    const double at = std::abs(traj.times[i]);
    if (at == 0.0) continue;
    const double reach = speed_c * at;
    const double level = std::pow(at, -order_n);
    const VecC& amp = traj.states[i].amplitudes;
    int count = 0;
    for (Eigen::Index k = 0; k < amp.size(); ++k)
      if (dist.values[k] > reach && std::norm(amp[k]) >= level) ++count;
    out.emplace_back(traj.times[i], hd * count);
  }
  return out;
}

// ===== traveling profiles =====

// Rigid translation of a sampled state by a whole number of cells along the
// first axis (the displacement is rounded to the lattice); amplitudes pushed
// past the box edge are dropped.
inline State translate_state(const Lattice& lat, const State& profile, double displacement) {
  if (profile.amplitudes.size() != lat.sites())
    throw invalid_argument_error("translate_state: state/lattice size mismatch");
  const int shift = static_cast<int>(std::llround(displacement / lat.spacing));
  const int n = lat.points_per_axis;
  State out;
  out.time = profile.time;
  out.amplitudes = VecC::Zero(lat.sites());
  if (lat.dim == 1) {
    for (int i = 0; i < n; ++i) {
      int j = i - shift;
      if (j >= 0 && j < n) out.amplitudes[i] = profile.amplitudes[j];
    }
  } else {
    for (int a0 = 0; a0 < n; ++a0) {
      int j0 = a0 - shift;
      if (j0 < 0 || j0 >= n) continue;
      for (int a1 = 0; a1 < n; ++a1)
        out.amplitudes[a0 * n + a1] = profile.amplitudes[j0 * n + a1];
    }
  }
  return out;
}

// Consistency verdict for a rigidly traveling profile against the kernel
// speed bound. A profile moving at |beta| beyond the commutator bound kappa
// eventually parks more than half of its mass outside the cone of any slope
// c strictly between kappa and |beta|; translation at |beta| <= kappa never
// does. mass_bound records the margins (half mass minus the outside-cone
// mass); smallest_c is the constant of the |t|^-n allowance the crossing
// would require, which grows with the horizon for an inconsistent profile.
struct SolitonSpeedReport {
  InequalityReport mass_bound;
  double kappa = 0.0;       // commutator bound along dist(., X)
  double test_slope = 0.0;  // cone slope used
  double crossover_time = std::numeric_limits<double>::infinity();
  bool flagged = false;     // profile speed inconsistent with the bound
};

inline SolitonSpeedReport soliton_speed_test(const State& profile, const Lattice& lat,
                                             const RegionSet& x, double beta,
                                             const NonlocalOperator& op, int order_n,
                                             double t_max, int sample_count = 33) {
  if (order_n < 1) throw invalid_argument_error("soliton_speed_test: order must be >= 1");
  if (!(t_max > 0.0)) throw invalid_argument_error("soliton_speed_test: horizon must be positive");
  if (sample_count < 2) throw invalid_argument_error("soliton_speed_test: need two samples");
  if (static_cast<int>(x.mask.size()) != lat.sites() || profile.amplitudes.size() != lat.sites())
    throw invalid_argument_error("soliton_speed_test: size mismatch");
  const double tot = total_mass(lat, profile);
  const double outside = region_mass(lat, region_complement(x), profile);
  if (!(outside < 0.5 * tot))
    throw invalid_argument_error(
        "soliton_speed_test: more than half of the profile mass must start inside the region");

  RealField dist = distance_function(lat, x);
  SolitonSpeedReport rep;
  rep.kappa = schur_kappa(op, dist, 1);
  const double speed = std::abs(beta);
  rep.test_slope = speed > rep.kappa ? 0.5 * (rep.kappa + speed)
                                     : (rep.kappa > 0.0 ? 1.5 * rep.kappa : 1.0);

  rep.mass_bound.name = "soliton-speed-consistency";
  rep.mass_bound.tolerance = 1e-12 * tot;
  const double hd = lat.cell_volume();
  for (int j = 1; j <= sample_count; ++j) {
    const double t = t_max * j / sample_count;
    State moved = translate_state(lat, profile, beta * t);
    const double reach = rep.test_slope * t;
    double tail = 0.0;
    for (Eigen::Index k = 0; k < moved.amplitudes.size(); ++k)
      if (dist.values[k] > reach) tail += std::norm(moved.amplitudes[k]);
    tail *= hd;
    const double margin = 0.5 * tot - tail;
    rep.mass_bound.samples.push_back(t);
    rep.mass_bound.margins.push_back(margin);
    rep.mass_bound.smallest_c =
        std::max(rep.mass_bound.smallest_c, std::max(0.0, -margin) * std::pow(t, order_n));
    if (margin < -rep.mass_bound.tolerance && !(rep.crossover_time < t))
      rep.crossover_time = std::min(rep.crossover_time, t);
  }
  rep.mass_bound = finalize_report(rep.mass_bound);
  rep.flagged = !rep.mass_bound.passed;
  return rep;
}

// Front speed of a solved trajectory: the smallest cone slope in the sweep
// grid (steps of 0.05 * kappa up to 2 * kappa) whose outside-cone mass stays
// on the |t|^-order_n reference decay over the window -- log-log slope at
// most -order_n + 0.3, identically zero, or entirely below the round-off
// floor. Returns infinity when no slope in the grid qualifies.
inline double nls_front_speed(const StateTrajectory& traj, const Lattice& lat,
                              const RegionSet& x, double kappa, int order_n, double window_lo,
                              double window_hi) {
  if (!(kappa > 0.0)) throw invalid_argument_error("nls_front_speed: kappa must be positive");
  for (int k = 1; k <= 40; ++k) {
    const double c = 0.05 * kappa * k;
    DecayFit fit = lightcone_decay_fit(traj, lat, x, c, order_n, window_lo, window_hi);
    bool bounded = fit.status == FitStatus::exact_zero || fit.points_above_floor == 0 ||
                   (fit.status == FitStatus::fitted &&
                    fit.fitted_exponent <= -static_cast<double>(order_n) + 0.3);
    if (bounded) return c;
  }
  return std::numeric_limits<double>::infinity();
}

}  // namespace lclab
