// test_verify.cpp - inequality sweeps, decay fits, and speed consistency.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <random>

#include "lclab/cutoffs.hpp"
#include "lclab/kernels.hpp"
#include "lclab/lattice.hpp"
#include "lclab/opcalc.hpp"
#include "lclab/propagate.hpp"
#include "lclab/verify.hpp"

using namespace lclab;

namespace {

MatC random_hermitian(int n, unsigned seed, double scale) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MatC m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = cplx(u(rng), u(rng));
  return 0.5 * scale * (m + MatC(m.adjoint()));
}

NonlocalOperator power_law_op(int points, double half_width, double a) {
  Lattice lat = build_lattice(1, half_width, points, Boundary::truncated);
  KernelSpec spec;
  spec.family = KernelFamily::power_law;
  spec.dim = 1;
  spec.amplitude = 1.0;
  spec.a = a;
  return assemble_operator(lat, spec);
}

RealField coordinate_field(const Lattice& lat) {
  RealField f;
  f.values.resize(lat.sites());
  for (int i = 0; i < lat.sites(); ++i) f.values[i] = lat.coordinate(i)[0];
  f.description = "x";
  return f;
}

// Gaussian bump restricted to the region (hard mask), unit lattice mass.
State masked_gaussian(const Lattice& lat, const RegionSet& region, double width) {
  State psi = gaussian_state(lat, {0.0, 0.0}, width);
  for (int i = 0; i < lat.sites(); ++i)
    if (!region.contains(i)) psi.amplitudes[i] = 0.0;
  psi.amplitudes /= std::sqrt(total_mass(lat, psi));
  return psi;
}

// Shared free-evolution run on a polynomially decaying kernel: initial state
// supported in a ball, sampled every 0.5 up to t = 12.
struct FreeRun {
  Lattice lat;
  NonlocalOperator op;
  RegionSet region;
  double kappa = 0.0;
  double speed = 0.0;
  State psi0;
  StateTrajectory traj;
};

const FreeRun& free_run() {
  static const FreeRun run = [] {
    FreeRun r{build_lattice(1, 32.0, 128, Boundary::truncated), {}, {}, 0, 0, {}, {}};
    KernelSpec spec;
    spec.family = KernelFamily::power_law;
    spec.dim = 1;
    spec.amplitude = 1.0;
    spec.a = 5.0;  // finite commutator bounds through order 3
    r.op = assemble_operator(r.lat, spec);
    r.region = region_ball(r.lat, {0.0, 0.0}, 4.0);
    r.kappa = schur_kappa(r.op, distance_function(r.lat, r.region), 1);
    r.speed = 1.5 * r.kappa;
    r.psi0 = masked_gaussian(r.lat, r.region, 1.2);
    std::vector<double> times;
    for (int k = 0; k <= 24; ++k) times.push_back(0.5 * k);
    r.traj = evolve_autonomous(r.op, r.psi0, times);
    return r;
  }();
  return run;
}

}  // namespace

// ===== geometric sandwich =====

TEST_CASE("sharp steps sandwich the scaled cutoffs", "[verify]") {
  CutoffFunction chi = make_cutoff(0.5, 2);
  CutoffFunction xi = auxiliary_cutoff(chi, 2);

  SECTION("deterministic field, conical and offset heights") {
    RealField phi;
    phi.values.resize(9);
    phi.values << -2.0, -0.3, 0.0, 1e-9, 0.4, 1.0, 2.3, 5.0, 11.0;
    auto cone = [](double t) { return 1.5 * std::abs(t); };
    InequalityReport rep =
        geometric_sandwich_check(phi, chi, xi, cone, 1.0, {0.5, 1.0, 2.0, 4.0});
    CHECK(rep.passed);
    CHECK(rep.margins.size() == 4);
    for (double m : rep.margins) CHECK(m >= -1e-14);
    // offset height admits the t = 0 sample
    auto offset = [](double t) { return 1.5 * std::abs(t) + 0.3; };
    CHECK(geometric_sandwich_check(phi, chi, xi, offset, 1.0, {0.0, 1.0, 3.0}).passed);
  }

  SECTION("a thousand random fields never violate the sandwich") {
    std::mt19937 rng(2026);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    auto cone = [](double t) { return 2.0 * std::abs(t); };
    for (int draw = 0; draw < 1000; ++draw) {
      RealField phi;
      phi.values.resize(16);
      for (int i = 0; i < 16; ++i) phi.values[i] = u(rng);
      InequalityReport rep = geometric_sandwich_check(phi, chi, xi, cone, 1.2, {0.7, 1.9});
      REQUIRE(rep.passed);
    }
  }

  SECTION("invalid geometry is rejected") {
    RealField phi;
    phi.values = VecR::Zero(4);
    auto flat = [](double) { return 1.0; };
    // height falls under c'|t|
    CHECK_THROWS_AS(
        geometric_sandwich_check(phi, chi, xi, [](double t) { return 0.5 * std::abs(t); }, 1.0,
                                 {2.0}),
        invalid_argument_error);
    CHECK_THROWS_AS(geometric_sandwich_check(phi, chi, make_cutoff(0.25, 2), flat, 1.0, {0.0}),
                    invalid_argument_error);
    CHECK_THROWS_AS(geometric_sandwich_check(phi, chi, xi, flat, 0.0, {0.0}),
                    invalid_argument_error);
  }
}

// ===== differential monotonicity =====

TEST_CASE("differential monotonicity holds trivially without transport", "[verify]") {
  CutoffFunction chi = make_cutoff(0.5, 2);
  CutoffFunction xi = auxiliary_cutoff(chi, 2);

  SECTION("zero Hamiltonian: zero constant") {
    AstloFamily fam;
    RealField phi;
    phi.values = VecR::LinSpaced(8, -3.0, 3.0);
    fam.phi = phi;
    fam.chi = chi;
    fam.speed_c = 1.0;
    fam.scale_s = 4.0;
    InequalityReport rep = rme_check(MatC::Zero(8, 8), PotentialSpec::none_potential(), fam, xi,
                                     0.0, 2, {1.0, 2.5});
    CHECK(rep.passed);
    CHECK(rep.smallest_c == 0.0);
  }

  SECTION("constant field: every commutator term vanishes") {
    AstloFamily fam;
    RealField phi;
    phi.values = VecR::Constant(6, 0.8);
    fam.phi = phi;
    fam.chi = chi;
    fam.speed_c = 0.7;
    fam.scale_s = 3.0;
    MatC h = random_hermitian(6, 11, 0.6);
    InequalityReport rep =
        rme_check(h, PotentialSpec::none_potential(), fam, xi, 0.0, 2, {1.0, 2.0});
    CHECK(rep.passed);
    CHECK(rep.smallest_c == 0.0);
  }

  SECTION("structured rejections") {
    AstloFamily fam;
    RealField phi;
    phi.values = VecR::LinSpaced(4, -1.0, 1.0);
    fam.phi = phi;
    fam.chi = chi;
    fam.speed_c = 1.0;
    fam.scale_s = 2.0;
    MatC h = MatC::Zero(4, 4);
    PotentialSpec none = PotentialSpec::none_potential();
    // speed at or below the commutator bound
    CHECK_THROWS_AS(rme_check(h, none, fam, xi, 1.0, 2, {1.0}), invalid_argument_error);
    // sample on the kink
    CHECK_THROWS_AS(rme_check(h, none, fam, xi, 0.0, 2, {1e-6}), invalid_argument_error);
    CHECK_THROWS_AS(rme_check(h, none, fam, xi, 0.0, 0, {1.0}), invalid_argument_error);
  }
}

TEST_CASE("differential monotonicity fits a stable constant on a lattice kernel", "[verify]") {
  CutoffFunction chi = make_cutoff(0.5, 2);
  CutoffFunction xi = auxiliary_cutoff(chi, 2);

  auto fitted_constant = [&](int points) {
    NonlocalOperator op = power_law_op(points, 16.0, 5.0);
    RealField phi = coordinate_field(op.lattice);
    double kappa = schur_kappa(op, phi, 1);
    AstloFamily fam;
    fam.phi = phi;
    fam.chi = chi;
    fam.speed_c = 1.5 * kappa;
    fam.scale_s = 8.0;
    InequalityReport rep = rme_check(op.complex_matrix(), PotentialSpec::none_potential(), fam,
                                     xi, kappa, 2, {1.0, 2.0});
    REQUIRE(rep.passed);
    REQUIRE(std::isfinite(rep.smallest_c));
    return rep.smallest_c;
  };
  double c64 = fitted_constant(64);
  double c128 = fitted_constant(128);
  CHECK(constants_stable(c64, c128, 0.2));

  SECTION("a sampled non-multiplication potential engages the commutator allowance") {
    const int n = 12;
    NonlocalOperator op = power_law_op(n, 3.0, 5.0);
    RealField phi = coordinate_field(op.lattice);
    double kappa = schur_kappa(op, phi, 1);
    VecC bump = VecC::Zero(n);
    bump[n / 2] = 1.0;
    bump[n / 2 + 1] = cplx(0.5, 0.5);
    MatC proj = bump * bump.adjoint();
    auto sampler = [proj](double t) { return MatC(std::cos(t) * proj); };
    PotentialSpec v = PotentialSpec::driven(sampler, 1.5);
    AstloFamily fam;
    fam.phi = phi;
    fam.chi = chi;
    fam.speed_c = 1.5 * kappa;
    fam.scale_s = 5.0;
    InequalityReport rep = rme_check(op.complex_matrix(), v, fam, xi, kappa, 2, {1.0, 1.5}, 0.02);
    CHECK(rep.passed);
    CHECK(std::isfinite(rep.smallest_c));
  }
}

// ===== monotone envelope =====

TEST_CASE("monotone envelopes hold along solved trajectories", "[verify]") {
  CutoffFunction chi = make_cutoff(0.5, 2);
  CutoffFunction xi = auxiliary_cutoff(chi, 2);
  const FreeRun& run = free_run();
  RealField phi = coordinate_field(run.lat);
  const double t_max = run.traj.times.back();

  SECTION("free lattice evolution, horizon-tied scale") {
    for (double s : {t_max, 2.0 * t_max}) {
      AstloFamily fam;
      fam.phi = phi;
      fam.chi = chi;
      fam.speed_c = run.speed;
      fam.scale_s = s;
      InequalityReport rep = envelope_check(run.traj, fam, xi, 2, 0.0);
      CHECK(rep.passed);
      CHECK(std::isfinite(rep.smallest_c));
    }
  }

  SECTION("stationary states never need the allowance") {
    MatC h = run.op.complex_matrix();
    EigenSystem es = eigensystem(h);
    State psi;
    psi.amplitudes = es.eigenvectors.col(run.lat.sites() / 2);
    StateTrajectory traj = evolve_autonomous(h, psi, {0.0, 2.0, 5.0, 9.0});
    AstloFamily fam;
    fam.phi = phi;
    fam.chi = chi;
    fam.speed_c = run.speed;
    fam.scale_s = 9.0;
    InequalityReport rep = envelope_check(traj, fam, xi, 2, 0.0);
    CHECK(rep.passed);
    CHECK(rep.smallest_c == 0.0);
  }

  SECTION("frozen evolution: expectation can only slide down the cutoff") {
    State psi = masked_gaussian(run.lat, run.region, 1.0);
    StateTrajectory traj = evolve_autonomous(MatC(MatC::Zero(run.lat.sites(), run.lat.sites())),
                                             psi, {0.0, 1.0, 4.0});
    AstloFamily fam;
    fam.phi = phi;
    fam.chi = chi;
    fam.speed_c = 1.0;
    fam.scale_s = 4.0;
    InequalityReport rep = envelope_check(traj, fam, xi, 1, 0.0);
    CHECK(rep.passed);
    CHECK(rep.smallest_c == 0.0);
  }
}

// ===== localization bound =====

TEST_CASE("operator localization clears its fitted constant", "[verify]") {
  const FreeRun& run = free_run();
  MatC h = run.op.complex_matrix();
  RealField phi = coordinate_field(run.lat);
  double kappa = schur_kappa(run.op, phi, 1);
  double c = 1.5 * kappa;
  std::vector<double> times = {1.0, 2.0, 4.0, 8.0};
  PotentialSpec none = PotentialSpec::none_potential();

  InequalityReport fwd = main_inequality_check(h, none, phi, c, kappa, 2, times);
  CHECK(fwd.passed);
  CHECK(std::isfinite(fwd.smallest_c));

  SECTION("free of dynamics the sharp steps are already nested") {
    InequalityReport rep =
        main_inequality_check(MatC(MatC::Zero(h.rows(), h.cols())), none, phi, c, kappa, 2, times);
    CHECK(rep.passed);
    CHECK(rep.smallest_c == 0.0);
  }

  SECTION("reflection through the parity-symmetric model reuses the constant") {
    RealField neg = phi;
    neg.values = -phi.values;
    InequalityReport rev = main_inequality_check(h, none, neg, c, kappa, 2, times);
    CHECK(rev.passed);
    CHECK(std::abs(rev.smallest_c - fwd.smallest_c) <= 1e-8 * (1.0 + fwd.smallest_c));
  }

  SECTION("level shifts stay valid instances") {
    RealField shifted = phi;
    shifted.values = phi.values.array() - 0.7;
    InequalityReport rep = main_inequality_check(h, none, shifted, c, kappa, 2, times);
    CHECK(rep.passed);
    CHECK(std::isfinite(rep.smallest_c));
  }

  SECTION("a static multiplication potential leaves the allowance at zero cost") {
    RealField w;
    w.values = 0.3 * phi.values.array().sin();
    InequalityReport rep =
        main_inequality_check(h, PotentialSpec::static_field(w), phi, c, kappa, 2, times);
    CHECK(rep.passed);
    CHECK(std::isfinite(rep.smallest_c));
  }

  SECTION("conjugation preserves positivity and expectation duality") {
    MatC u = evolution_operator(h, 3.0);
    MatC p0 = apply_function(diagonal_matrix(phi.values), [](double x) { return x > 0.0 ? 1.0 : 0.0; });
    MatC heis = u.adjoint() * p0 * u;
    CHECK(min_eigenvalue(heis) >= -1e-12);
    State psi = masked_gaussian(run.lat, run.region, 1.0);
    VecC evolved = u * psi.amplitudes;
    double schro = (p0 * evolved).squaredNorm();
    double dual = (psi.amplitudes.adjoint() * heis * psi.amplitudes)(0, 0).real();
    CHECK(std::abs(schro - dual) <= 1e-12 * (1.0 + schro));
  }

  SECTION("state-level bound follows from the operator bound") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<State> batch;
    for (int k = 0; k < 4; ++k) {
      State st;
      st.amplitudes.resize(h.rows());
      for (Eigen::Index i = 0; i < h.rows(); ++i) st.amplitudes[i] = cplx(u(rng), u(rng));
      st.amplitudes.normalize();
      batch.push_back(st);
    }
    InequalityReport states =
        localization_state_check(h, none, phi, c, kappa, 2, batch, times);
    CHECK(states.passed);
    CHECK(states.smallest_c > 0.0);
    // operator-level constant dominates the squared state-level bound
    MatC p0 = detail::step_projector(phi, 0.0);
    size_t idx = 0;
    for (double t : times) {
      MatC ut = evolution_operator(h, t);
      MatC pct = detail::step_projector(phi, c * t);
      for (const State& st : batch) {
        double lhs2 = (pct * (ut * st.amplitudes)).squaredNorm();
        double x2 = (p0 * st.amplitudes).squaredNorm();
        double bound = (1.0 + fwd.smallest_c / t) * x2 +
                       fwd.smallest_c * std::pow(t, -2) * st.amplitudes.squaredNorm();
        CHECK(lhs2 <= bound + 1e-10);
        ++idx;
      }
    }
    CHECK(idx == states.margins.size());
  }
}

// ===== dispersive tails =====

TEST_CASE("tail decay fits measure the transport rate", "[verify]") {
  const FreeRun& run = free_run();

  SECTION("polynomial kernel: fitted slope at least as steep as the reference") {
    DecayFit fit = lightcone_decay_fit(run.traj, run.lat, run.region, run.speed, 2, 2.0, 12.0);
    REQUIRE(fit.status == FitStatus::fitted);
    CHECK(fit.points_above_floor >= 8);
    CHECK(fit.fitted_exponent <= -2.0 + 0.3);
    CHECK(fit.residual < 1.0);
    for (size_t i = 0; i < fit.times.size(); ++i)
      CHECK(std::pow(fit.times[i], 2) * fit.values[i] <= fit.fitted_c * (1.0 + 1e-12));
  }

  SECTION("frozen dynamics leave an exactly zero tail") {
    int n = run.lat.sites();
    StateTrajectory still = evolve_autonomous(MatC(MatC::Zero(n, n)), run.psi0,
                                              {0.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0});
    DecayFit fit = lightcone_decay_fit(still, run.lat, run.region, run.speed, 2, 2.0, 12.0);
    CHECK(fit.status == FitStatus::exact_zero);
    CHECK(fit.fitted_c == 0.0);
  }

  SECTION("sub-floor but nonzero tails are inconclusive") {
    int n = run.lat.sites();
    State seeded = run.psi0;
    seeded.amplitudes[n - 1] = 1e-9;  // mass 1e-18: inside the support tolerance
    StateTrajectory still = evolve_autonomous(MatC(MatC::Zero(n, n)), seeded,
                                              {0.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0});
    DecayFit fit = lightcone_decay_fit(still, run.lat, run.region, run.speed, 2, 2.0, 12.0);
    CHECK(fit.status == FitStatus::inconclusive);
    CHECK(fit.points_above_floor == 0);
  }

  SECTION("support and window preconditions") {
    CHECK_THROWS_AS(
        lightcone_decay_fit(run.traj, run.lat, region_ball(run.lat, {20.0, 0.0}, 2.0), run.speed,
                            2, 2.0, 12.0),
        invalid_argument_error);
    CHECK_THROWS_AS(lightcone_decay_fit(run.traj, run.lat, run.region, run.speed, 2, 100.0, 200.0),
                    invalid_argument_error);
  }
}

TEST_CASE("time-integrated tails match the closed-form oracle", "[verify]") {
  // series t^{-n} over [1, 9] completed by its own law: closed form
  // ((p n - 1)^{-1})^{1/p} for the window [1, infinity)
  const int n = 2;
  std::vector<double> ts, vs;
  for (int k = 0; k <= 40000; ++k) {
    double t = 1.0 + 8.0 * k / 40000.0;
    ts.push_back(t);
    vs.push_back(std::pow(t, -n));
  }
  for (double p : {1.0, 0.75, 2.0}) {
    double expect = std::pow(1.0 / (p * n - 1.0), 1.0 / p);
    double got = integrated_tail_norm(ts, vs, p, 1.0, n);
    CHECK(std::abs(got - expect) <= 1e-6 * expect);
  }
  // a non-integrable completion is refused
  CHECK_THROWS_AS(integrated_tail_norm(ts, vs, 0.5, 1.0, n), divergence_error);

  SECTION("trajectory norm is finite and at least the windowed part") {
    const FreeRun& run = free_run();
    double p = 2.0 / n;
    double norm = strichartz_norm(run.traj, run.lat, run.region, run.speed, p, n);
    CHECK(std::isfinite(norm));
    CHECK(norm > 0.0);
    std::vector<double> series = tail_mass_series(run.traj, run.lat, run.region, run.speed);
    std::vector<double> pt, pv;
    for (size_t i = 0; i < series.size(); ++i)
      if (run.traj.times[i] > 0.0) {
        pt.push_back(run.traj.times[i]);
        pv.push_back(series[i]);
      }
    CHECK(norm >= integrated_tail_norm(pt, pv, p, 0.0, n) - 1e-15);
    CHECK_THROWS_AS(strichartz_norm(run.traj, run.lat, run.region, run.speed, 0.4, n),
                    invalid_argument_error);
  }
}

TEST_CASE("level-set measures obey the Chebyshev comparison", "[verify]") {
  const FreeRun& run = free_run();
  const int n = 2;
  std::vector<double> series = tail_mass_series(run.traj, run.lat, run.region, run.speed);
  auto measures = markov_tail_measure(run.traj, run.lat, run.region, run.speed, n);
  // t = 0 dropped
  REQUIRE(measures.size() == run.traj.times.size() - 1);
  size_t j = 0;
  for (size_t i = 0; i < run.traj.times.size(); ++i) {
    if (run.traj.times[i] == 0.0) continue;
    REQUIRE(measures[j].first == run.traj.times[i]);
    double allowance = std::pow(std::abs(run.traj.times[i]), n) * series[i];
    CHECK(measures[j].second <= allowance * (1.0 + 1e-12) + 1e-15);
    ++j;
  }
}

// ===== traveling profiles =====

TEST_CASE("traveling profiles are flagged above the speed bound", "[verify]") {
  Lattice lat = build_lattice(1, 32.0, 256, Boundary::truncated);
  KernelSpec spec;
  spec.family = KernelFamily::power_law;
  spec.dim = 1;
  spec.amplitude = 1.0;
  spec.a = 5.0;
  NonlocalOperator op = assemble_operator(lat, spec);
  RegionSet region = region_ball(lat, {0.0, 0.0}, 3.0);
  State profile = masked_gaussian(lat, region, 1.0);

  SECTION("fast translation crosses the half-mass line") {
    double kappa = schur_kappa(op, distance_function(lat, region), 1);
    SolitonSpeedReport rep = soliton_speed_test(profile, lat, region, 2.0 * kappa, op, 2, 12.0);
    CHECK(rep.flagged);
    CHECK_FALSE(rep.mass_bound.passed);
    CHECK(rep.crossover_time < 12.0);
    // geometric crossover: the profile clears the cone once (beta - c) t
    // outruns the region radius
    CHECK(rep.crossover_time >= 3.0 / (2.0 * kappa - rep.test_slope) * 0.5);
    CHECK(rep.mass_bound.smallest_c > 0.0);
  }

  SECTION("rest and sub-bound translation stay consistent") {
    for (double factor : {0.0, 0.9}) {
      double kappa = schur_kappa(op, distance_function(lat, region), 1);
      SolitonSpeedReport rep =
          soliton_speed_test(profile, lat, region, factor * kappa, op, 2, 12.0);
      CHECK_FALSE(rep.flagged);
      CHECK(rep.mass_bound.passed);
      CHECK(rep.crossover_time == std::numeric_limits<double>::infinity());
    }
  }

  SECTION("profiles spread past the half-mass line are refused") {
    State flat;
    flat.amplitudes = VecC::Constant(lat.sites(), 0.1);
    flat.time = 0.0;
    CHECK_THROWS_AS(soliton_speed_test(flat, lat, region, 0.5, op, 2, 4.0),
                    invalid_argument_error);
  }
}

TEST_CASE("nonlinear front speed stays under the kernel bound", "[verify]") {
  Lattice lat = build_lattice(1, 16.0, 128, Boundary::truncated);
  KernelSpec spec;
  spec.family = KernelFamily::power_law;
  spec.dim = 1;
  spec.amplitude = 1.0;
  spec.a = 5.0;
  NonlocalOperator op = assemble_operator(lat, spec);
  RegionSet region = region_ball(lat, {0.0, 0.0}, 2.0);
  double kappa = schur_kappa(op, distance_function(lat, region), 1);
  State psi0 = masked_gaussian(lat, region, 0.8);
  RealField w;
  w.values = VecR::Zero(lat.sites());
  std::vector<double> samples;
  for (int k = 1; k <= 19; ++k) samples.push_back(0.5 * k);
  StateTrajectory traj = evolve_nls(op, w, [](double rho) { return -0.5 * rho; }, psi0, 10.0,
                                    0.05, samples);
  double front = nls_front_speed(traj, lat, region, kappa, 2, 2.0, 10.0);
  CHECK(front <= 1.1 * kappa);
  CHECK(front >= 0.05 * kappa);
}
