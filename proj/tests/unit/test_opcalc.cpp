// test_opcalc.cpp - functional calculus, commutators, expansion residuals.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "lclab/kernels.hpp"
#include "lclab/opcalc.hpp"

using namespace lclab;

namespace {

// Frozen cutoff spot values (delta = 0.5, m = 6, normalized).
constexpr double kChi01 = 0.00036904803455582779;
constexpr double kChi04 = 0.99963095196544417;

CutoffFunction std_chi() { return make_cutoff(0.5, 2, BumpKind::polynomial, 6); }

MatC random_hermitian(Eigen::Index n, unsigned seed, double scale = 1.0) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MatC m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = cplx(u(rng), u(rng));
  MatC h = 0.5 * scale * (m + MatC(m.adjoint()));
  return h;
}

// Truncated boundary keeps the coordinate Lipschitz-adapted to every bond;
// a periodic wrap bond would park an s-independent entry in the residual.
MatC lattice_hamiltonian(int points, double half_width, double sigma) {
  Lattice lat = build_lattice(1, half_width, points, Boundary::truncated);
  KernelSpec spec;
  spec.family = KernelFamily::gaussian;
  spec.dim = 1;
  spec.amplitude = 1.0;
  spec.sigma = sigma;
  return assemble_operator(lat, spec).complex_matrix();
}

// Brute-force ad_phi^k via explicit matrix products.
MatC brute_ad(const MatC& a, const VecR& phi, int k) {
  MatC d = diagonal_matrix(phi);
  MatC m = a;
  for (int j = 0; j < k; ++j) m = m * d - d * m;
  return m;
}

// Compactly supported plateau f(x) = chi(x) - chi(x - gap), support
// [0, gap + delta], plateau value sup on [delta, gap].
AnalyticExtension table_mountain(const CutoffFunction& chi, double gap, int nu) {
  AnalyticExtension e;
  e.nu = nu;
  e.deriv = [chi, gap](double x, int k) {
    return chi.derivative(x, k) - chi.derivative(x - gap, k);
  };
  e.box_lo = 0.0;
  e.box_hi = gap + chi.delta;
  e.left_value = 0.0;
  e.right_value = 0.0;
  return e;
}

}  // namespace

TEST_CASE("apply_function reproduces a frozen 2x2 spectral computation", "[opcalc]") {
  CutoffFunction chi = std_chi();
  MatC a(2, 2);
  a << 0.25, 0.15, 0.15, 0.25;  // eigenpairs: 0.4 with (1,1)/sqrt2, 0.1 with (1,-1)/sqrt2
  MatC fa = apply_function(a, [&](double x) { return chi.value(x); });
  double diag = 0.5 * (kChi04 + kChi01);
  double off = 0.5 * (kChi04 - kChi01);
  CHECK(std::abs(fa(0, 0) - diag) <= 1e-12);
  CHECK(std::abs(fa(1, 1) - diag) <= 1e-12);
  CHECK(std::abs(fa(0, 1) - off) <= 1e-12);
  CHECK(std::abs(fa(1, 0) - off) <= 1e-12);
  // Identity function returns the operator itself.
  MatC ida = apply_function(a, [](double x) { return x; });
  CHECK(max_abs(MatC(ida - a)) <= 1e-13);
  // Non-Hermitian input is rejected.
  MatC bad(2, 2);
  bad << 0.0, 1.0, 0.0, 0.0;
  CHECK_THROWS_AS(apply_function(bad, [](double x) { return x; }), numerical_error);
}

TEST_CASE("weighted localization diagonals follow the cutoff exactly", "[opcalc]") {
  CutoffFunction chi = std_chi();
  VecR phi(5);
  phi << -1.0, 0.5, 1.2, 2.0, 9.0;
  double c = 0.75, s = 2.0, t = 1.0, b = 0.25;
  VecR d = astlo_diagonal(phi, chi, c, s, t, b);
  for (int i = 0; i < 5; ++i)
    CHECK(d[i] == chi.value((phi[i] - b - c * t) / s));
  // Sites far beyond the front saturate at the sup; far behind give zero.
  CHECK(d[4] == chi.sup_value);
  CHECK(d[0] == 0.0);
  // Time derivative: finite differences in t, both signs of t.
  for (double tt : {1.0, -1.0, 0.3}) {
    VecR dt = astlo_time_derivative(phi, chi, c, s, tt, b);
    double h = 1e-6;
    VecR plus = astlo_diagonal(phi, chi, c, s, tt + h, b);
    VecR minus = astlo_diagonal(phi, chi, c, s, tt - h, b);
    VecR fd = (plus - minus) / (2.0 * h);
    CHECK((dt - fd).cwiseAbs().maxCoeff() <= 1e-6);
    // Outgoing front: observable mass can only leak downward for t > 0.
    if (tt > 0.0) CHECK(dt.maxCoeff() <= 0.0);
  }
  CHECK_THROWS_AS(astlo_diagonal(phi, chi, c, 0.0, 1.0), invalid_argument_error);
}

TEST_CASE("iterated commutators match brute-force matrix products", "[opcalc]") {
  MatC a = random_hermitian(8, 11);
  std::mt19937 rng(13);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  VecR phi(8);
  for (int i = 0; i < 8; ++i) phi[i] = u(rng);
  for (int k = 0; k <= 4; ++k) {
    MatC fast = iterated_commutator(a, phi, k);
    MatC slow = brute_ad(a, phi, k);
    CHECK(max_abs(MatC(fast - slow)) <= 1e-12 * (max_abs(slow) + 1.0));
    // ad^k alternates between Hermitian and anti-Hermitian.
    MatC sym = fast - std::pow(-1.0, k) * fast.adjoint();
    CHECK(max_abs(sym) <= 1e-12 * (max_abs(fast) + 1.0));
  }
  CHECK_THROWS_AS(iterated_commutator(a, VecR::Zero(3), 1), invalid_argument_error);
}

TEST_CASE("rank-one perturbation commutator bound on a hand case", "[opcalc]") {
  MatC v(2, 2);
  v << 1.0, 1.0, 1.0, 1.0;
  VecR phi(2);
  phi << 0.0, 1.0;
  CHECK(potential_commutator_bound(v, phi, 1) == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(potential_commutator_bound(v, phi, 2) == Catch::Approx(1.0).epsilon(1e-12));
  // Diagonal perturbations commute with diagonal localization.
  MatC diag = diagonal_matrix(phi);
  CHECK(potential_commutator_bound(diag, phi, 1) <= 1e-14);
}

TEST_CASE("commutator expansion reconstructs exactly and relates sides", "[opcalc]") {
  MatC h = lattice_hamiltonian(32, 8.0, 1.0);
  Lattice lat = build_lattice(1, 8.0, 32, Boundary::truncated);
  VecR phi(32);
  for (int i = 0; i < 32; ++i) phi[i] = lat.axis_coordinate(i);
  CutoffFunction chi = std_chi();
  double s = 4.0, shift = -2.0;
  for (int order : {1, 2, 3}) {
    CommutatorExpansion right =
        commutator_expansion(h, phi, shift, s, chi, order, ExpansionSide::right);
    CommutatorExpansion left =
        commutator_expansion(h, phi, shift, s, chi, order, ExpansionSide::left);
    // Reconstruction is exact by definition of the residual.
    MatC rec = right.residual;
    for (const MatC& t : right.terms) rec += t;
    CHECK(max_abs(MatC(rec - right.commutator)) <= 1e-14 * (max_abs(right.commutator) + 1.0));
    // For Hermitian A and real f the two residuals are adjoint-negatives.
    MatC rel = left.residual + right.residual.adjoint();
    CHECK(max_abs(rel) <= 1e-13 * (max_abs(right.residual) + 1e-30));
    CHECK(static_cast<int>(right.terms.size()) == order);
  }
  CHECK_THROWS_AS(commutator_expansion(h, phi, 0.0, -1.0, chi, 1, ExpansionSide::right),
                  invalid_argument_error);
  // Order beyond the cutoff smoothness budget is rejected.
  CutoffFunction rough = CutoffFunction::make(0.5, 2, BumpKind::polynomial, 1.0);
  CHECK_THROWS_AS(commutator_expansion(h, phi, 0.0, 4.0, rough, 2, ExpansionSide::right),
                  invalid_argument_error);
}

TEST_CASE("expansion residual obeys its ceiling and decays in s", "[opcalc]") {
  MatC h = lattice_hamiltonian(32, 8.0, 1.0);
  Lattice lat = build_lattice(1, 8.0, 32, Boundary::truncated);
  VecR phi(32);
  for (int i = 0; i < 32; ++i) phi[i] = lat.axis_coordinate(i);
  CutoffFunction chi = std_chi();
  for (int order : {1, 2}) {
    double ceiling = expansion_ceiling(h, phi, chi, order, 1e-6);
    CHECK(ceiling > 0.0);
    // Fit the decay rate where s dominates the coordinate range; the rate
    // must reach the order+1 power (the flat cutoff core makes it steeper).
    std::vector<double> ls, lr;
    for (double s : {8.0, 16.0, 32.0, 64.0}) {
      CommutatorExpansion ex =
          commutator_expansion(h, phi, 0.0, s, chi, order, ExpansionSide::right);
      double bound = std::pow(s, -(order + 1.0)) * ceiling;
      CHECK(ex.residual_norm <= bound * (1.0 + 1e-2) + 1e-15);
      ls.push_back(std::log(s));
      lr.push_back(std::log(ex.residual_norm));
    }
    double n = static_cast<double>(ls.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < ls.size(); ++i) {
      sx += ls[i];
      sy += lr[i];
      sxx += ls[i] * ls[i];
      sxy += ls[i] * lr[i];
    }
    double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    CHECK(slope <= -(order + 1.0) + 0.3);
  }
}

TEST_CASE("subtraction residual matches the resolvent quadrature", "[opcalc]") {
  MatC h = lattice_hamiltonian(8, 2.0, 0.8);
  Lattice lat = build_lattice(1, 2.0, 8, Boundary::truncated);
  VecR phi(8);
  for (int i = 0; i < 8; ++i) phi[i] = lat.axis_coordinate(i);
  CutoffFunction chi = std_chi();
  double s = 3.0, shift = -1.0;
  for (int order : {1, 2}) {
    for (ExpansionSide side : {ExpansionSide::right, ExpansionSide::left}) {
      CommutatorExpansion ex = commutator_expansion(h, phi, shift, s, chi, order, side);
      MatC quad = remainder_quadrature(h, phi, shift, s, chi, order, side);
      double scale = operator_norm(ex.residual) + 1e-30;
      CHECK(operator_norm(MatC(quad - ex.residual)) / scale <= 2e-3);
    }
  }
}

TEST_CASE("resolvent quadrature applies functions without a spectral solve", "[opcalc]") {
  CutoffFunction chi = std_chi();
  AnalyticExtension f = table_mountain(chi, 0.6, 4);
  MatC a = random_hermitian(24, 29, 0.6);
  auto fpt = [&](double x) { return f.deriv(x, 0); };
  MatC exact = apply_function(a, fpt);
  HsOptions opt;
  opt.x_panels = 24;
  opt.y_splits = 16;
  HsResult hs = hs_apply(a, f, opt);
  double scale = operator_norm(exact) + 1e-30;
  double err = operator_norm(MatC(hs.value - exact)) / scale;
  CHECK(err <= 1e-5);
  CHECK(hs.error_estimate / scale >= err / 50.0);  // estimate not wildly optimistic
  CHECK(hs.nodes > 0);
  // First derivative through the same grid.
  opt.with_derivative = true;
  HsResult hsd = hs_apply(a, f, opt);
  MatC dexact = apply_function(a, [&](double x) { return f.deriv(x, 1); });
  CHECK(operator_norm(MatC(hsd.derivative - dexact)) / (operator_norm(dexact) + 1e-30) <=
        1e-4);
  // Extensions with a nonzero constant tail are rejected structurally.
  AnalyticExtension bad = AnalyticExtension::from_cutoff(chi, 3);
  CHECK_THROWS_AS(hs_apply(a, bad), invalid_argument_error);
}

namespace {

MatC random_unitary(Eigen::Index n, unsigned seed) {
  Eigen::HouseholderQR<MatC> qr(random_hermitian(n, seed));
  return qr.householderQ();
}

// Shift the argument of an extension: g(x) = f(x + x0).
AnalyticExtension shift_extension(const AnalyticExtension& base, double x0) {
  AnalyticExtension e = base;
  e.deriv = [base, x0](double x, int k) { return base.deriv(x + x0, k); };
  e.box_lo = base.box_lo - x0;
  e.box_hi = base.box_hi - x0;
  return e;
}

}  // namespace

TEST_CASE("observable families realize the cutoff through either backend", "[opcalc]") {
  CutoffFunction chi = std_chi();
  const double delta = chi.delta, s = 3.0, c = 0.75, t = 2.0;

  // Three sites pinned below, inside, and above the moving window.
  VecR phi(3);
  phi << 0.0, delta * s / 2.0 + c * t, 2.0 * delta * s + c * t;
  AstloFamily fam{RealField{phi, "three-site"}, chi, c, s};
  HermitianOperator a = astlo(fam, t);
  CHECK(std::abs(a.matrix(0, 0)) == 0.0);
  CHECK(std::abs(a.matrix(1, 1) - chi.value(delta / 2.0)) <= 1e-15);
  CHECK(std::abs(a.matrix(2, 2) - 1.0) <= 1e-15);
  CHECK(std::abs(a.matrix(0, 1)) == 0.0);

  // Entries cannot increase once the window has moved further out.
  HermitianOperator later = astlo(fam, 3.0);
  for (int i = 0; i < 3; ++i)
    CHECK(later.matrix(i, i).real() <= a.matrix(i, i).real() + 1e-15);

  // Zero field at t = 0 sits at the cutoff root.
  AstloFamily zero{RealField{VecR::Zero(4), "flat"}, chi, c, s};
  CHECK(max_abs(astlo(zero, 0.0).matrix) == 0.0);

  // Dense backend: conjugation covariance against the diagonal route.
  MatC q = random_unitary(6, 401);
  VecR vals(6);
  vals << -1.0, 0.2, 0.9, 1.4, 2.6, 4.0;
  MatC phim = q * vals.asDiagonal() * q.adjoint();
  AstloFamily dense{hermitian_operator(phim, "conjugated"), chi, c, s};
  MatC expect =
      q * diagonal_matrix(astlo_diagonal(vals, chi, c, s, t)) * q.adjoint();
  MatC got = astlo(dense, t).matrix;
  CHECK(max_abs(MatC(got - expect)) <= 1e-12);

  // Positive semidefinite with norm <= sup chi.
  Eigen::SelfAdjointEigenSolver<MatC> es(got);
  CHECK(es.eigenvalues().minCoeff() >= -1e-13);
  CHECK(es.eigenvalues().maxCoeff() <= chi.sup_value + 1e-13);

  AstloFamily badscale{RealField{phi, "x"}, chi, c, -1.0};
  CHECK_THROWS_AS(astlo(badscale, 0.0), invalid_argument_error);
  CHECK_THROWS_AS(time_derivative_astlo(badscale, 1.0), invalid_argument_error);
  MatC skew = MatC::Zero(2, 2);
  skew(0, 1) = cplx(0.0, 1.0);
  CHECK_THROWS_AS(hermitian_operator(skew, "skew"), numerical_error);
}

TEST_CASE("family time derivative matches finite differences", "[opcalc]") {
  CutoffFunction chi = std_chi();
  Lattice lat = build_lattice(1, 4.0, 16, Boundary::truncated);
  VecR phi(16);
  for (int i = 0; i < 16; ++i) phi[i] = std::abs(lat.axis_coordinate(i));
  const double c = 0.6, s = 2.0, t = 1.0, h = 1e-4;

  AstloFamily fam{RealField{phi, "|x|"}, chi, c, s};
  MatC deriv = time_derivative_astlo(fam, t).matrix;
  MatC fd = (astlo(fam, t + h).matrix - astlo(fam, t - h).matrix) / (2.0 * h);
  CHECK(max_abs(MatC(deriv - fd)) <= 1e-6);

  // Dense backend, same oracle.
  MatC q = random_unitary(6, 402);
  VecR vals = phi.head(6);
  AstloFamily dense{hermitian_operator(q * vals.asDiagonal() * q.adjoint(), "phi"), chi, c, s};
  MatC dderiv = time_derivative_astlo(dense, t).matrix;
  MatC dfd = (astlo(dense, t + h).matrix - astlo(dense, t - h).matrix) / (2.0 * h);
  CHECK(max_abs(MatC(dderiv - dfd)) <= 1e-6);

  // Functional-calculus norm ceiling (c/s) sup chi'.
  double sup_slope = 0.0;
  for (int i = 0; i <= 2000; ++i)
    sup_slope = std::max(sup_slope, chi.derivative(chi.delta * i / 2000.0, 1));
  CHECK(operator_norm(deriv) <= (c / s) * sup_slope + 1e-12);

  AstloFamily still{RealField{phi, "|x|"}, chi, 0.0, s};
  CHECK(max_abs(time_derivative_astlo(still, t).matrix) == 0.0);
}

TEST_CASE("kernel commutators agree with the assembled-operator route", "[opcalc]") {
  // Hand case: 8 sites, compact kernel, coordinate field.
  Lattice lat = build_lattice(1, 2.0, 8, Boundary::truncated);
  KernelSpec spec;
  spec.family = KernelFamily::compact;
  spec.dim = 1;
  spec.amplitude = 2.0;
  spec.range = 1.1;
  NonlocalOperator op = assemble_operator(lat, spec);
  VecR coord(8);
  for (int i = 0; i < 8; ++i) coord[i] = lat.axis_coordinate(i);
  MatR k1 = kernel_commutator(op, RealField{coord, "x"}, 1);
  for (int x = 0; x < 8; ++x)
    for (int y = 0; y < 8; ++y) {
      double gap = coord[y] - coord[x];
      double want = (x != y && std::abs(gap) <= spec.range)
                        ? -gap * spec.amplitude * lat.spacing
                        : 0.0;
      CHECK(std::abs(k1(x, y) - want) <= 1e-15);
    }

  // Constant field kills every order.
  CHECK(max_abs(MatC(kernel_commutator(op, RealField{VecR::Constant(8, 3.7), "c"}, 2)
                         .cast<cplx>())) == 0.0);

  // Equivalence with the matrix recursion on assembled operators: the
  // diagonal mass term must drop out of the commutator exactly.
  std::mt19937 rng(777);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (KernelFamily family : {KernelFamily::gaussian, KernelFamily::power_law}) {
    for (Boundary b : {Boundary::truncated, Boundary::periodic}) {
      Lattice l2 = build_lattice(1, 4.0, 24, b);
      KernelSpec s2;
      s2.family = family;
      s2.dim = 1;
      s2.a = 4.0;
      s2.sigma = 1.0;
      NonlocalOperator op2 = assemble_operator(l2, s2);
      VecR f(24);
      f[0] = 0.0;
      for (int i = 1; i < 24; ++i) f[i] = f[i - 1] + u(rng) * l2.spacing;
      for (int k : {1, 2, 3}) {
        MatR via_kernel = kernel_commutator(op2, RealField{f, "random"}, k);
        MatR via_matrix = iterated_commutator(op2.matrix, f, k);
        double scale = via_matrix.cwiseAbs().maxCoeff() + 1e-30;
        CHECK((via_kernel - via_matrix).norm() / (via_matrix.norm() + 1e-30) <= 1e-12);
        CHECK(scale > 0.0);
      }
    }
  }

  // Spectral norm sits under the Schur bound for random Lipschitz fields.
  Lattice l3 = build_lattice(1, 4.0, 24, Boundary::truncated);
  KernelSpec s3;
  s3.family = KernelFamily::gaussian;
  s3.dim = 1;
  NonlocalOperator op3 = assemble_operator(l3, s3);
  for (int trial = 0; trial < 20; ++trial) {
    VecR f(24);
    f[0] = u(rng);
    for (int i = 1; i < 24; ++i) f[i] = f[i - 1] + u(rng) * l3.spacing;
    RealField field{f, "trial"};
    for (int k : {1, 2}) {
      double norm = operator_norm(MatC(kernel_commutator(op3, field, k).cast<cplx>()));
      CHECK(norm <= schur_kappa(op3, field, k) * (1.0 + 1e-12) + 1e-14);
    }
  }

  CHECK_THROWS_AS(kernel_commutator(op, RealField{coord, "x"}, 0), invalid_argument_error);
  CHECK_THROWS_AS(kernel_commutator(op, RealField{VecR::Zero(5), "short"}, 1),
                  invalid_argument_error);
}

TEST_CASE("dense-argument commutators follow the matrix recursion", "[opcalc]") {
  MatC a = random_hermitian(7, 403);
  MatC phim = random_hermitian(7, 404);
  MatC p2 = phim * phim;
  MatC want = a * p2 - 2.0 * (phim * a * phim) + p2 * a;
  CHECK(max_abs(MatC(iterated_commutator(a, phim, 2) - want)) <= 1e-12 * max_abs(want));

  // Dense route with a diagonal argument reduces to the entrywise fast path.
  VecR d(7);
  d << 0.3, -1.0, 2.0, 0.0, 4.5, -2.2, 1.1;
  CHECK(max_abs(MatC(iterated_commutator(a, MatC(diagonal_matrix(d)), 3) -
                     iterated_commutator(a, d, 3))) <= 1e-12);

  CHECK_THROWS_AS(iterated_commutator(a, MatC(MatC::Zero(4, 4)), 1),
                  invalid_argument_error);
}

TEST_CASE("expansion through the family interface matches the direct route", "[opcalc]") {
  MatC h = lattice_hamiltonian(16, 4.0, 1.0);
  Lattice lat = build_lattice(1, 4.0, 16, Boundary::truncated);
  VecR phi(16);
  for (int i = 0; i < 16; ++i) phi[i] = lat.axis_coordinate(i);
  CutoffFunction chi = std_chi();
  const double c = 0.5, s = 4.0, t = 2.0;

  // Lattice field: same code path as the direct call, bit for bit.
  AstloFamily fam{RealField{phi, "x"}, chi, c, s};
  CommutatorExpansion via_family = commutator_expansion(h, fam, t, 2, ExpansionSide::right);
  CommutatorExpansion direct =
      commutator_expansion(h, phi, c * t, s, chi, 2, ExpansionSide::right);
  CHECK(max_abs(MatC(via_family.residual - direct.residual)) == 0.0);
  CHECK(via_family.shift == direct.shift);

  // Dense phi that is secretly diagonal: spectral route meets the exact one.
  AstloFamily densediag{hermitian_operator(diagonal_matrix(phi), "diag"), chi, c, s};
  CommutatorExpansion spectral =
      commutator_expansion(h, densediag, t, 2, ExpansionSide::right);
  double scale = max_abs(direct.commutator) + 1e-30;
  CHECK(max_abs(MatC(spectral.commutator - direct.commutator)) / scale <= 1e-12);
  CHECK(max_abs(MatC(spectral.residual - direct.residual)) / scale <= 1e-12);

  // Genuinely dense phi: reconstruction identity and the adjoint relation
  // between sides survive the spectral backend.
  MatC phim = random_hermitian(16, 405, 2.0);
  AstloFamily dense{hermitian_operator(phim, "dense"), chi, c, s};
  for (int order : {1, 2}) {
    CommutatorExpansion right = commutator_expansion(h, dense, t, order, ExpansionSide::right);
    CommutatorExpansion left = commutator_expansion(h, dense, t, order, ExpansionSide::left);
    MatC rec = right.residual;
    for (const MatC& term : right.terms) rec += term;
    CHECK(max_abs(MatC(rec - right.commutator)) <=
          1e-10 * (max_abs(right.commutator) + 1.0));
    CHECK(max_abs(MatC(left.residual + right.residual.adjoint())) <=
          1e-12 * (max_abs(right.residual) + 1e-30));
    CHECK(static_cast<int>(right.terms.size()) == order);
  }

  // Commuting pair: every term and the residual vanish.
  MatC hdiag = diagonal_matrix(VecR::LinSpaced(16, -1.0, 1.0));
  CommutatorExpansion flat = commutator_expansion(hdiag, densediag, t, 2, ExpansionSide::right);
  CHECK(flat.residual_norm <= 1e-13);
  for (double tn : flat.term_norms) CHECK(tn <= 1e-13);
}

TEST_CASE("perturbation commutator pairs stay on the predicted scale", "[opcalc]") {
  CutoffFunction chi = std_chi();
  Lattice lat = build_lattice(1, 8.0, 32, Boundary::truncated);
  VecR phi(32);
  for (int i = 0; i < 32; ++i) phi[i] = std::abs(lat.axis_coordinate(i));
  RealField field{phi, "|x|"};

  // Multiplication operators commute with the diagonal observable.
  AstloFamily fam{field, chi, 0.5, 4.0};
  MatC vdiag = diagonal_matrix(VecR::LinSpaced(32, 0.0, 2.0));
  auto [m0, g0] = potential_commutator_bound(vdiag, fam, 1.0);
  CHECK(m0 == 0.0);
  CHECK(g0 == 0.0);
  auto [mi, gi] = potential_commutator_bound(MatC(MatC::Identity(32, 32)), fam, 1.0);
  CHECK(mi <= 1e-14);
  CHECK(gi <= 1e-14);

  // Rank-one projector onto a localized vector: the measured commutator
  // tracks s^{-1}||[phi,V]|| with a bounded ratio across scales.
  VecC loc = VecC::Zero(32);
  for (int i = 0; i < 32; ++i)
    loc[i] = std::exp(-std::pow(lat.axis_coordinate(i) - 1.0, 2));
  loc /= loc.norm();
  MatC proj = loc * loc.adjoint();
  double worst = 0.0;
  for (double s : {4.0, 16.0, 64.0, 256.0, 1024.0}) {
    AstloFamily f2{field, chi, 0.5, s};
    auto [measured, generator] = potential_commutator_bound(proj, f2, 1.0);
    CHECK(measured > 0.0);
    CHECK(generator > 0.0);
    worst = std::max(worst, measured / generator);
  }
  CHECK(worst <= 5.0);
}

TEST_CASE("resolvent quadrature reproduces Taylor coefficients", "[opcalc]") {
  CutoffFunction chi = std_chi();
  AnalyticExtension f = table_mountain(chi, 0.6, 4);
  HsOptions opt{24, 16, false, false};

  // Controlled spectrum inside the support box.
  MatC q = random_unitary(8, 406);
  VecR lam(8);
  lam << 0.05, 0.18, 0.31, 0.44, 0.57, 0.7, 0.88, 1.02;
  MatC a = q * lam.asDiagonal() * q.adjoint();
  a = 0.5 * (a + MatC(a.adjoint()));
  double factorial = 1.0;
  for (int p = 0; p <= 2; ++p) {
    if (p > 0) factorial *= p;
    VecR target(8);
    for (int i = 0; i < 8; ++i) target[i] = f.deriv(lam[i], p) / factorial;
    MatC exact = q * target.asDiagonal() * q.adjoint();
    MatC got = hs_apply(a, f, p, opt).value;
    CHECK(operator_norm(MatC(got - exact)) / (operator_norm(exact) + 1e-30) <= 1e-6);
  }

  // Zero operator: the quadrature must land on the scalar Taylor coefficient.
  AnalyticExtension centered = shift_extension(f, 0.25);
  HsOptions fine{32, 20, false, false};
  MatC zero = MatC::Zero(3, 3);
  factorial = 1.0;
  for (int p = 0; p <= 2; ++p) {
    if (p > 0) factorial *= p;
    double coeff = f.deriv(0.25, p) / factorial;
    MatC got = hs_apply(zero, centered, p, fine).value;
    CHECK(max_abs(MatC(got - coeff * MatC::Identity(3, 3))) <= 1e-6 * (std::abs(coeff) + 1.0));
  }

  CHECK_THROWS_AS(hs_apply(zero, centered, f.nu + 1, opt), invalid_argument_error);
  CHECK_THROWS_AS(hs_apply(zero, centered, -1, opt), invalid_argument_error);
}
