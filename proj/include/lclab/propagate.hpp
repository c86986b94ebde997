// propagate.hpp - unitary time evolution and Heisenberg-picture expectations.
//
// Three propagators share one trajectory type: a spectral one-shot for
// autonomous Hamiltonians, second-order midpoint exponential stepping for
// time-dependent ones (each step is exactly unitary because the sampled
// midpoint Hamiltonian is exponentiated spectrally), and Strang splitting for
// the diagonal-nonlinearity flow. States are recorded at requested sample
// times only; integration substeps land on them exactly.
#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "kernels.hpp"
#include "lattice.hpp"
#include "lclab/opcalc.hpp"

namespace lclab {

// ===== potentials =====

enum class PotentialKind { none, static_multiplication, time_dependent, nls };

// V(t) in H(t) = H0 + V(t). `bound` is sup_t ||V(t)||: measured for the
// static kinds, declared by the caller for sampled ones.
struct PotentialSpec {
  PotentialKind kind = PotentialKind::none;
  RealField field;                            // static W, also the linear part of nls
  std::function<MatC(double)> sampler;        // time_dependent: t -> Hermitian matrix
  std::function<double(double)> nonlinearity; // nls: f(rho)
  double bound = 0.0;

  static PotentialSpec none_potential() { return {}; }

  static PotentialSpec static_field(RealField w) {
    PotentialSpec v;
    v.kind = PotentialKind::static_multiplication;
    v.bound = w.values.size() ? w.values.cwiseAbs().maxCoeff() : 0.0;
    v.field = std::move(w);
    return v;
  }

  static PotentialSpec driven(std::function<MatC(double)> sampler, double bound) {
    if (!(bound >= 0.0) || !std::isfinite(bound))
      throw invalid_argument_error("PotentialSpec: declared bound must be finite");
    PotentialSpec v;
    v.kind = PotentialKind::time_dependent;
    v.sampler = std::move(sampler);
    v.bound = bound;
    return v;
  }

  static PotentialSpec nls_spec(RealField w, std::function<double(double)> f,
                                double bound) {
    PotentialSpec v;
    v.kind = PotentialKind::nls;
    v.field = std::move(w);
    v.nonlinearity = std::move(f);
    v.bound = bound;
    return v;
  }
};

// ===== trajectories =====

enum class PropagatorMethod { eigendecomposition, midpoint_exponential, strang_splitting };

inline std::string method_name(PropagatorMethod m) {
  switch (m) {
    case PropagatorMethod::eigendecomposition: return "eigendecomposition";
    case PropagatorMethod::midpoint_exponential: return "midpoint_exponential";
    case PropagatorMethod::strang_splitting: return "strang_splitting";
  }
  return "unknown";
}

struct StateTrajectory {
  std::vector<double> times;   // strictly increasing
  std::vector<State> states;   // one per time
  std::vector<double> norms;   // Euclidean amplitude norm per time
  PropagatorMethod method = PropagatorMethod::eigendecomposition;
  double dt = 0.0;  // step used (0 for the spectral one-shot)

  const State& back() const { return states.back(); }
};

// Conservative step: 0.1 / (row-sum norm bound), capped at 1e-2.
inline double default_time_step(const MatC& h0) {
  double rowsum = 0.0;
  for (Eigen::Index i = 0; i < h0.rows(); ++i)
    rowsum = std::max(rowsum, h0.row(i).cwiseAbs().sum());
  if (rowsum <= 0.0) return 1e-2;
  return std::min(1e-2, 0.1 / rowsum);
}

inline double default_time_step(const NonlocalOperator& op) {
  return default_time_step(op.complex_matrix());
}

namespace detail {

inline void record(StateTrajectory& traj, double t, const VecC& amp) {
  traj.times.push_back(t);
  traj.states.push_back(State{amp, t});
  traj.norms.push_back(amp.norm());
}

// Record times t0 < ... < t_final with every requested sample included.
inline std::vector<double> record_grid(double t0, double t_final,
                                       const std::vector<double>& samples) {
  if (!(t_final >= t0))
    throw invalid_argument_error("propagate: t_final must be >= the state's time");
  std::vector<double> grid;
  grid.push_back(t0);
  for (double s : samples) {
    if (s < t0 || s > t_final)
      throw invalid_argument_error("propagate: sample time outside [t0, t_final]");
    grid.push_back(s);
  }
  grid.push_back(t_final);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

// exp(-i dt H) from a precomputed eigensystem.
inline MatC spectral_step(const EigenSystem& es, double dt) {
  VecC phase(es.eigenvalues.size());
  for (Eigen::Index i = 0; i < es.eigenvalues.size(); ++i)
    phase[i] = std::exp(cplx(0.0, -dt * es.eigenvalues[i]));
  return es.eigenvectors * phase.asDiagonal() * es.eigenvectors.adjoint();
}

}  // namespace detail

// ===== autonomous evolution =====

// psi_t = exp(-i (t - t0) H0) psi0 at each requested time, one
// eigendecomposition reused across all of them.
inline StateTrajectory evolve_autonomous(const MatC& h0, const State& psi0,
                                         const std::vector<double>& times) {
  if (times.empty()) throw invalid_argument_error("evolve_autonomous: no times");
  for (size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1]))
      throw invalid_argument_error("evolve_autonomous: times must be strictly increasing");
  if (h0.rows() != psi0.amplitudes.size())
    throw invalid_argument_error("evolve_autonomous: state/operator size mismatch");
  EigenSystem es = eigensystem(h0);
  VecC coeff = es.eigenvectors.adjoint() * psi0.amplitudes;
  StateTrajectory traj;
  traj.method = PropagatorMethod::eigendecomposition;
  for (double t : times) {
    VecC scaled(coeff.size());
    for (Eigen::Index i = 0; i < coeff.size(); ++i)
      scaled[i] = coeff[i] * std::exp(cplx(0.0, -(t - psi0.time) * es.eigenvalues[i]));
    detail::record(traj, t, VecC(es.eigenvectors * scaled));
  }
  return traj;
}

inline StateTrajectory evolve_autonomous(const NonlocalOperator& op, const State& psi0,
                                         const std::vector<double>& times) {
  return evolve_autonomous(op.complex_matrix(), psi0, times);
}

// ===== time-dependent evolution =====

// Midpoint exponential stepping psi_{t+dt} = exp(-i dt H(t + dt/2)) psi_t;
// second order in dt, exactly unitary per step. A static potential is folded
// into one eigendecomposition up front.
inline StateTrajectory evolve_nonautonomous(const MatC& h0, const PotentialSpec& v,
                                            const State& psi0, double t_final, double dt,
                                            const std::vector<double>& samples = {}) {
  if (!(dt > 0.0)) throw invalid_argument_error("evolve_nonautonomous: dt must be > 0");
  if (v.kind != PotentialKind::static_multiplication &&
      v.kind != PotentialKind::time_dependent)
    throw invalid_argument_error(
        "evolve_nonautonomous: potential must be static_multiplication or time_dependent");
  const Eigen::Index n = h0.rows();
  if (n != psi0.amplitudes.size())
    throw invalid_argument_error("evolve_nonautonomous: state/operator size mismatch");
  require_hermitian(h0, 1e-12, "evolve_nonautonomous");

  bool is_static = v.kind == PotentialKind::static_multiplication;
  EigenSystem static_es;
  if (is_static) {
    if (v.field.values.size() != n)
      throw invalid_argument_error("evolve_nonautonomous: potential field size mismatch");
    MatC h = h0;
    h.diagonal() += v.field.values.cast<cplx>();
    static_es = eigensystem(h);
  }

  std::vector<double> grid = detail::record_grid(psi0.time, t_final, samples);
  StateTrajectory traj;
  traj.method = PropagatorMethod::midpoint_exponential;
  traj.dt = dt;
  VecC amp = psi0.amplitudes;
  detail::record(traj, grid[0], amp);
  std::map<double, MatC> static_steps;  // distinct substep lengths are few
  for (size_t g = 1; g < grid.size(); ++g) {
    double seg = grid[g] - grid[g - 1];
    int nsub = std::max(1, static_cast<int>(std::ceil(seg / dt - 1e-12)));
    double h = seg / nsub;
    if (is_static) {
      auto it = static_steps.find(h);
      if (it == static_steps.end())
        it = static_steps.emplace(h, detail::spectral_step(static_es, h)).first;
      for (int k = 0; k < nsub; ++k) amp = it->second * amp;
    } else {
      for (int k = 0; k < nsub; ++k) {
        double tm = grid[g - 1] + (k + 0.5) * h;
        MatC hm = h0 + v.sampler(tm);
        require_hermitian(hm, 1e-10, "evolve_nonautonomous: sampled H(t)");
        amp = detail::spectral_step(eigensystem(hm), h) * amp;
      }
    }
    detail::record(traj, grid[g], amp);
  }
  return traj;
}

inline StateTrajectory evolve_nonautonomous(const NonlocalOperator& op, const PotentialSpec& v,
                                            const State& psi0, double t_final, double dt,
                                            const std::vector<double>& samples = {}) {
  return evolve_nonautonomous(op.complex_matrix(), v, psi0, t_final, dt, samples);
}

// ===== nonlinear evolution =====

// Strang splitting for i d/dt psi = H0 psi + W psi + f(|psi|^2) psi: half-step
// of the diagonal phase, full kinetic step (cached spectrally per distinct
// substep length), half-step of the phase. Mass-conserving by construction.
inline StateTrajectory evolve_nls(const MatC& h0, const RealField& w,
                                  const std::function<double(double)>& f, const State& psi0,
                                  double t_final, double dt,
                                  const std::vector<double>& samples = {}) {
  if (!(dt > 0.0)) throw invalid_argument_error("evolve_nls: dt must be > 0");
  if (!f) throw invalid_argument_error("evolve_nls: nonlinearity required");
  const Eigen::Index n = h0.rows();
  if (n != psi0.amplitudes.size() || w.values.size() != n)
    throw invalid_argument_error("evolve_nls: size mismatch");
  require_hermitian(h0, 1e-12, "evolve_nls");
  EigenSystem es = eigensystem(h0);

  auto half_phase = [&](VecC& amp, double h) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double rho = std::norm(amp[i]);
      amp[i] *= std::exp(cplx(0.0, -0.5 * h * (w.values[i] + f(rho))));
    }
  };

  std::vector<double> grid = detail::record_grid(psi0.time, t_final, samples);
  StateTrajectory traj;
  traj.method = PropagatorMethod::strang_splitting;
  traj.dt = dt;
  VecC amp = psi0.amplitudes;
  detail::record(traj, grid[0], amp);
  std::map<double, MatC> kinetic;
  for (size_t g = 1; g < grid.size(); ++g) {
    double seg = grid[g] - grid[g - 1];
    int nsub = std::max(1, static_cast<int>(std::ceil(seg / dt - 1e-12)));
    double h = seg / nsub;
    auto it = kinetic.find(h);
    if (it == kinetic.end()) it = kinetic.emplace(h, detail::spectral_step(es, h)).first;
    for (int k = 0; k < nsub; ++k) {
      half_phase(amp, h);
      amp = it->second * amp;
      half_phase(amp, h);
      if (!amp.allFinite())
        throw numerical_error("evolve_nls: non-finite amplitude at t = " +
                              to_string_shortest(grid[g - 1] + (k + 1) * h));
    }
    detail::record(traj, grid[g], amp);
  }
  return traj;
}

inline StateTrajectory evolve_nls(const NonlocalOperator& op, const RealField& w,
                                  const std::function<double(double)>& f, const State& psi0,
                                  double t_final, double dt,
                                  const std::vector<double>& samples = {}) {
  return evolve_nls(op.complex_matrix(), w, f, psi0, t_final, dt, samples);
}

// ===== evolution operators =====

// U(t, t0) as a matrix: the exact spectral exponential exp(-i (t - t0) H).
// Exactly unitary; t < t0 gives the inverse.
inline MatC evolution_operator(const MatC& h0, double t, double t0 = 0.0) {
  require_hermitian(h0, 1e-12, "evolution_operator");
  return detail::spectral_step(eigensystem(h0), t - t0);
}

// U(t, t0) for H(t) = H0 + V(t). Static potentials fold into one spectral
// exponential; a sampled potential gets the same midpoint-exponential product
// the state stepper uses over [t0, t] (equal substeps of length <= dt), so
// applying the result to a state reproduces stepping that state.
inline MatC evolution_operator(const MatC& h0, const PotentialSpec& v, double t,
                               double dt, double t0 = 0.0) {
  const Eigen::Index n = h0.rows();
  switch (v.kind) {
    case PotentialKind::none:
      return evolution_operator(h0, t, t0);
    case PotentialKind::static_multiplication: {
      if (v.field.values.size() != n)
        throw invalid_argument_error("evolution_operator: potential field size mismatch");
      MatC h = h0;
      h.diagonal() += v.field.values.cast<cplx>();
      return evolution_operator(h, t, t0);
    }
    case PotentialKind::time_dependent:
      break;
    default:
      throw invalid_argument_error(
          "evolution_operator: nonlinear flow has no state-independent matrix");
  }
  require_hermitian(h0, 1e-12, "evolution_operator");
  if (!(dt > 0.0)) throw invalid_argument_error("evolution_operator: dt must be > 0");
  double seg = t - t0;
  MatC u = MatC::Identity(n, n);
  if (seg == 0.0) return u;
  int nsub = std::max(1, static_cast<int>(std::ceil(std::abs(seg) / dt - 1e-12)));
  double h = seg / nsub;
  for (int k = 0; k < nsub; ++k) {
    double tm = t0 + (k + 0.5) * h;
    MatC hm = h0 + v.sampler(tm);
    require_hermitian(hm, 1e-10, "evolution_operator: sampled H(t)");
    u = detail::spectral_step(eigensystem(hm), h) * u;
  }
  return u;
}

// ===== Heisenberg expectations =====

// <psi_t, A(t) psi_t> at every trajectory time; by duality this equals the
// Heisenberg-picture expectation <psi_0, U(t)^* A(t) U(t) psi_0>, the scalar
// every inequality check consumes.
inline std::vector<double> heisenberg_expectation(const StateTrajectory& traj,
                                                  const std::function<MatC(double)>& obs) {
  std::vector<double> out;
  out.reserve(traj.times.size());
  for (size_t i = 0; i < traj.times.size(); ++i) {
    MatC a = obs(traj.times[i]);
    if (a.rows() != traj.states[i].amplitudes.size())
      throw invalid_argument_error("heisenberg_expectation: observable size mismatch");
    require_hermitian(a, 1e-10, "heisenberg_expectation");
    cplx val = traj.states[i].amplitudes.dot(a * traj.states[i].amplitudes);
    out.push_back(val.real());
  }
  return out;
}

// Diagonal fast path: observables given as per-site real weights.
inline std::vector<double> heisenberg_expectation_diag(
    const StateTrajectory& traj, const std::function<VecR(double)>& obs) {
  std::vector<double> out;
  out.reserve(traj.times.size());
  for (size_t i = 0; i < traj.times.size(); ++i) {
    VecR d = obs(traj.times[i]);
    if (d.size() != traj.states[i].amplitudes.size())
      throw invalid_argument_error("heisenberg_expectation_diag: observable size mismatch");
    double acc = 0.0;
    for (Eigen::Index k = 0; k < d.size(); ++k)
      acc += d[k] * std::norm(traj.states[i].amplitudes[k]);
    out.push_back(acc);
  }
  return out;
}

// ===== trajectory export =====

// CSV with one row per recorded time: time, norm, then any extra series.
inline std::string trajectory_csv(
    const StateTrajectory& traj,
    const std::vector<std::pair<std::string, std::vector<double>>>& extra = {}) {
  for (const auto& [name, series] : extra)
    if (series.size() != traj.times.size())
      throw invalid_argument_error("trajectory_csv: series '" + name + "' length mismatch");
  std::string out = "time,norm";
  for (const auto& [name, series] : extra) {
    out += ',';
    out += name;
  }
  out += '\n';
  for (size_t i = 0; i < traj.times.size(); ++i) {
    out += to_string_shortest(traj.times[i]);
    out += ',';
    out += to_string_shortest(traj.norms[i]);
    for (const auto& [name, series] : extra) {
      out += ',';
      out += to_string_shortest(series[i]);
    }
    out += '\n';
  }
  return out;
}

// Binary state dump for resume: magic, count, time, raw re/im doubles.
inline void write_state(const std::filesystem::path& path, const State& psi) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw invalid_argument_error("write_state: cannot open " + path.string());
  const char magic[8] = {'L', 'C', 'S', 'T', 'A', 'T', 'E', '1'};
  os.write(magic, 8);
  std::uint64_t n = static_cast<std::uint64_t>(psi.amplitudes.size());
  os.write(reinterpret_cast<const char*>(&n), sizeof n);
  os.write(reinterpret_cast<const char*>(&psi.time), sizeof psi.time);
  os.write(reinterpret_cast<const char*>(psi.amplitudes.data()),
           static_cast<std::streamsize>(n * sizeof(cplx)));
  if (!os) throw numerical_error("write_state: write failed for " + path.string());
}

inline State read_state(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw invalid_argument_error("read_state: cannot open " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::string(magic, 8) != "LCSTATE1")
    throw invalid_argument_error("read_state: bad magic in " + path.string());
  std::uint64_t n = 0;
  State psi;
  is.read(reinterpret_cast<char*>(&n), sizeof n);
  is.read(reinterpret_cast<char*>(&psi.time), sizeof psi.time);
  psi.amplitudes.resize(static_cast<Eigen::Index>(n));
  is.read(reinterpret_cast<char*>(psi.amplitudes.data()),
          static_cast<std::streamsize>(n * sizeof(cplx)));
  if (!is) throw invalid_argument_error("read_state: truncated file " + path.string());
  return psi;
}

}  // namespace lclab
