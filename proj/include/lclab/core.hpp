// core.hpp - shared aliases, error types, and small numeric helpers.
#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

namespace lclab {

using cplx = std::complex<double>;
using VecR = Eigen::VectorXd;
using VecC = Eigen::VectorXcd;
using MatR = Eigen::MatrixXd;
using MatC = Eigen::MatrixXcd;

// ===== errors =====
//
// All structured failures derive from lclab::error so callers can separate
// artifact-level diagnostics from generic std exceptions.

class error : public std::runtime_error {
 public:
  explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad call arguments or inconsistent object state.
class invalid_argument_error : public error {
 public:
  explicit invalid_argument_error(const std::string& msg) : error(msg) {}
};

// An integral or series was detected as divergent (carries partial data).
class divergence_error : public error {
 public:
  divergence_error(const std::string& msg, double partial_sum, double last_block)
      : error(msg), partial_sum(partial_sum), last_block(last_block) {}
  double partial_sum;
  double last_block;
};

// A numerical invariant failed (lost Hermiticity, non-finite values, ...).
class numerical_error : public error {
 public:
  explicit numerical_error(const std::string& msg) : error(msg) {}
};

// Scenario configuration problems; `field` names the offending key.
class config_error : public error {
 public:
  config_error(const std::string& field, const std::string& msg)
      : error(field + ": " + msg), field(field) {}
  std::string field;
};

// ===== numeric helpers =====

inline double sign_of(double t) { return t < 0.0 ? -1.0 : 1.0; }

// Shortest decimal string that round-trips the value (stable file output).
inline std::string to_string_shortest(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Largest |entry| of a matrix; zero for empty matrices.
template <typename Derived>
double max_abs(const Eigen::MatrixBase<Derived>& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

// Spectral norm as sqrt(lambda_max(M^* M)); much faster than a full SVD at
// the matrix sizes used here and accurate to ~1e-15 relative.
template <typename Mat>
double operator_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Mat gram = m.adjoint() * m;
  Eigen::SelfAdjointEigenSolver<Mat> es(gram, Eigen::EigenvaluesOnly);
  double top = es.eigenvalues().maxCoeff();
  return top > 0.0 ? std::sqrt(top) : 0.0;
}

// Max-entry deviation from Hermiticity relative to the largest entry.
inline double hermiticity_defect(const MatC& m) {
  double scale = max_abs(m);
  if (scale == 0.0) return 0.0;
  return max_abs(MatC(m - m.adjoint())) / scale;
}

inline void require_hermitian(const MatC& m, double tol, const std::string& who) {
  double defect = hermiticity_defect(m);
  if (!(defect <= tol))
    throw numerical_error(who + ": Hermiticity defect " + std::to_string(defect));
}

// Smallest eigenvalue of a Hermitian matrix (eigenvalues-only solve).
inline double min_eigenvalue(const MatC& m) {
  Eigen::SelfAdjointEigenSolver<MatC> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace lclab
