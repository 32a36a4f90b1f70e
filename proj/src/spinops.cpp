#include "driventop/spinops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace driventop {

SpinQuantumNumber::SpinQuantumNumber(int two_i) : two_i_(two_i) {
  if (two_i < 1) {
    throw std::invalid_argument("spin quantum number must satisfy 2I >= 1, got 2I = " +
                                std::to_string(two_i));
  }
}

SpinQuantumNumber SpinQuantumNumber::from_value(double spin) {
  const double twice = 2.0 * spin;
  const double rounded = std::round(twice);
  if (std::abs(twice - rounded) > 1e-9) {
    throw std::invalid_argument("spin must be a multiple of 1/2, got " + std::to_string(spin));
  }
  return SpinQuantumNumber(static_cast<int>(rounded));
}

SphereDirection::SphereDirection(double theta, double phi) : theta_(theta), phi_(phi) {
  if (!(theta >= 0.0 && theta <= kPi)) {
    throw std::invalid_argument("polar angle outside [0, pi]: " + std::to_string(theta));
  }
  if (!(phi >= 0.0 && phi < kTwoPi)) {
    throw std::invalid_argument("azimuth outside [0, 2pi): " + std::to_string(phi));
  }
}

SphereDirection SphereDirection::normalized(double theta, double phi) {
  double p = std::fmod(phi, kTwoPi);
  if (p < 0.0) p += kTwoPi;
  if (p >= kTwoPi) p = 0.0;
  return SphereDirection(std::clamp(theta, 0.0, kPi), p);
}

SphereDirection SphereDirection::from_vector(const Vec3& v) {
  const double r = v.norm();
  if (!(r > 0.0)) throw std::invalid_argument("zero vector has no direction");
  const double theta = std::acos(std::clamp(v.z() / r, -1.0, 1.0));
  return normalized(theta, std::atan2(v.y(), v.x()));
}

Vec3 SphereDirection::unit_vector() const {
  const double s = std::sin(theta_);
  return {s * std::cos(phi_), s * std::sin(phi_), std::cos(theta_)};
}

SphereDirection SphereDirection::antipode() const {
  return normalized(kPi - theta_, phi_ + kPi);
}

SpinOperators make_spin_operators(SpinQuantumNumber spin) {
  const int d = spin.dim();
  const double s = spin.value();
  Matrix raise = Matrix::Zero(d, d);
  Matrix z = Matrix::Zero(d, d);
  // index k <-> m = I - k
  for (int k = 0; k < d; ++k) {
    const double m = s - k;
    z(k, k) = m;
    if (k > 0) raise(k - 1, k) = std::sqrt(s * (s + 1.0) - m * (m + 1.0));
  }
  const Matrix lower = raise.adjoint();
  SpinOperators ops{spin, 0.5 * (raise + lower), (raise - lower) / Complex(0.0, 2.0), z};
  return ops;
}

double hermiticity_error(const Matrix& m) {
  if (m.rows() != m.cols()) return std::numeric_limits<double>::infinity();
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

double operator_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

double unitarity_error(const Matrix& u) {
  if (u.rows() != u.cols()) return std::numeric_limits<double>::infinity();
  return operator_norm(u.adjoint() * u - Matrix::Identity(u.rows(), u.cols()));
}

Eigensystem hermitian_eigensystem(const Matrix& m, double hermiticity_tol) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw std::invalid_argument("hermitian_eigensystem: matrix must be square and non-empty");
  }
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if (hermiticity_error(m) > hermiticity_tol * scale) {
    throw std::invalid_argument("hermitian_eigensystem: matrix is not Hermitian");
  }
  const Matrix sym = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("hermitian_eigensystem: eigensolver did not converge");
  }
  Eigensystem out{solver.eigenvalues(), solver.eigenvectors()};
  for (Eigen::Index c = 0; c < out.vectors.cols(); ++c) {
    auto col = out.vectors.col(c);
    const double cmax = col.cwiseAbs().maxCoeff();
    for (Eigen::Index r = 0; r < col.size(); ++r) {
      if (std::abs(col(r)) > 1e-8 * cmax) {
        col *= std::conj(col(r)) / std::abs(col(r));
        col(r) = std::abs(col(r));
        break;
      }
    }
  }
  return out;
}

Matrix unitary_exp(const Matrix& h_hz, double t_seconds) {
  const Eigensystem es = hermitian_eigensystem(h_hz);
  Vector phases(es.values.size());
  for (Eigen::Index k = 0; k < es.values.size(); ++k) {
    phases(k) = std::polar(1.0, -kTwoPi * es.values(k) * t_seconds);
  }
  return es.vectors * phases.asDiagonal() * es.vectors.adjoint();
}

Matrix rotation_operator(const SpinOperators& ops, double theta, double phi) {
  // exp(-i G) with G = theta (Iy cos phi - Ix sin phi); unitary_exp works in
  // cycles, hence t = 1/2pi.
  const Matrix gen = theta * (std::cos(phi) * ops.y - std::sin(phi) * ops.x);
  return unitary_exp(gen, 1.0 / kTwoPi);
}

Matrix rotation_operator(const SpinOperators& ops, SphereDirection dir) {
  return rotation_operator(ops, dir.theta(), dir.phi());
}

Matrix rotation_operator(SpinQuantumNumber spin, SphereDirection dir) {
  return rotation_operator(make_spin_operators(spin), dir);
}

namespace {

double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

}  // namespace

Vector spin_coherent_state(SpinQuantumNumber spin, SphereDirection dir) {
  const int n = spin.two_i();
  const double c = std::cos(0.5 * dir.theta());
  const double s = std::sin(0.5 * dir.theta());
  Vector psi(spin.dim());
  // k = I - m runs over 0..2I
  for (int k = 0; k <= n; ++k) {
    const int up = n - k;  // I + m
    const double mag = std::exp(0.5 * log_binomial(n, up)) * std::pow(c, up) * std::pow(s, k);
    psi(k) = std::polar(mag, dir.phi() * k);
  }
  return psi / psi.norm();
}

Matrix rotated_operator_about_z(const Matrix& a, const SpinOperators& ops, double phi) {
  // R(-phi) = exp(+i phi Iz) is diagonal in this basis.
  const int d = ops.spin.dim();
  Vector diag(d);
  for (int k = 0; k < d; ++k) diag(k) = std::polar(1.0, phi * ops.z(k, k).real());
  return diag.asDiagonal() * a * diag.conjugate().asDiagonal();
}

double husimi_q(const Matrix& rho, SphereDirection dir) {
  const SpinQuantumNumber spin(static_cast<int>(rho.rows()) - 1);
  const Vector coh = spin_coherent_state(spin, dir);
  const double v = (coh.adjoint() * rho * coh)(0, 0).real() / kPi;
  return std::clamp(v, 0.0, 1.0 / kPi);
}

double husimi_q_pure(const Vector& psi, SphereDirection dir) {
  const SpinQuantumNumber spin(static_cast<int>(psi.size()) - 1);
  const Vector coh = spin_coherent_state(spin, dir);
  return std::clamp(std::norm(coh.dot(psi)) / kPi, 0.0, 1.0 / kPi);
}

double purity(const Matrix& rho) {
  // Tr(rho^2) = sum_ij |rho_ij|^2 for Hermitian rho
  return rho.cwiseAbs2().sum();
}

Matrix density_matrix(const Vector& psi) { return psi * psi.adjoint(); }

void check_density_matrix(const Matrix& rho) {
  if (rho.rows() != rho.cols() || rho.rows() < 2) {
    throw std::invalid_argument("density matrix must be square with dimension >= 2");
  }
  if (hermiticity_error(rho) > 1e-10) throw std::invalid_argument("density matrix not Hermitian");
  if (std::abs(rho.trace() - Complex(1.0)) > 1e-10) {
    throw std::invalid_argument("density matrix trace differs from 1");
  }
  const RealVector ev = hermitian_eigensystem(rho).values;
  if (ev.minCoeff() < -1e-10) throw std::invalid_argument("density matrix has negative eigenvalue");
}

double expectation(const Matrix& a, const Vector& psi) {
  return (psi.adjoint() * a * psi)(0, 0).real();
}

}  // namespace driventop
