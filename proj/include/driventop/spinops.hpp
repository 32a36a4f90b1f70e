// Spin operator algebra, dense Hermitian linear algebra and spin coherent
// states shared by the classical/quantum driven-top engines.
#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace driventop {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using Vec3 = Eigen::Vector3d;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Thrown when a numerical procedure cannot deliver a result (integrator
/// underflow, non-unitary propagator, ...). Precondition violations use
/// std::invalid_argument instead.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Spin quantum number stored as 2I so half-integers are exact.
class SpinQuantumNumber {
 public:
  explicit SpinQuantumNumber(int two_i);

  /// Accepts 0.5, 1.5, 3.5, ...; rejects values that are not multiples of 1/2.
  static SpinQuantumNumber from_value(double spin);

  int two_i() const noexcept { return two_i_; }
  double value() const noexcept { return 0.5 * two_i_; }
  int dim() const noexcept { return two_i_ + 1; }
  double casimir() const noexcept { return value() * (value() + 1.0); }
  bool is_half_integer() const noexcept { return two_i_ % 2 == 1; }

  friend bool operator==(const SpinQuantumNumber&, const SpinQuantumNumber&) = default;

 private:
  int two_i_;
};

/// Point on the unit sphere: polar angle theta in [0, pi], azimuth phi in [0, 2pi).
class SphereDirection {
 public:
  SphereDirection() = default;
  /// Validates the ranges; phi is not wrapped implicitly.
  SphereDirection(double theta, double phi);

  /// Wraps phi into [0, 2pi) and clamps theta into [0, pi].
  static SphereDirection normalized(double theta, double phi);
  static SphereDirection from_vector(const Vec3& v);

  double theta() const noexcept { return theta_; }
  double phi() const noexcept { return phi_; }
  Vec3 unit_vector() const;
  SphereDirection antipode() const;

 private:
  double theta_ = 0.0;
  double phi_ = 0.0;
};

/// (Ix, Iy, Iz) in the |I,m> basis ordered m = I, I-1, ..., -I.
struct SpinOperators {
  SpinQuantumNumber spin;
  Matrix x;
  Matrix y;
  Matrix z;

  Matrix along(const Vec3& n) const { return n.x() * x + n.y() * y + n.z() * z; }
  Matrix identity() const { return Matrix::Identity(spin.dim(), spin.dim()); }
};

SpinOperators make_spin_operators(SpinQuantumNumber spin);

struct Eigensystem {
  RealVector values;  // ascending
  Matrix vectors;     // columns; first significant component real-positive
};

/// Largest entrywise deviation from Hermiticity.
double hermiticity_error(const Matrix& m);
/// Operator-norm deviation of U^dagger U from the identity.
double unitarity_error(const Matrix& u);

Eigensystem hermitian_eigensystem(const Matrix& m, double hermiticity_tol = 1e-10);

/// exp(-i 2 pi H t) for H in Hz and t in seconds.
Matrix unitary_exp(const Matrix& h_hz, double t_seconds);

/// R(theta, phi) = exp(+i theta (Ix sin(phi) - Iy cos(phi))); maps |I,I> onto the
/// coherent state pointing along (theta, phi).
Matrix rotation_operator(const SpinOperators& ops, SphereDirection dir);
Matrix rotation_operator(SpinQuantumNumber spin, SphereDirection dir);
/// Same generator with unrestricted angles (e.g. theta = 2 pi).
Matrix rotation_operator(const SpinOperators& ops, double theta, double phi);

/// Coherent state from the closed-form binomial expansion.
Vector spin_coherent_state(SpinQuantumNumber spin, SphereDirection dir);

/// R(-phi) A R(phi) with R(phi) = exp(-i phi Iz).
Matrix rotated_operator_about_z(const Matrix& a, const SpinOperators& ops, double phi);

/// (1/pi) <theta,phi| rho |theta,phi>; the spin is inferred from rho's dimension.
double husimi_q(const Matrix& rho, SphereDirection dir);
/// Pure-state shortcut (1/pi)|<psi|theta,phi>|^2.
double husimi_q_pure(const Vector& psi, SphereDirection dir);

double purity(const Matrix& rho);

Matrix density_matrix(const Vector& psi);

/// Throws std::invalid_argument when rho is not a valid density matrix.
void check_density_matrix(const Matrix& rho);

/// Expectation value <psi|A|psi> (real part).
double expectation(const Matrix& a, const Vector& psi);

double operator_norm(const Matrix& m);

}  // namespace driventop
