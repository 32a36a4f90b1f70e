// Classical driven top in alpha-units: time is tau = alpha * t, so the bare
// precession has angular frequency 1 and the drive reads cos(freq * tau).
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "driventop/spinops.hpp"

namespace driventop {

/// Dimensionless driven-top coefficients (linear term normalized to 1).
struct ClassicalParams {
  double beta = 0.0;   // beta' = beta |L| / alpha
  double gamma = 0.0;  // gamma' = gamma / alpha
  double freq = 1.0;   // f' = 2 pi f / alpha, drive angular frequency in alpha-units

  /// Throws std::invalid_argument unless freq > 0 and gamma >= 0.
  void validate() const;
  double drive_period() const { return kTwoPi / freq; }
};

/// Unit angular-momentum direction L / |L|.
struct AngularMomentumState {
  Vec3 l{0.0, 0.0, 1.0};

  static AngularMomentumState from_direction(SphereDirection dir) { return {dir.unit_vector()}; }
  SphereDirection direction() const { return SphereDirection::from_vector(l); }
};

/// Per-step error targets of the embedded Runge-Kutta-Fehlberg 7(8) controller.
struct IntegrationTolerances {
  double rtol = 1e-11;
  double atol = 1e-13;
};

/// Right-hand side dl/dtau.
Vec3 eom(const Vec3& l, const ClassicalParams& p, double tau);

/// Adaptive Runge-Kutta integration from tau = t0 through every requested
/// time (monotone in either direction). Throws NumericalError when the step
/// control stalls.
std::vector<Vec3> integrate(const AngularMomentumState& s0, const ClassicalParams& p,
                            const std::vector<double>& times, double t0 = 0.0,
                            const IntegrationTolerances& tol = {});

/// Convenience: state at tau = t_end.
Vec3 integrate_to(const AngularMomentumState& s0, const ClassicalParams& p, double t_end,
                  const IntegrationTolerances& tol = {});

/// Points at tau = k * drive_period for k = 0..n_periods-1 (the seed comes first).
std::vector<Vec3> stroboscopic_map(const AngularMomentumState& s0, const ClassicalParams& p,
                                   int n_periods = 1000, const IntegrationTolerances& tol = {});

struct ChaosConfig {
  double separation = 1e-8;
  double duration = 100.0;       // alpha-units; the pair is always evolved and fitted over all of it
  /// Reporting only: separations above this count as limited by the size of the sphere.
  double saturation_level = 1e-2;
  double sample_interval = 0.25;  // spacing of log-distance samples
  /// Exponent above which a seed counts as chaotic. Use calibrate_chaos_threshold().
  double threshold = 0.1;
  IntegrationTolerances tol{};
};

struct ChaosClassification {
  double exponent = 0.0;      // least-squares slope of ln(distance) per alpha-unit of time
  bool is_chaotic = false;
  double fit_residual = 0.0;  // rms residual of the log-distance fit
  double fit_end = 0.0;       // end of the fit window
  bool saturated = false;     // separation reached saturation_level (exponent underestimates the Lyapunov one)
};

ChaosClassification classify_chaotic(const AngularMomentumState& s0, const ClassicalParams& p,
                                     const ChaosConfig& cfg);

/// Area-uniform seed number `index` of the stream identified by `seed`.
SphereDirection uniform_sphere_point(std::uint64_t seed, std::uint64_t index);

struct ChaoticFraction {
  double percent = 0.0;
  int n_chaotic = 0;
  int n_samples = 0;
};

ChaoticFraction chaotic_fraction(const ClassicalParams& p, int n_samples, const ChaosConfig& cfg,
                                 std::uint64_t seed, int workers = 1);

/// Margin over the integrable-case maximum. Finite-time fits at gamma' = 0
/// scatter up to ~3/T, so the margin stays modest to keep weak chaos visible.
inline constexpr double kThresholdFactor = 2.5;

struct ThresholdCalibration {
  double max_exponent = 0.0;
  double threshold = 0.0;  // factor * max_exponent
  int n_samples = 0;
};

/// Runs the integrable (gamma' = 0) case at the given beta' and freq and
/// returns factor x the largest fitted exponent.
ThresholdCalibration calibrate_chaos_threshold(double beta, double freq, int n_samples,
                                               const ChaosConfig& cfg, std::uint64_t seed,
                                               int workers = 1, double factor = kThresholdFactor);

struct PhysicalClassicalParams {
  double alpha = 0.0;    // rad/s
  double beta = 0.0;     // rad/s per unit |L|
  double gamma = 0.0;    // rad/s
  double freq_hz = 0.0;  // Hz
  double l_norm = 1.0;   // |L|
};

ClassicalParams to_dimensionless(const PhysicalClassicalParams& phys);

struct QuantumDimensionless {
  double q_prime = 0.0;   // Q I / (gamma_n B0)
  double b1_prime = 0.0;  // B1 / B0
  double f_prime = 0.0;   // f / (gamma_n B0)
  /// Scale of t' = gamma_n B0 t, in Hz.
  double time_scale_hz = 0.0;

  /// The corresponding classical coefficients: beta' = Q', gamma' = B1', freq = f'.
  ClassicalParams classical() const { return {q_prime, b1_prime, f_prime}; }
};

/// gamma_n in Hz/T, b0 and b1 in T, q and f in Hz.
QuantumDimensionless to_dimensionless(double spin, double gamma_n, double b0, double q, double b1,
                                      double f);

/// Centre of one of the two regular islands of the undriven top created by the
/// quadratic term (energy maxima at lz = 1/(2 beta'), lx = +-sqrt(1 - lz^2)).
/// Requires beta' > 1/2; `side` = +1 or -1 selects the sign of lx.
Vec3 quadratic_island_center(double beta, int side = 1);

/// Hammer equal-area projection; lon = phi wrapped to (-pi, pi], lat = pi/2 - theta.
std::pair<double, double> hammer_projection(SphereDirection dir);
/// Inverse projection; throws std::invalid_argument outside the map ellipse.
SphereDirection inverse_hammer(double x, double y);

/// The quantum Hamiltonian in its canonical geometry differs from the classical
/// one by a pi rotation about x; these map directions between the two pictures.
Vec3 classical_from_quantum(const Vec3& n);
Vec3 quantum_from_classical(const Vec3& l);

}  // namespace driventop
