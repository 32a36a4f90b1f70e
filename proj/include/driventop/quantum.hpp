// Quantum driven top: donor spin Hamiltonians in the lab, RF-dressed and RWA
// frames, Floquet propagators, tunneling and fluctuation-induced purity loss.
//
// Sign convention: nuclear Zeeman and drive couplings carry -gamma_n (the
// physical sign of a positive gyromagnetic ratio), so the lab Hamiltonian is
//   H = -gamma_n B0 (n0.I) + H_Q - gamma_n B1 cos(2 pi f t + phase) (n1.I).
// A pi rotation about x maps the canonical geometry onto the textbook form
// gamma_n B0 Iz + Q Ix^2 + gamma_n B1 cos(2 pi f t) Iy.
#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "driventop/spinops.hpp"

namespace driventop {

enum class Frame { lab, rf, rwa };

/// Electron manifold selecting the +A/2 or -A/2 effective hyperfine shift.
enum class ElectronManifold { up, down };

/// Principal axes (x', y', z') of the field-gradient tensor in the lab frame.
struct QuadrupoleAxes {
  Vec3 x{1.0, 0.0, 0.0};
  Vec3 y{0.0, 1.0, 0.0};
  Vec3 z{0.0, 0.0, 1.0};

  /// z' along lab x, the driven-top arrangement (x' = y, y' = z).
  static QuadrupoleAxes along_lab_x() { return {{0, 1, 0}, {0, 0, 1}, {1, 0, 0}}; }
  /// Rotates all three axes by `r`.
  QuadrupoleAxes rotated(const Eigen::Matrix3d& r) const { return {r * x, r * y, r * z}; }
  void validate() const;
};

/// IQ-modulated RF drive. The drive axis lies in the lab xy-plane at
/// `axis_angle` from x; `phase` is the compensating RF phase (equal to
/// axis_angle for an exact RWA reduction).
struct RfDrive {
  double b1_i = 0.0;  // T
  double b1_q = 0.0;  // T
  double f_rf = 0.0;  // Hz
  double axis_angle = kPi / 2;
  double phase = kPi / 2;
  /// Allowed |f_rf - gamma_n B0| / (gamma_n B0).
  double detuning_tolerance = 1e-12;
};

struct DonorSpec {
  SpinQuantumNumber spin{7};
  double gamma_n = 0.0;      // Hz/T, magnitude
  double hyperfine_a = 0.0;  // Hz; 0 for the ionized donor
  ElectronManifold manifold = ElectronManifold::up;
  double b0 = 0.0;  // T
  SphereDirection b0_dir{0.0, 0.0};
  double q = 0.0;    // Hz
  double eta = 0.0;  // [0, 1]
  QuadrupoleAxes quad_axes{};
  double b1 = 0.0;  // T
  Vec3 b1_axis{0.0, 1.0, 0.0};
  double drive_freq = 0.0;   // Hz
  double drive_phase = 0.0;  // rad
  Frame frame = Frame::lab;
  RfDrive rf{};

  /// Throws std::invalid_argument on any violated invariant.
  void validate() const;

  /// Lab-frame driven top: B0 along z, quadrupole axis along x, drive along y.
  static DonorSpec driven_top(SpinQuantumNumber spin, double gamma_n, double b0, double q,
                              double b1, double drive_freq);
  /// RF-dressed top with f_rf = gamma_n B0 and the same quadrupole geometry.
  static DonorSpec rf_top(SpinQuantumNumber spin, double gamma_n, double b0, double q,
                          double b1_i, double b1_q, double drive_freq);
};

/// Q (Iz'^2 - I(I+1)/3 + eta/3 (Ix'^2 - Iy'^2)).
Matrix quadrupole_term(const SpinOperators& ops, double q, double eta, const QuadrupoleAxes& axes);

/// Time-independent part of the lab Hamiltonian (Zeeman, hyperfine shift, quadrupole).
Matrix static_hamiltonian(const DonorSpec& spec, const SpinOperators& ops);
Matrix static_hamiltonian(const DonorSpec& spec);

/// Hamiltonian in Hz at time t for the spec's frame (lab, rf or rwa).
Matrix build_hamiltonian(const DonorSpec& spec, double t);
/// Explicit lab-frame builder (ignores spec.frame).
Matrix build_lab_hamiltonian(const DonorSpec& spec, double t);
/// RF-dressed lab-frame Hamiltonian: -gamma_n B0 Iz + H_Q
///   + gamma_n [-B1I sin(2 pi f_rf t + phase) + B1Q cos(2 pi f t) cos(2 pi f_rf t + phase)] n_d.I
Matrix build_rf_hamiltonian(const DonorSpec& spec, double t);

struct RwaReduction {
  DonorSpec spec;        // frame = rwa
  double alpha_eff = 0;  // gamma_n B1I / 2, Hz
  double beta_eff = 0;   // coefficient of Iz^2 (-Q/2 for the canonical geometry), Hz
  double drive_eff = 0;  // gamma_n B1Q / 2, Hz
  double detuning = 0;   // f_rf - gamma_n B0 ... residual Iz coefficient, Hz
  double offset = 0;     // dropped constant, Hz
  Matrix static_part;    // time-independent RWA Hamiltonian without offset
  Matrix drive_part;     // multiplies cos(2 pi f t + drive_phase)
};

/// Rotating-frame Hamiltonian with all 2 f_rf terms removed. The frame is
/// V(t) = exp(-i 2 pi f_rf t Iz): lab states map to V(t)|psi>.
RwaReduction rwa_reduce(const DonorSpec& spec);
Matrix rwa_hamiltonian(const RwaReduction& red, double t);

/// exp(-i 2 pi f_rf t Iz), the lab-to-rotating-frame map.
Matrix rotating_frame_operator(const SpinOperators& ops, double f_rf, double t);

/// Time-ordered product quadrature for one drive period.
enum class FloquetRule {
  left_endpoint,  // H sampled at (N-k)/N tau; first order in 1/N
  midpoint,       // H at segment centres; second order
  magnus4,        // fourth-order commutator-free Magnus step per segment
};

struct FloquetOperator {
  Matrix matrix;
  double period = 0.0;  // s
  int n_segments = 0;
  FloquetRule rule = FloquetRule::magnus4;
};

inline constexpr FloquetRule kDefaultFloquetRule = FloquetRule::magnus4;

/// Drive period 1/f of a lab or rwa spec; a zero drive frequency is rejected.
double drive_period(const DonorSpec& spec);

/// One-period propagator of a lab- or rwa-frame spec.
FloquetOperator floquet(const DonorSpec& spec, int n_segments = 1000,
                        FloquetRule rule = kDefaultFloquetRule);

/// Propagator of an arbitrary Hamiltonian over [t0, t0 + duration].
Matrix segmented_propagator(const std::function<Matrix(double)>& hamiltonian, double t0,
                            double duration, int n_segments,
                            FloquetRule rule = kDefaultFloquetRule);

struct FloquetEigensystem {
  RealVector quasienergies;  // Hz, ascending, in (-1/(2 tau), 1/(2 tau)]
  Matrix eigenstates;        // columns
  double period = 0.0;
};

FloquetEigensystem floquet_eigensystem(const FloquetOperator& f);

/// Folds a frequency into (-1/(2 tau), 1/(2 tau)].
double fold_quasienergy(double e, double period);
/// Minimal circular distance between two quasienergies.
double quasienergy_distance(double a, double b, double period);

Vector evolve(const FloquetOperator& f, const Vector& psi0, int n_periods);

/// |<psi(0)|psi(k tau)>| for k = 0..n_periods.
std::vector<double> overlap_trace(const FloquetOperator& f, const Vector& psi0, int n_periods);
std::vector<double> overlap_trace(const DonorSpec& spec, const Vector& psi0, int n_periods,
                                  int n_segments = 1000);

class NotTwoComponentError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

struct TunnelingResult {
  double frequency = 0.0;  // Hz
  int state_a = 0;
  int state_b = 0;
  double weight_a = 0.0;
  double weight_b = 0.0;
};

/// Splitting of the two dominant Floquet components of psi0; throws
/// NotTwoComponentError when they carry less than `min_weight`.
TunnelingResult tunneling_frequency(const FloquetEigensystem& es, const Vector& psi0,
                                    double min_weight = 0.8);
TunnelingResult tunneling_frequency(const DonorSpec& spec, const Vector& psi0,
                                    int n_segments = 1000, double min_weight = 0.8);

struct SpectralPeak {
  double frequency = 0.0;  // Hz
  double bin_width = 0.0;  // Hz
  double power = 0.0;
};

/// Strongest non-DC periodogram line of a series sampled every `period` seconds.
SpectralPeak spectral_peak(const std::vector<double>& series, double period);

enum class FluctuatingParameter { q, b0, b1 };

struct FluctuationSpec {
  FluctuatingParameter parameter = FluctuatingParameter::q;
  double mean = 0.0;
  double sigma = 0.0;
  int n_levels = 30;
  int n_sequences = 200;
  int n_periods = 1000;
  std::uint64_t rng_seed = 0;

  void validate() const;
  /// Parameter values uniformly spaced over mean +- 3 sigma.
  std::vector<double> levels() const;
  /// Level index for (member, period): Gaussian draw clipped to +-3 sigma,
  /// rounded to the nearest level.
  int level_index(std::uint64_t member, std::uint64_t period) const;
};

/// Cell-centred theta x phi grid over the sphere.
struct SphereGrid {
  int n_theta = 48;
  int n_phi = 96;

  SphereDirection cell(int i, int j) const;
  /// sin(theta_i), the relative area of row i.
  double area_weight(int i) const;
  int size() const { return n_theta * n_phi; }
};

struct PurityMap {
  SphereGrid grid;
  std::vector<double> purity;  // row-major, index i * n_phi + j
  double at(int i, int j) const { return purity[static_cast<std::size_t>(i) * grid.n_phi + j]; }
};

/// Copy of spec with the fluctuating parameter set to `value`.
DonorSpec with_parameter(const DonorSpec& spec, FluctuatingParameter p, double value);

/// Floquet operators of every fluctuation level, in level order.
std::vector<Matrix> fluctuation_floquets(const DonorSpec& spec, const FluctuationSpec& fluct,
                                         int n_segments = 1000, int workers = 1);
/// Full propagator of ensemble member `member` (latest period on the left).
Matrix ensemble_member_propagator(const std::vector<Matrix>& level_floquets,
                                  const FluctuationSpec& fluct, std::uint64_t member);

PurityMap purity_map(const DonorSpec& spec, const FluctuationSpec& fluct, const SphereGrid& grid,
                     int workers = 1, int n_segments = 1000);

/// Q = 3 (1 - gamma_s) e Qn Vzz / (4 I (2I - 1) h) in Hz; Qn in m^2, Vzz in V/m^2.
double quadrupole_strength(double qn, double vzz, double gamma_s, SpinQuantumNumber spin);
/// Field gradient that produces quadrupole strength q (Hz).
double field_gradient_for(double q, double qn, double gamma_s, SpinQuantumNumber spin);

}  // namespace driventop
