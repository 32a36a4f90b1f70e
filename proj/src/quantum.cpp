#include "driventop/quantum.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <string>

#include <fftw3.h>

#include "driventop/parallel.hpp"
#include "driventop/random.hpp"

namespace driventop {

namespace {

// exact SI values
constexpr double kElementaryCharge = 1.602176634e-19;  // C
constexpr double kPlanck = 6.62607015e-34;             // J s

bool finite_nonneg(double v) { return std::isfinite(v) && v >= 0.0; }

Eigen::Matrix3d quadrupole_tensor(double q, double eta, const QuadrupoleAxes& a) {
  return q * (a.z * a.z.transpose() - Eigen::Matrix3d::Identity() / 3.0 +
              eta / 3.0 * (a.x * a.x.transpose() - a.y * a.y.transpose()));
}

}  // namespace

void QuadrupoleAxes::validate() const {
  Eigen::Matrix3d m;
  m << x, y, z;
  if (!m.allFinite() || (m.transpose() * m - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-12) {
    throw std::invalid_argument("quadrupole axes must be orthonormal");
  }
}

void DonorSpec::validate() const {
  if (!finite_nonneg(gamma_n)) throw std::invalid_argument("gamma_n must be finite and >= 0");
  if (!finite_nonneg(hyperfine_a)) throw std::invalid_argument("hyperfine A must be >= 0");
  if (!finite_nonneg(b0)) throw std::invalid_argument("B0 must be >= 0");
  if (!finite_nonneg(b1)) throw std::invalid_argument("B1 must be >= 0");
  if (!std::isfinite(q)) throw std::invalid_argument("Q must be finite");
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("eta must lie in [0, 1]");
  if (!finite_nonneg(drive_freq)) throw std::invalid_argument("drive frequency must be >= 0");
  if (!std::isfinite(drive_phase)) throw std::invalid_argument("drive phase must be finite");
  if (!b1_axis.allFinite() || std::abs(b1_axis.norm() - 1.0) > 1e-12) {
    throw std::invalid_argument("B1 axis must be a unit vector");
  }
  quad_axes.validate();
  if (frame != Frame::lab) {
    if (!finite_nonneg(rf.b1_i) || !finite_nonneg(rf.b1_q) || !finite_nonneg(rf.f_rf)) {
      throw std::invalid_argument("RF amplitudes and frequency must be >= 0");
    }
    if (b0_dir.theta() != 0.0) {
      throw std::invalid_argument("the RF-dressed frame requires B0 along z");
    }
    const double larmor = gamma_n * b0;
    if (std::abs(rf.f_rf - larmor) > rf.detuning_tolerance * std::max(larmor, 1.0)) {
      throw std::invalid_argument("RF frequency differs from gamma_n B0 beyond the tolerance");
    }
  }
}

DonorSpec DonorSpec::driven_top(SpinQuantumNumber spin, double gamma_n, double b0, double q,
                                double b1, double drive_freq) {
  DonorSpec s;
  s.spin = spin;
  s.gamma_n = gamma_n;
  s.b0 = b0;
  s.q = q;
  s.quad_axes = QuadrupoleAxes::along_lab_x();
  s.b1 = b1;
  s.b1_axis = Vec3::UnitY();
  s.drive_freq = drive_freq;
  return s;
}

DonorSpec DonorSpec::rf_top(SpinQuantumNumber spin, double gamma_n, double b0, double q,
                            double b1_i, double b1_q, double drive_freq) {
  DonorSpec s = driven_top(spin, gamma_n, b0, q, 0.0, drive_freq);
  s.frame = Frame::rf;
  s.rf.b1_i = b1_i;
  s.rf.b1_q = b1_q;
  s.rf.f_rf = gamma_n * b0;
  return s;
}

Matrix quadrupole_term(const SpinOperators& ops, double q, double eta, const QuadrupoleAxes& axes) {
  const Matrix iz = ops.along(axes.z);
  const Matrix ix = ops.along(axes.x);
  const Matrix iy = ops.along(axes.y);
  return q * (iz * iz - ops.spin.casimir() / 3.0 * ops.identity() +
              eta / 3.0 * (ix * ix - iy * iy));
}

Matrix static_hamiltonian(const DonorSpec& spec, const SpinOperators& ops) {
  double linear = -spec.gamma_n * spec.b0;
  if (spec.hyperfine_a > 0.0) {
    linear += (spec.manifold == ElectronManifold::up ? 0.5 : -0.5) * spec.hyperfine_a;
  }
  Matrix h = linear * ops.along(spec.b0_dir.unit_vector());
  if (spec.q != 0.0) h += quadrupole_term(ops, spec.q, spec.eta, spec.quad_axes);
  return h;
}

Matrix static_hamiltonian(const DonorSpec& spec) {
  spec.validate();
  return static_hamiltonian(spec, make_spin_operators(spec.spin));
}

Matrix build_lab_hamiltonian(const DonorSpec& spec, double t) {
  spec.validate();
  const auto ops = make_spin_operators(spec.spin);
  Matrix h = static_hamiltonian(spec, ops);
  if (spec.b1 > 0.0) {
    const double c = std::cos(kTwoPi * spec.drive_freq * t + spec.drive_phase);
    h += (-spec.gamma_n * spec.b1 * c) * ops.along(spec.b1_axis);
  }
  return h;
}

Matrix build_rf_hamiltonian(const DonorSpec& spec, double t) {
  spec.validate();
  if (spec.frame == Frame::lab) throw std::invalid_argument("spec has no RF drive (frame = lab)");
  const auto ops = make_spin_operators(spec.spin);
  DonorSpec bare = spec;
  bare.hyperfine_a = 0.0;
  Matrix h = static_hamiltonian(bare, ops);
  const double ph = kTwoPi * spec.rf.f_rf * t + spec.rf.phase;
  const double am = std::cos(kTwoPi * spec.drive_freq * t + spec.drive_phase);
  const double amp = spec.gamma_n * (-spec.rf.b1_i * std::sin(ph) + spec.rf.b1_q * am * std::cos(ph));
  const Vec3 axis(std::cos(spec.rf.axis_angle), std::sin(spec.rf.axis_angle), 0.0);
  h += amp * ops.along(axis);
  return h;
}

RwaReduction rwa_reduce(const DonorSpec& spec) {
  spec.validate();
  if (spec.frame == Frame::lab) throw std::invalid_argument("rwa_reduce needs an RF-dressed spec");
  const auto ops = make_spin_operators(spec.spin);
  RwaReduction red;
  red.spec = spec;
  red.spec.frame = Frame::rwa;

  // rotational average of the quadrupole tensor about z
  const Eigen::Matrix3d a = quadrupole_tensor(spec.q, spec.eta, spec.quad_axes);
  const double transverse = 0.5 * (a(0, 0) + a(1, 1));
  red.beta_eff = a(2, 2) - transverse;
  red.offset = transverse * spec.spin.casimir();
  red.detuning = spec.rf.f_rf - spec.gamma_n * spec.b0;
  red.alpha_eff = 0.5 * spec.gamma_n * spec.rf.b1_i;
  red.drive_eff = 0.5 * spec.gamma_n * spec.rf.b1_q;

  const double mis = spec.rf.phase - spec.rf.axis_angle;
  red.static_part = red.detuning * ops.z + red.beta_eff * ops.z * ops.z -
                    red.alpha_eff * (std::sin(mis) * ops.x + std::cos(mis) * ops.y);
  red.drive_part = red.drive_eff * (std::cos(mis) * ops.x - std::sin(mis) * ops.y);
  return red;
}

Matrix rwa_hamiltonian(const RwaReduction& red, double t) {
  const double c = std::cos(kTwoPi * red.spec.drive_freq * t + red.spec.drive_phase);
  return red.static_part + c * red.drive_part;
}

Matrix rotating_frame_operator(const SpinOperators& ops, double f_rf, double t) {
  const int d = ops.spin.dim();
  Vector diag(d);
  for (int k = 0; k < d; ++k) diag(k) = std::polar(1.0, -kTwoPi * f_rf * t * ops.z(k, k).real());
  return diag.asDiagonal();
}

Matrix build_hamiltonian(const DonorSpec& spec, double t) {
  switch (spec.frame) {
    case Frame::lab:
      return build_lab_hamiltonian(spec, t);
    case Frame::rf:
      return build_rf_hamiltonian(spec, t);
    case Frame::rwa:
      return rwa_hamiltonian(rwa_reduce(spec), t);
  }
  throw std::invalid_argument("unknown frame");
}

double drive_period(const DonorSpec& spec) {
  if (!(spec.drive_freq > 0.0)) throw std::invalid_argument("drive frequency must be positive");
  return 1.0 / spec.drive_freq;
}

Matrix segmented_propagator(const std::function<Matrix(double)>& hamiltonian, double t0,
                            double duration, int n_segments, FloquetRule rule) {
  if (n_segments < 1) throw std::invalid_argument("n_segments must be >= 1");
  if (!(duration > 0.0)) throw std::invalid_argument("propagation time must be positive");
  const double h = duration / n_segments;
  Matrix u;
  for (int k = 0; k < n_segments; ++k) {
    const double ts = t0 + k * h;
    Matrix step;
    switch (rule) {
      case FloquetRule::left_endpoint:
        step = unitary_exp(hamiltonian(ts), h);
        break;
      case FloquetRule::midpoint:
        step = unitary_exp(hamiltonian(ts + 0.5 * h), h);
        break;
      case FloquetRule::magnus4: {
        // Blanes-Moan commutator-free scheme on the two Gauss points
        const double r3 = std::sqrt(3.0);
        const Matrix h1 = hamiltonian(ts + (0.5 - r3 / 6.0) * h);
        const Matrix h2 = hamiltonian(ts + (0.5 + r3 / 6.0) * h);
        const double a1 = 0.25 - r3 / 6.0;
        const double a2 = 0.25 + r3 / 6.0;
        step = unitary_exp(a1 * h1 + a2 * h2, h) * unitary_exp(a2 * h1 + a1 * h2, h);
        break;
      }
    }
    u = k == 0 ? step : Matrix(step * u);
  }
  return u;
}

FloquetOperator floquet(const DonorSpec& spec, int n_segments, FloquetRule rule) {
  spec.validate();
  if (n_segments < 1) throw std::invalid_argument("n_segments must be >= 1");
  const double tau = drive_period(spec);
  std::function<Matrix(double)> ham;
  if (spec.frame == Frame::lab) {
    const auto ops = make_spin_operators(spec.spin);
    const Matrix h0 = static_hamiltonian(spec, ops);
    const Matrix v = (-spec.gamma_n * spec.b1) * ops.along(spec.b1_axis);
    ham = [h0, v, &spec](double t) -> Matrix {
      return h0 + std::cos(kTwoPi * spec.drive_freq * t + spec.drive_phase) * v;
    };
  } else if (spec.frame == Frame::rwa) {
    const RwaReduction red = rwa_reduce(spec);
    ham = [red](double t) -> Matrix { return rwa_hamiltonian(red, t); };
  } else {
    throw std::invalid_argument("floquet: the RF-dressed lab Hamiltonian is not periodic in 1/f");
  }
  const Matrix raw = segmented_propagator(ham, 0.0, tau, n_segments, rule);
  if (unitarity_error(raw) > 1e-10) throw NumericalError("floquet: propagator lost unitarity");
  // Round-off from thousands of factors leaves ~1e-13 non-unitarity, which
  // compounds over 1e4 applications; snap to the nearest unitary (polar factor).
  Eigen::JacobiSVD<Matrix> svd(raw, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return FloquetOperator{svd.matrixU() * svd.matrixV().adjoint(), tau, n_segments, rule};
}

double fold_quasienergy(double e, double period) {
  const double zone = 1.0 / period;
  double x = std::remainder(e, zone);  // [-zone/2, zone/2]
  if (x <= -0.5 * zone) x += zone;
  return x;
}

double quasienergy_distance(double a, double b, double period) {
  return std::abs(std::remainder(a - b, 1.0 / period));
}

FloquetEigensystem floquet_eigensystem(const FloquetOperator& f) {
  if (f.matrix.rows() != f.matrix.cols() || f.matrix.rows() == 0) {
    throw std::invalid_argument("floquet_eigensystem: matrix must be square");
  }
  if (unitarity_error(f.matrix) > 1e-9) {
    throw std::invalid_argument("floquet_eigensystem: operator is not unitary");
  }
  if (!(f.period > 0.0)) throw std::invalid_argument("floquet_eigensystem: period must be positive");
  // the Schur form of a normal matrix is diagonal with a unitary basis,
  // which stays orthonormal inside degenerate eigenspaces
  Eigen::ComplexSchur<Matrix> schur(f.matrix);
  if (schur.info() != Eigen::Success) throw NumericalError("Schur decomposition failed");
  const Matrix& t = schur.matrixT();
  const Matrix& z = schur.matrixU();
  const Eigen::Index d = t.rows();
  std::vector<double> eps(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    eps[i] = fold_quasienergy(-std::arg(t(i, i)) / (kTwoPi * f.period), f.period);
  }
  std::vector<Eigen::Index> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return eps[a] < eps[b]; });
  FloquetEigensystem out;
  out.period = f.period;
  out.quasienergies.resize(d);
  out.eigenstates.resize(d, d);
  for (Eigen::Index c = 0; c < d; ++c) {
    out.quasienergies(c) = eps[order[c]];
    auto col = out.eigenstates.col(c);
    col = z.col(order[c]);
    const double cmax = col.cwiseAbs().maxCoeff();
    for (Eigen::Index r = 0; r < d; ++r) {
      if (std::abs(col(r)) > 1e-8 * cmax) {
        col *= std::conj(col(r)) / std::abs(col(r));
        break;
      }
    }
  }
  return out;
}

Vector evolve(const FloquetOperator& f, const Vector& psi0, int n_periods) {
  if (psi0.size() != f.matrix.rows()) throw std::invalid_argument("evolve: dimension mismatch");
  if (n_periods < 0) throw std::invalid_argument("evolve: n_periods must be >= 0");
  Vector psi = psi0;
  for (int k = 0; k < n_periods; ++k) psi = f.matrix * psi;
  return psi;
}

std::vector<double> overlap_trace(const FloquetOperator& f, const Vector& psi0, int n_periods) {
  if (psi0.size() != f.matrix.rows()) throw std::invalid_argument("overlap_trace: dimension mismatch");
  if (n_periods < 0) throw std::invalid_argument("overlap_trace: n_periods must be >= 0");
  std::vector<double> out;
  out.reserve(n_periods + 1);
  Vector psi = psi0;
  out.push_back(std::abs(psi0.dot(psi)));
  for (int k = 0; k < n_periods; ++k) {
    psi = f.matrix * psi;
    out.push_back(std::abs(psi0.dot(psi)));
  }
  return out;
}

std::vector<double> overlap_trace(const DonorSpec& spec, const Vector& psi0, int n_periods,
                                  int n_segments) {
  return overlap_trace(floquet(spec, n_segments), psi0, n_periods);
}

TunnelingResult tunneling_frequency(const FloquetEigensystem& es, const Vector& psi0,
                                    double min_weight) {
  if (psi0.size() != es.eigenstates.rows()) {
    throw std::invalid_argument("tunneling_frequency: dimension mismatch");
  }
  const RealVector w = (es.eigenstates.adjoint() * psi0).cwiseAbs2();
  std::vector<int> order(w.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return w(a) > w(b); });
  if (order.size() < 2) throw NotTwoComponentError("not a two-component state (dimension < 2)");
  TunnelingResult r;
  r.state_a = order[0];
  r.state_b = order[1];
  r.weight_a = w(order[0]);
  r.weight_b = w(order[1]);
  if (r.weight_a + r.weight_b < min_weight) {
    throw NotTwoComponentError("not a two-component state: dominant Floquet weight " +
                               std::to_string(r.weight_a + r.weight_b) + " < " +
                               std::to_string(min_weight));
  }
  r.frequency = quasienergy_distance(es.quasienergies(r.state_a), es.quasienergies(r.state_b),
                                     es.period);
  return r;
}

TunnelingResult tunneling_frequency(const DonorSpec& spec, const Vector& psi0, int n_segments,
                                    double min_weight) {
  return tunneling_frequency(floquet_eigensystem(floquet(spec, n_segments)), psi0, min_weight);
}

SpectralPeak spectral_peak(const std::vector<double>& series, double period) {
  const int n = static_cast<int>(series.size());
  if (n < 4) throw std::invalid_argument("spectral_peak: need at least 4 samples");
  if (!(period > 0.0)) throw std::invalid_argument("spectral_peak: period must be positive");
  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / n;
  std::vector<double> in(n);
  for (int i = 0; i < n; ++i) in[i] = series[i] - mean;
  const int nc = n / 2 + 1;
  std::vector<fftw_complex> out(nc);
  {
    // FFTW planning is not thread-safe
    static std::mutex plan_mutex;
    std::lock_guard lock(plan_mutex);
    fftw_plan plan = fftw_plan_dft_r2c_1d(n, in.data(), out.data(), FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
  }
  SpectralPeak peak;
  peak.bin_width = 1.0 / (n * period);
  int best = 1;
  double best_power = -1.0;
  for (int k = 1; k < nc; ++k) {
    const double p = out[k][0] * out[k][0] + out[k][1] * out[k][1];
    if (p > best_power) {
      best_power = p;
      best = k;
    }
  }
  peak.frequency = best * peak.bin_width;
  peak.power = best_power;
  return peak;
}

void FluctuationSpec::validate() const {
  if (!std::isfinite(mean)) throw std::invalid_argument("fluctuation mean must be finite");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("sigma must be >= 0");
  if (n_levels < 1) throw std::invalid_argument("n_levels must be >= 1");
  if (n_sequences < 1) throw std::invalid_argument("n_sequences must be >= 1");
  if (n_periods < 0) throw std::invalid_argument("n_periods must be >= 0");
}

std::vector<double> FluctuationSpec::levels() const {
  std::vector<double> v(n_levels, mean);
  if (n_levels > 1) {
    for (int j = 0; j < n_levels; ++j) v[j] = mean - 3.0 * sigma + 6.0 * sigma * j / (n_levels - 1);
  }
  return v;
}

int FluctuationSpec::level_index(std::uint64_t member, std::uint64_t period) const {
  if (n_levels == 1) return 0;
  CounterRng rng(rng_seed, member, period);
  const double z = std::clamp(rng.normal(), -3.0, 3.0);
  const int idx = static_cast<int>(std::lround((z + 3.0) / 6.0 * (n_levels - 1)));
  return std::clamp(idx, 0, n_levels - 1);
}

SphereDirection SphereGrid::cell(int i, int j) const {
  return SphereDirection((i + 0.5) * kPi / n_theta, (j + 0.5) * kTwoPi / n_phi);
}

double SphereGrid::area_weight(int i) const { return std::sin((i + 0.5) * kPi / n_theta); }

DonorSpec with_parameter(const DonorSpec& spec, FluctuatingParameter p, double value) {
  DonorSpec s = spec;
  switch (p) {
    case FluctuatingParameter::q:
      s.q = value;
      break;
    case FluctuatingParameter::b0:
      s.b0 = value;
      if (s.frame != Frame::lab) s.rf.detuning_tolerance = std::numeric_limits<double>::infinity();
      break;
    case FluctuatingParameter::b1:
      if (s.frame == Frame::lab) {
        s.b1 = value;
      } else {
        s.rf.b1_i = value;
      }
      break;
  }
  return s;
}

std::vector<Matrix> fluctuation_floquets(const DonorSpec& spec, const FluctuationSpec& fluct,
                                         int n_segments, int workers) {
  fluct.validate();
  const auto values = fluct.levels();
  std::vector<Matrix> out(values.size());
  parallel_for(values.size(), workers, [&](std::size_t j) {
    out[j] = floquet(with_parameter(spec, fluct.parameter, values[j]), n_segments).matrix;
  });
  return out;
}

Matrix ensemble_member_propagator(const std::vector<Matrix>& level_floquets,
                                  const FluctuationSpec& fluct, std::uint64_t member) {
  if (static_cast<int>(level_floquets.size()) != fluct.n_levels) {
    throw std::invalid_argument("one Floquet operator per fluctuation level is required");
  }
  const Eigen::Index d = level_floquets.front().rows();
  Matrix u = Matrix::Identity(d, d);
  for (int p = 0; p < fluct.n_periods; ++p) {
    u = level_floquets[fluct.level_index(member, p)] * u;
  }
  return u;
}

PurityMap purity_map(const DonorSpec& spec, const FluctuationSpec& fluct, const SphereGrid& grid,
                     int workers, int n_segments) {
  spec.validate();
  fluct.validate();
  if (grid.n_theta < 1 || grid.n_phi < 1) throw std::invalid_argument("grid must be non-empty");
  const int d = spec.spin.dim();
  const int g = grid.size();

  Matrix seeds(d, g);
  for (int i = 0; i < grid.n_theta; ++i) {
    for (int j = 0; j < grid.n_phi; ++j) seeds.col(i * grid.n_phi + j) = spin_coherent_state(spec.spin, grid.cell(i, j));
  }

  const auto level_f = fluctuation_floquets(spec, fluct, n_segments, workers);

  // accumulate sum_m |psi_m><psi_m| per grid point in member order
  std::vector<Matrix> rho(g, Matrix::Zero(d, d));
  const int batch = std::max(1, workers) * 4;
  for (int start = 0; start < fluct.n_sequences; start += batch) {
    const int count = std::min(batch, fluct.n_sequences - start);
    std::vector<Matrix> finals(count);
    parallel_for(count, workers, [&](std::size_t b) {
      finals[b] = ensemble_member_propagator(level_f, fluct, start + b) * seeds;
    });
    parallel_for(g, workers, [&](std::size_t c) {
      for (int b = 0; b < count; ++b) rho[c].noalias() += finals[b].col(c) * finals[b].col(c).adjoint();
    });
  }

  PurityMap out{grid, std::vector<double>(g)};
  const double norm = 1.0 / fluct.n_sequences;
  for (int c = 0; c < g; ++c) out.purity[c] = purity(rho[c] * norm);
  return out;
}

double quadrupole_strength(double qn, double vzz, double gamma_s, SpinQuantumNumber spin) {
  if (spin.two_i() < 2) {
    throw std::invalid_argument("spin 1/2 has no quadrupole moment");
  }
  const double i = spin.value();
  return 3.0 * (1.0 - gamma_s) * kElementaryCharge * qn * vzz / (4.0 * i * (2.0 * i - 1.0) * kPlanck);
}

double field_gradient_for(double q, double qn, double gamma_s, SpinQuantumNumber spin) {
  const double per_unit = quadrupole_strength(qn, 1.0, gamma_s, spin);
  if (per_unit == 0.0) throw std::invalid_argument("quadrupole strength does not depend on Vzz");
  return q / per_unit;
}

}  // namespace driventop
