#include "driventop/stateprep.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>

namespace driventop {

namespace {

using cd = std::complex<double>;

struct StaticBasis {
  SpinOperators ops;
  Matrix h0;
  Eigensystem es;
  Matrix coupling;  // <e_j| n1.I |e_l>
};

StaticBasis static_basis(const DonorSpec& spec) {
  spec.validate();
  StaticBasis b{make_spin_operators(spec.spin), {}, {}, {}};
  b.h0 = static_hamiltonian(spec, b.ops);
  b.es = hermitian_eigensystem(b.h0);
  b.coupling = b.es.vectors.adjoint() * b.ops.along(spec.b1_axis) * b.es.vectors;
  return b;
}

/// Inverse of the ideal resonant two-level evolution in the interaction picture,
/// (c_hi, c_lo) -> [[cos, i sin e^{-i chi}], [i sin e^{i chi}, cos]] (c_hi, c_lo).
void undo_ideal(Vector& c, int hi, int lo, double angle, double chi) {
  const double co = std::cos(angle);
  const double si = -std::sin(angle);
  const cd a = c(hi);
  const cd b = c(lo);
  c(hi) = co * a + cd(0, si) * std::polar(1.0, -chi) * b;
  c(lo) = cd(0, si) * std::polar(1.0, chi) * a + co * b;
}

Matrix unitary_power(const Matrix& u, long long n) {
  Eigen::ComplexSchur<Matrix> schur(u);
  const Matrix& t = schur.matrixT();
  const Matrix& z = schur.matrixU();
  Eigen::VectorXcd lam(t.rows());
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    lam(i) = std::polar(1.0, static_cast<double>(n) * std::arg(t(i, i)));
  }
  return z * lam.asDiagonal() * z.adjoint();
}

Matrix free_propagator(const StaticBasis& b, double t) {
  Eigen::VectorXcd ph(b.es.values.size());
  for (Eigen::Index i = 0; i < ph.size(); ++i) ph(i) = std::polar(1.0, -2.0 * kPi * b.es.values(i) * t);
  return b.es.vectors * ph.asDiagonal() * b.es.vectors.adjoint();
}

Matrix pulse_propagator(const StaticBasis& b, const DonorSpec& spec, const Pulse& p, const SimulateOptions& opt) {
  if (!(p.duration > 0.0) || !(p.frequency > 0.0) || !(p.amplitude > 0.0)) {
    throw std::invalid_argument("pulse duration, frequency and amplitude must be positive");
  }
  const double spread = b.es.values.maxCoeff() - b.es.values.minCoeff();
  const double f_fast = std::max(p.frequency, spread);
  const double period = 1.0 / p.frequency;
  const int per_period = static_cast<int>(std::ceil(opt.segments_per_period * f_fast / p.frequency));
  const double n_periods = std::floor(p.duration / period);
  if (per_period <= 0 || period / per_period <= 0.0 || n_periods > 9e15) {
    throw NumericalError("segmentation underflow");
  }
  const Matrix d = -spec.gamma_n * p.amplitude * b.ops.along(spec.b1_axis);
  const auto h = [&](double t) -> Matrix {
    return b.h0 + std::cos(2.0 * kPi * p.frequency * t + p.phase) * d;
  };
  Matrix u = Matrix::Identity(b.h0.rows(), b.h0.cols());
  if (n_periods > 0) {
    u = unitary_power(segmented_propagator(h, 0.0, period, per_period, opt.rule), static_cast<long long>(n_periods));
  }
  const double rest = p.duration - n_periods * period;
  if (rest > 0.0) {
    const int n_rest = std::max(1, static_cast<int>(std::ceil(per_period * rest / period)));
    if (rest / n_rest <= 0.0) throw NumericalError("segmentation underflow");
    u = segmented_propagator(h, 0.0, rest, n_rest, opt.rule) * u;
  }
  return u;
}

/// Forward run in the interaction picture of the static Hamiltonian, keeping
/// the co-rotating part of every coupled transition (not just the driven one).
/// Independent of the lab-frame simulator; it captures off-resonant leakage
/// and light shifts but not Bloch-Siegert terms. Transitions whose largest
/// off-resonant excitation (gamma_n b1 |D| / detuning)^2 is below
/// kNegligibleExcitation are left out, which keeps the step count down.
constexpr double kNegligibleExcitation = 1e-7;

double rwa_prediction(const StaticBasis& b, const DonorSpec& spec, const PulseSequence& seq) {
  const int d = static_cast<int>(b.es.values.size());
  const double total = seq.total_duration();
  Vector c = Vector::Zero(d);
  c(0) = 1.0;
  double start = 0.0;
  for (const auto& p : seq.pulses) {
    Matrix base = Matrix::Zero(d, d);  // co-rotating couplings at the pulse start, Hz
    RealVector detuning = RealVector::Zero(d * d);
    double fastest = 0.0;
    for (int j = 0; j < d; ++j) {
      for (int l = j + 1; l < d; ++l) {
        const double w = b.es.values(l) - b.es.values(j);
        const double rate = spec.gamma_n * p.amplitude * std::abs(b.coupling(j, l));
        const bool driven = j == p.lower && l == p.upper;
        if (!driven && rate * rate < kNegligibleExcitation * (p.frequency - w) * (p.frequency - w)) continue;
        detuning(j * d + l) = p.frequency - w;
        fastest = std::max(fastest, std::abs(p.frequency - w));
        const double lead = p.phase + 2.0 * kPi * std::fmod(w * (total - start), 1.0);
        base(j, l) = -0.5 * spec.gamma_n * p.amplitude * b.coupling(j, l) * std::polar(1.0, lead);
      }
    }
    const auto h = [&](double s) -> Matrix {
      Matrix m = Matrix::Zero(d, d);
      for (int j = 0; j < d; ++j) {
        for (int l = j + 1; l < d; ++l) {
          m(j, l) = base(j, l) * std::polar(1.0, 2.0 * kPi * detuning(j * d + l) * s);
          m(l, j) = std::conj(m(j, l));
        }
      }
      return m;
    };
    const int n = 16 + static_cast<int>(std::ceil(12.0 * fastest * p.duration));
    c = segmented_propagator(h, 0.0, p.duration, n) * c;
    start += p.duration;
  }
  return std::min(1.0, std::abs(c.dot(b.es.vectors.adjoint() * seq.target)));
}

void check_dimension(const Vector& v, const DonorSpec& spec, const char* what) {
  if (v.size() != spec.spin.dim()) throw std::invalid_argument(std::string(what) + " has the wrong dimension");
}

}  // namespace

double PulseSequence::total_duration() const {
  double t = 0.0;
  for (const auto& p : pulses) t += p.duration;
  return t;
}

double rabi_rate(const DonorSpec& spec, double b1, int lower, int upper) {
  const auto b = static_basis(spec);
  const int d = static_cast<int>(b.es.values.size());
  if (lower < 0 || upper < 0 || lower >= d || upper >= d) throw std::out_of_range("level index out of range");
  return 2.0 * kPi * spec.gamma_n * b1 * std::abs(b.coupling(lower, upper));
}

Vector ground_state(const DonorSpec& spec) {
  return hermitian_eigensystem(static_hamiltonian(spec)).vectors.col(0);
}

CompiledSequence compile(const Vector& target, const DonorSpec& spec, double b1, const CompileOptions& opt) {
  check_dimension(target, spec, "target");
  if (!(b1 > 0.0)) throw std::invalid_argument("b1 must be positive");
  if (std::abs(target.norm() - 1.0) > 1e-9) throw std::invalid_argument("target must be normalised");
  const auto b = static_basis(spec);
  const int d = static_cast<int>(b.es.values.size());
  const double tol = 1e-9 * std::max(1.0, b.es.values.cwiseAbs().maxCoeff());

  // Interaction-picture amplitudes referenced to the end of the sequence.
  Vector a = b.es.vectors.adjoint() * target;
  for (int k = 0; k < d; ++k) {
    if (std::norm(a(k)) < opt.population_floor) a(k) = 0.0;
  }

  std::vector<Pulse> reversed;
  CompileReport report;
  report.populations.push_back(a.cwiseAbs2());

  double clock = 0.0;  // reverse time, <= 0
  while (true) {
    int hi = -1;
    for (int k = d - 1; k > 0; --k) {
      if (a(k) != 0.0) {
        hi = k;
        break;
      }
    }
    if (hi < 0) break;
    int lo = 0;
    for (int k = 1; k < hi; ++k) {
      if (std::abs(b.coupling(k, hi)) > std::abs(b.coupling(lo, hi))) lo = k;
    }
    const double f = b.es.values(hi) - b.es.values(lo);
    const double m = std::abs(b.coupling(lo, hi));
    if (f <= tol) throw AddressabilityError("degenerate levels " + std::to_string(lo) + "," + std::to_string(hi));
    if (m == 0.0) throw AddressabilityError("level " + std::to_string(hi) + " is not coupled to any lower level");

    const double omega = 2.0 * kPi * spec.gamma_n * b1 * m;
    const double window = opt.addressability_factor * omega / kPi;  // factor / t_pi
    for (int j = 0; j < d; ++j) {
      for (int l = j + 1; l < d; ++l) {
        if (j == lo && l == hi) continue;
        if (std::abs(b.coupling(j, l)) < opt.coupling_floor * m) continue;
        const double fj = b.es.values(l) - b.es.values(j);
        if (std::abs(fj - f) < window) {
          throw AddressabilityError("transition " + std::to_string(lo) + "-" + std::to_string(hi) +
                                    " is not individually addressable");
        }
      }
    }

    const double angle = std::atan2(std::abs(a(hi)), std::abs(a(lo)));
    const double t_p = 2.0 * angle / omega;
    const double arg_hi = std::arg(a(hi));
    const double arg_lo = a(lo) == 0.0 ? 0.0 : std::arg(a(lo));
    const double chi = arg_lo - arg_hi + kPi / 2;
    const double delta = std::arg(b.coupling(lo, hi));
    const double start = clock - t_p;
    const double phase = std::remainder(chi - delta + 2.0 * kPi * std::fmod(f * start, 1.0), 2.0 * kPi);

    undo_ideal(a, hi, lo, angle, chi);
    a(hi) = 0.0;
    for (int k = 0; k < d; ++k) {
      if (std::norm(a(k)) < opt.population_floor) a(k) = 0.0;
    }
    report.populations.push_back(a.cwiseAbs2());
    reversed.push_back({f, t_p, phase < 0 ? phase + 2.0 * kPi : phase, b1, lo, hi});
    clock = start;
  }

  PulseSequence seq{{reversed.rbegin(), reversed.rend()}, spec, target};
  report.predicted_fidelity = rwa_prediction(b, spec, seq);
  return {std::move(seq), std::move(report)};
}

Vector simulate(const PulseSequence& seq, const DonorSpec& spec, const Vector& psi0, const SimulateOptions& opt) {
  check_dimension(psi0, spec, "initial state");
  if (opt.segments_per_period < 200) throw std::invalid_argument("at least 200 segments per period are required");
  const auto b = static_basis(spec);
  Vector psi = psi0;
  for (const auto& p : seq.pulses) psi = pulse_propagator(b, spec, p, opt) * psi;
  if (std::abs(psi.norm() - psi0.norm()) > 1e-9) throw NumericalError("norm not preserved by the pulse simulation");
  return psi;
}

std::vector<double> intermediate_fidelities(const PulseSequence& seq, const DonorSpec& spec, const Vector& psi0,
                                            const SimulateOptions& opt) {
  check_dimension(psi0, spec, "initial state");
  check_dimension(seq.target, spec, "target");
  const auto b = static_basis(spec);
  const double total = seq.total_duration();
  std::vector<double> out;
  Vector psi = psi0;
  double t = 0.0;
  for (const auto& p : seq.pulses) {
    psi = pulse_propagator(b, spec, p, opt) * psi;
    t += p.duration;
    out.push_back(fidelity(free_propagator(b, total - t) * psi, seq.target));
  }
  return out;
}

double fidelity(const Vector& psi, const Vector& target) {
  if (psi.size() != target.size()) throw std::invalid_argument("dimension mismatch");
  return std::min(1.0, std::abs(target.dot(psi)));
}

}  // namespace driventop
