// Pure-state preparation by sequences of single-frequency pulses, compiled in
// reverse time from the target down to the ground state, and a full
// time-dependent simulator to verify them.
//
// Pulse j runs from its start time t_j and applies
//   -gamma_n * amplitude * cos(2 pi f (t - t_j) + phase) (n1.I)
// on top of the static Hamiltonian, n1 being spec.b1_axis. Pulses follow one
// another without gaps; the target is reached at the end of the sequence.
#pragma once

#include <stdexcept>
#include <vector>

#include "driventop/quantum.hpp"

namespace driventop {

struct Pulse {
  double frequency = 0.0;  // Hz
  double duration = 0.0;   // s
  double phase = 0.0;      // rad, referenced to the pulse start
  double amplitude = 0.0;  // T
  int lower = 0;           // eigenstate indices (ascending energy) of the driven pair
  int upper = 0;
};

struct PulseSequence {
  std::vector<Pulse> pulses;
  DonorSpec spec;
  Vector target;

  double total_duration() const;
};

struct CompileReport {
  /// |<target|psi>| of the ideal isolated-transition model driven by the sequence.
  double predicted_fidelity = 1.0;
  /// Eigenbasis populations, starting from the target and after each reverse step.
  std::vector<RealVector> populations;
};

struct CompiledSequence {
  PulseSequence sequence;
  CompileReport report;
};

class AddressabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CompileOptions {
  double population_floor = 1e-12;
  /// A pulse is rejected when another coupled transition lies within this
  /// many inverse pi-pulse durations of its frequency.
  double addressability_factor = 2.0;
  /// Transitions with |<e_j|n1.I|e_l>| below this fraction of the driven
  /// element are not counted as competitors.
  double coupling_floor = 1e-6;
};

/// Rabi angular frequency 2 pi gamma_n b1 |<e_lower|n1.I|e_upper>| (rad/s).
double rabi_rate(const DonorSpec& spec, double b1, int lower, int upper);

/// Lowest-energy eigenstate of the static Hamiltonian.
Vector ground_state(const DonorSpec& spec);

CompiledSequence compile(const Vector& target, const DonorSpec& spec, double b1, const CompileOptions& opt = {});

struct SimulateOptions {
  /// Segments per period of the fastest frequency (pulse or static transition).
  int segments_per_period = 200;
  FloquetRule rule = kDefaultFloquetRule;
};

/// Propagates psi0 through the sequence under the full lab Hamiltonian.
/// Whole drive periods are applied as powers of the one-period propagator,
/// which is exact for the periodic pulse Hamiltonian.
Vector simulate(const PulseSequence& seq, const DonorSpec& spec, const Vector& psi0,
                const SimulateOptions& opt = {});

/// Fidelity with the target after each pulse, the state then left idle
/// (static evolution only) until the end of the sequence.
std::vector<double> intermediate_fidelities(const PulseSequence& seq, const DonorSpec& spec, const Vector& psi0,
                                            const SimulateOptions& opt = {});

/// |<psi|target>|.
double fidelity(const Vector& psi, const Vector& target);

}  // namespace driventop
