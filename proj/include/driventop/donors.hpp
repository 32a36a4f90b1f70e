// Group-V donors in silicon: spin, hyperfine constant, nuclear gyromagnetic
// ratio and the reported range of nuclear quadrupole moments.
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "driventop/quantum.hpp"

namespace driventop {

struct DonorPreset {
  std::string name;
  SpinQuantumNumber spin{1};
  double binding_energy_mev = 0.0;
  double hyperfine_a = 0.0;  // Hz
  double gamma_n = 0.0;      // Hz/T
  /// Quadrupole moment range in m^2 (equal bounds for a single value); empty for I = 1/2.
  std::optional<double> qn_min;
  std::optional<double> qn_max;
};

/// P31, As75, Sb121, Sb123, Bi209.
const std::vector<DonorPreset>& donor_presets();

/// Throws std::invalid_argument for an unknown name.
const DonorPreset& donor_preset(std::string_view name);

/// Ionized donor in the driven-top geometry with the preset's spin and gamma_n.
DonorSpec ionized_spec(const DonorPreset& d, double b0, double q, double b1, double drive_freq);

}  // namespace driventop
