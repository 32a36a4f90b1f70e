#include "driventop/donors.hpp"

#include <stdexcept>

namespace driventop {

const std::vector<DonorPreset>& donor_presets() {
  static const std::vector<DonorPreset> presets{
      {"P31", SpinQuantumNumber(1), 45.59, 117.53e6, 17.26e6, std::nullopt, std::nullopt},
      {"As75", SpinQuantumNumber(3), 53.76, 198.35e6, 7.31e6, 0.314e-28, 0.314e-28},
      {"Sb121", SpinQuantumNumber(5), 42.74, 186.80e6, 10.26e6, -0.54e-28, -0.36e-28},
      {"Sb123", SpinQuantumNumber(7), 42.74, 101.52e6, 5.55e6, -0.69e-28, -0.49e-28},
      {"Bi209", SpinQuantumNumber(9), 70.98, 1475.4e6, 6.96e6, -0.77e-28, -0.37e-28},
  };
  return presets;
}

const DonorPreset& donor_preset(std::string_view name) {
  for (const auto& d : donor_presets()) {
    if (d.name == name) return d;
  }
  throw std::invalid_argument("unknown donor '" + std::string(name) + "' (expected P31, As75, Sb121, Sb123 or Bi209)");
}

DonorSpec ionized_spec(const DonorPreset& d, double b0, double q, double b1, double drive_freq) {
  return DonorSpec::driven_top(d.spin, d.gamma_n, b0, q, b1, drive_freq);
}

}  // namespace driventop
