// NMR and ESR line spectra of donor spins, field-magnitude and
// field-orientation scans, and quadrupole estimation from resolved lines.
#pragma once

#include <string>
#include <vector>

#include "driventop/quantum.hpp"

namespace driventop {

struct SpectrumLine {
  double frequency = 0.0;  // Hz
  double intensity = 0.0;  // |<k'|I_probe|k>|^2 over the largest bare-ladder element
  int lower = 0;           // level indices, ascending energy
  int upper = 0;
};

struct SpectrumOptions {
  double intensity_floor = 1e-4;
  /// Levels closer than this (relative to the spectral scale) count as degenerate.
  double degeneracy_tol = 1e-9;
};

/// max_m |<m+1|Iy|m>|^2 = (I(I+1) - m(m+1))/4 maximised over m.
double ladder_intensity_scale(SpinQuantumNumber spin);

/// Lines of the static Hamiltonian (the drive is ignored), probed along
/// spec.b1_axis, sorted by frequency. Degenerate levels are resolved by
/// diagonalising n0.I inside each degenerate block.
std::vector<SpectrumLine> nmr_spectrum(const DonorSpec& spec, const SpectrumOptions& opt = {});

struct ScanPoint {
  double parameter = 0.0;  // B0 in T, or rotation angle in rad
  std::vector<SpectrumLine> lines;
};

struct SpectrumScan {
  std::string axis;  // description of the scanned quantity
  std::vector<ScanPoint> points;
};

SpectrumScan scan_field_magnitude(const DonorSpec& spec, const std::vector<double>& b0_values,
                                  const SpectrumOptions& opt = {}, int workers = 1);

/// Rotates B0 relative to the quadrupole frame: the field direction in
/// (x', y', z') components is cos(chi) u + sin(chi) v, with u and v spanning
/// the rotation plane. The probe coil stays along u x v, i.e. perpendicular to
/// B0 throughout. Lab B0 and probe axes of `spec` must be perpendicular.
SpectrumScan scan_field_orientation(const DonorSpec& spec, const Vec3& u, const Vec3& v,
                                    const std::vector<double>& angles, const SpectrumOptions& opt = {},
                                    int workers = 1);

/// Spec whose B0 points along `dir_in_quad_frame` (x', y', z' components) with
/// the probe axis along `probe_in_quad_frame`; lab B0 and probe stay put.
DonorSpec orient_field(const DonorSpec& spec, const Vec3& dir_in_quad_frame, const Vec3& probe_in_quad_frame);

/// Continuous branches through a scan: nearest-frequency continuation, ties
/// broken towards the stronger line. Each branch has one entry per scan
/// point, NaN where the branch has no line.
std::vector<std::vector<double>> track_branches(const SpectrumScan& scan);

/// Spread (max - min frequency) of the lines at or above `min_intensity`.
double line_spread(const std::vector<SpectrumLine>& lines, double min_intensity = 0.0);

class InsufficientLinesError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct QuadrupoleEstimate {
  double q = 0.0;         // Hz, half the fitted line spacing
  double spacing = 0.0;   // Hz
  double residual = 0.0;  // rms deviation of the lines from the fitted ladder, Hz
  int n_lines = 0;
};

/// Fits a uniform ladder to the 2I strongest lines of an aligned (B0 || z')
/// spectrum. Throws InsufficientLinesError with fewer than 3 distinct frequencies.
QuadrupoleEstimate estimate_quadrupole(const std::vector<SpectrumLine>& lines, SpinQuantumNumber spin,
                                       double intensity_floor = 1e-4);

struct NeutralDonorOptions {
  double gamma_e = 27.97e9;  // Hz/T, donor-bound electron
  SpectrumOptions spectrum{};
};

struct NeutralDonorSpectrum {
  std::vector<SpectrumLine> esr;            // full A S.I treatment
  std::vector<SpectrumLine> esr_effective;  // secular A Sz Iz approximation
  std::vector<SpectrumLine> nmr_up;         // nuclear flips in the upper electron manifold
  std::vector<SpectrumLine> nmr_down;
  double max_esr_deviation = 0.0;    // Hz, full vs effective ESR lines
  double max_level_deviation = 0.0;  // Hz, sorted energies
};

/// Electron spin 1/2 coupled to the nucleus: H = gamma_e B0 (n0.S) + A S.I
/// + nuclear terms. ESR intensities are normalised to |<up|S_probe|down>|^2 = 1/4.
NeutralDonorSpectrum neutral_donor_spectrum(const DonorSpec& spec, const NeutralDonorOptions& opt = {});

}  // namespace driventop
