#include "driventop/spectro.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "driventop/parallel.hpp"

namespace driventop {

namespace {

/// Rotates each block of (near-)degenerate eigenvectors onto eigenvectors of
/// `tiebreak` restricted to the block, so the basis is fixed by physics
/// rather than by the eigensolver.
void resolve_degeneracies(Eigensystem& es, const Matrix& tiebreak, double tol) {
  const Eigen::Index n = es.values.size();
  Eigen::Index start = 0;
  while (start < n) {
    Eigen::Index end = start + 1;
    while (end < n && es.values(end) - es.values(end - 1) <= tol) ++end;
    const Eigen::Index size = end - start;
    if (size > 1) {
      const Matrix block = es.vectors.middleCols(start, size);
      Matrix m = block.adjoint() * tiebreak * block;
      m = 0.5 * (m + m.adjoint());
      const auto sub = hermitian_eigensystem(m);
      es.vectors.middleCols(start, size) = block * sub.vectors;
    }
    start = end;
  }
}

double spectral_tolerance(const Eigensystem& es, double rel) {
  return rel * std::max(1.0, es.values.cwiseAbs().maxCoeff());
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

std::vector<SpectrumLine> lines_between(const Eigensystem& es, const Matrix& probe, double scale, double tol,
                                        double floor, const std::function<bool(int, int)>& allowed) {
  std::vector<SpectrumLine> lines;
  const Matrix m = es.vectors.adjoint() * probe * es.vectors;
  const int n = static_cast<int>(es.values.size());
  for (int k = 0; k < n; ++k) {
    for (int kp = k + 1; kp < n; ++kp) {
      const double df = es.values(kp) - es.values(k);
      if (df <= tol || !allowed(k, kp)) continue;
      const double inten = std::norm(m(kp, k)) / scale;
      if (inten >= floor) lines.push_back({df, inten, k, kp});
    }
  }
  std::sort(lines.begin(), lines.end(), [](const SpectrumLine& a, const SpectrumLine& b) {
    return a.frequency < b.frequency || (a.frequency == b.frequency && a.lower < b.lower);
  });
  return lines;
}

std::vector<SpectrumLine> strongest(std::vector<SpectrumLine> lines, std::size_t n) {
  std::stable_sort(lines.begin(), lines.end(),
                   [](const SpectrumLine& a, const SpectrumLine& b) { return a.intensity > b.intensity; });
  if (lines.size() > n) lines.resize(n);
  std::sort(lines.begin(), lines.end(),
            [](const SpectrumLine& a, const SpectrumLine& b) { return a.frequency < b.frequency; });
  return lines;
}

void check_unit(const Vec3& v, const char* what) {
  if (!v.allFinite() || std::abs(v.norm() - 1.0) > 1e-9) {
    throw std::invalid_argument(std::string(what) + " must be a unit vector");
  }
}

}  // namespace

double ladder_intensity_scale(SpinQuantumNumber spin) {
  const double i = spin.value();
  double best = 0.0;
  for (int k = 0; k < spin.two_i(); ++k) {
    const double m = -i + k;
    best = std::max(best, 0.25 * (i * (i + 1) - m * (m + 1)));
  }
  return best;
}

std::vector<SpectrumLine> nmr_spectrum(const DonorSpec& spec, const SpectrumOptions& opt) {
  spec.validate();
  const auto ops = make_spin_operators(spec.spin);
  auto es = hermitian_eigensystem(static_hamiltonian(spec, ops));
  const double tol = spectral_tolerance(es, opt.degeneracy_tol);
  resolve_degeneracies(es, ops.along(spec.b0_dir.unit_vector()), tol);
  return lines_between(es, ops.along(spec.b1_axis), ladder_intensity_scale(spec.spin), tol,
                       opt.intensity_floor, [](int, int) { return true; });
}

SpectrumScan scan_field_magnitude(const DonorSpec& spec, const std::vector<double>& b0_values,
                                  const SpectrumOptions& opt, int workers) {
  SpectrumScan scan;
  scan.axis = "b0_tesla";
  scan.points.resize(b0_values.size());
  parallel_for(b0_values.size(), workers, [&](std::size_t k) {
    DonorSpec s = spec;
    s.b0 = b0_values[k];
    scan.points[k] = {b0_values[k], nmr_spectrum(s, opt)};
  });
  return scan;
}

DonorSpec orient_field(const DonorSpec& spec, const Vec3& dir_in_quad_frame, const Vec3& probe_in_quad_frame) {
  const Vec3 d = dir_in_quad_frame;
  const Vec3 c = probe_in_quad_frame;
  check_unit(d, "field direction");
  check_unit(c, "probe direction");
  if (std::abs(d.dot(c)) > 1e-9) throw std::invalid_argument("field and probe must be perpendicular");
  const Vec3 b = spec.b0_dir.unit_vector();
  const Vec3 p = spec.b1_axis;
  if (std::abs(b.dot(p)) > 1e-9) throw std::invalid_argument("spec B0 and probe axes must be perpendicular");
  Eigen::Matrix3d from, to;
  from << d, c, d.cross(c);
  to << b, p, b.cross(p);
  const Eigen::Matrix3d g = to * from.transpose();
  DonorSpec out = spec;
  out.quad_axes = {g.col(0), g.col(1), g.col(2)};
  return out;
}

SpectrumScan scan_field_orientation(const DonorSpec& spec, const Vec3& u, const Vec3& v,
                                    const std::vector<double>& angles, const SpectrumOptions& opt,
                                    int workers) {
  if (u.norm() == 0.0 || !u.allFinite() || !v.allFinite()) throw std::invalid_argument("invalid rotation plane");
  const Vec3 e1 = u.normalized();
  const Vec3 v_perp = v - v.dot(e1) * e1;
  if (v_perp.norm() < 1e-9 * std::max(1.0, v.norm())) {
    throw std::invalid_argument("rotation plane vectors are parallel");
  }
  const Vec3 e2 = v_perp.normalized();
  const Vec3 normal = e1.cross(e2);
  for (std::size_t k = 1; k < angles.size(); ++k) {
    if (!(angles[k] > angles[k - 1])) throw std::invalid_argument("angles must be strictly increasing");
  }
  SpectrumScan scan;
  scan.axis = "angle_rad";
  scan.points.resize(angles.size());
  parallel_for(angles.size(), workers, [&](std::size_t k) {
    const Vec3 d = std::cos(angles[k]) * e1 + std::sin(angles[k]) * e2;
    scan.points[k] = {angles[k], nmr_spectrum(orient_field(spec, d, normal), opt)};
  });
  return scan;
}

std::vector<std::vector<double>> track_branches(const SpectrumScan& scan) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const std::size_t np = scan.points.size();
  std::vector<std::vector<double>> branches;
  for (std::size_t s = 0; s < np; ++s) {
    const auto& lines = scan.points[s].lines;
    struct Pair {
      double cost, intensity;
      std::size_t branch, line;
    };
    std::vector<Pair> pairs;
    if (s > 0) {
      for (std::size_t b = 0; b < branches.size(); ++b) {
        const double last = branches[b][s - 1];
        if (std::isnan(last)) continue;
        for (std::size_t l = 0; l < lines.size(); ++l) {
          pairs.push_back({std::abs(lines[l].frequency - last), lines[l].intensity, b, l});
        }
      }
    }
    std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
      return a.cost < b.cost || (a.cost == b.cost && a.intensity > b.intensity);
    });
    std::vector<bool> branch_used(branches.size(), false), line_used(lines.size(), false);
    for (auto& b : branches) b.push_back(nan);
    for (const auto& p : pairs) {
      if (branch_used[p.branch] || line_used[p.line]) continue;
      branch_used[p.branch] = line_used[p.line] = true;
      branches[p.branch][s] = lines[p.line].frequency;
    }
    for (std::size_t l = 0; l < lines.size(); ++l) {
      if (line_used[l]) continue;
      std::vector<double> b(s + 1, nan);
      b[s] = lines[l].frequency;
      branches.push_back(std::move(b));
    }
  }
  return branches;
}

double line_spread(const std::vector<SpectrumLine>& lines, double min_intensity) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& l : lines) {
    if (l.intensity < min_intensity) continue;
    lo = std::min(lo, l.frequency);
    hi = std::max(hi, l.frequency);
  }
  return hi >= lo ? hi - lo : 0.0;
}

QuadrupoleEstimate estimate_quadrupole(const std::vector<SpectrumLine>& lines, SpinQuantumNumber spin,
                                       double intensity_floor) {
  std::vector<SpectrumLine> kept;
  for (const auto& l : lines) {
    if (l.intensity >= intensity_floor) kept.push_back(l);
  }
  kept = strongest(std::move(kept), static_cast<std::size_t>(spin.two_i()));
  int distinct = 0;
  double fmax = 0.0;
  for (const auto& l : kept) fmax = std::max(fmax, l.frequency);
  for (std::size_t k = 0; k < kept.size(); ++k) {
    if (k == 0 || kept[k].frequency - kept[k - 1].frequency > 1e-9 * std::max(1.0, fmax)) ++distinct;
  }
  if (distinct < 3) {
    throw InsufficientLinesError("insufficient resolved lines: " + std::to_string(distinct) +
                                 " distinct frequencies above the intensity floor, need 3");
  }
  const int n = static_cast<int>(kept.size());
  const double kbar = 0.5 * (n - 1);
  double fbar = 0.0;
  for (const auto& l : kept) fbar += l.frequency / n;
  double sxy = 0.0, sxx = 0.0;
  for (int k = 0; k < n; ++k) {
    sxy += (k - kbar) * (kept[k].frequency - fbar);
    sxx += (k - kbar) * (k - kbar);
  }
  QuadrupoleEstimate est;
  est.spacing = sxy / sxx;
  est.q = 0.5 * std::abs(est.spacing);
  est.n_lines = n;
  double ss = 0.0;
  for (int k = 0; k < n; ++k) {
    const double r = kept[k].frequency - (fbar + est.spacing * (k - kbar));
    ss += r * r;
  }
  est.residual = std::sqrt(ss / n);
  return est;
}

NeutralDonorSpectrum neutral_donor_spectrum(const DonorSpec& spec, const NeutralDonorOptions& opt) {
  spec.validate();
  if (!(opt.gamma_e > 0.0)) throw std::invalid_argument("gamma_e must be positive");
  const auto nuc = make_spin_operators(spec.spin);
  const auto el = make_spin_operators(SpinQuantumNumber(1));
  const Matrix id_n = nuc.identity();
  const Matrix id_e = el.identity();
  const Vec3 n0 = spec.b0_dir.unit_vector();

  DonorSpec bare = spec;
  bare.hyperfine_a = 0.0;
  const Matrix h_nuc = kron(id_e, static_hamiltonian(bare, nuc));
  const Matrix s_n0 = kron(el.along(n0), id_n);
  const Matrix i_n0 = kron(id_e, nuc.along(n0));
  const Matrix zeeman_e = opt.gamma_e * spec.b0 * s_n0;
  const double a = spec.hyperfine_a;
  const Matrix full = zeeman_e + h_nuc +
                      a * (kron(el.x, nuc.x) + kron(el.y, nuc.y) + kron(el.z, nuc.z));
  const Matrix effective = zeeman_e + h_nuc + a * s_n0 * i_n0;

  const Matrix s_probe = kron(el.along(spec.b1_axis), id_n);
  const Matrix i_probe = kron(id_e, nuc.along(spec.b1_axis));
  const Matrix tiebreak = s_n0 + i_n0;
  const double nmr_scale = ladder_intensity_scale(spec.spin);
  const auto& so = opt.spectrum;

  auto analyse = [&](const Matrix& h, bool with_nmr, NeutralDonorSpectrum& out,
                     std::vector<SpectrumLine>& esr) -> Eigensystem {
    auto es = hermitian_eigensystem(h);
    const double tol = spectral_tolerance(es, so.degeneracy_tol);
    resolve_degeneracies(es, tiebreak, tol);
    const int d = static_cast<int>(es.values.size());
    std::vector<int> up(d);
    for (int k = 0; k < d; ++k) up[k] = expectation(s_n0, es.vectors.col(k)) > 0.0;
    esr = lines_between(es, s_probe, 0.25, tol, so.intensity_floor, [&](int i, int j) { return up[i] != up[j]; });
    if (with_nmr) {
      out.nmr_up = lines_between(es, i_probe, nmr_scale, tol, so.intensity_floor,
                                 [&](int i, int j) { return up[i] && up[j]; });
      out.nmr_down = lines_between(es, i_probe, nmr_scale, tol, so.intensity_floor,
                                   [&](int i, int j) { return !up[i] && !up[j]; });
    }
    return es;
  };

  NeutralDonorSpectrum out;
  const auto es_full = analyse(full, true, out, out.esr);
  const auto es_eff = analyse(effective, false, out, out.esr_effective);
  out.max_level_deviation = (es_full.values - es_eff.values).cwiseAbs().maxCoeff();
  const std::size_t n_allowed = static_cast<std::size_t>(spec.spin.dim());
  const auto a_lines = strongest(out.esr, n_allowed);
  const auto b_lines = strongest(out.esr_effective, n_allowed);
  if (a_lines.size() == b_lines.size()) {
    for (std::size_t k = 0; k < a_lines.size(); ++k) {
      out.max_esr_deviation = std::max(out.max_esr_deviation, std::abs(a_lines[k].frequency - b_lines[k].frequency));
    }
  } else {
    out.max_esr_deviation = std::numeric_limits<double>::infinity();
  }
  return out;
}

}  // namespace driventop
