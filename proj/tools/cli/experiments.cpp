#include "experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "driventop/classical.hpp"
#include "driventop/donors.hpp"
#include "driventop/parallel.hpp"
#include "driventop/quantum.hpp"
#include "driventop/spectro.hpp"
#include "driventop/stateprep.hpp"

namespace driventop::cli {

namespace {

using I64 = std::int64_t;

std::string schema(const std::string& name) { return name + "/" + std::to_string(kSchemaVersion); }

// ---------------------------------------------------------------- parameters

DonorPreset donor_from(const Params& p) {
  DonorPreset d = donor_preset(p.str("donor"));
  if (const I64 two_i = p.integer("two_i"); two_i != 0) {
    if (two_i < 1) throw ConfigError("two_i must be >= 1");
    d.spin = SpinQuantumNumber(static_cast<int>(two_i));
  }
  if (const double g = p.num("gamma_n"); g != 0.0) {
    if (!(g > 0.0)) throw ConfigError("gamma_n must be positive");
    d.gamma_n = g;
  }
  return d;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

void check_quadrupole_allowed(SpinQuantumNumber spin, double q, double eta) {
  if (spin.two_i() < 2 && (q != 0.0 || eta != 0.0)) {
    throw ConfigError("spin 1/2 has no quadrupole interaction; set q = 0 and eta = 0");
  }
}

/// Lab-frame driven top from the common donor/field keys.
DonorSpec driven_spec(const Params& p, const DonorPreset& d) {
  const double eta = p.num("eta");
  check_quadrupole_allowed(d.spin, p.num("q"), eta);
  DonorSpec s = ionized_spec(d, p.num("b0"), p.num("q"), p.num("b1"), p.num("freq"));
  s.eta = eta;
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return s;
}

json donor_keys() {
  return {{"donor", "Sb123"}, {"two_i", 0}, {"gamma_n", 0.0}};
}

json merged(json a, const json& b) {
  for (auto it = b.begin(); it != b.end(); ++it) a[it.key()] = it.value();
  return a;
}

/// Regular-island seed: centre of the quadratic-term island, in quantum coordinates.
SphereDirection island_seed(const DonorSpec& s) {
  const auto dl = to_dimensionless(s.spin.value(), s.gamma_n, s.b0, s.q, s.b1, s.drive_freq);
  if (!(dl.q_prime > 0.5)) {
    throw ConfigError("no quadratic-term island for Q' <= 1/2; give seed_theta and seed_phi explicitly");
  }
  return SphereDirection::from_vector(quantum_from_classical(quadratic_island_center(dl.q_prime)));
}

SphereDirection seed_or_island(const Params& p, const DonorSpec& s) {
  const double th = p.num("seed_theta");
  const double ph = p.num("seed_phi");
  if (th < 0.0 || ph < 0.0) return island_seed(s);
  require(th <= kPi, "seed_theta must lie in [0, pi]");
  return SphereDirection::normalized(th, ph);
}

std::vector<double> log_grid(double lo, double hi, I64 n) {
  if (n <= 1 || hi <= 0.0) return {lo};
  require(lo > 0.0 && hi > lo, "grid bounds must satisfy 0 < min < max");
  std::vector<double> out(static_cast<std::size_t>(n));
  for (I64 k = 0; k < n; ++k) out[k] = lo * std::pow(hi / lo, static_cast<double>(k) / static_cast<double>(n - 1));
  return out;
}

std::vector<double> lin_grid(double lo, double hi, I64 n) {
  if (n <= 1) return {lo};
  require(hi > lo, "grid bounds must satisfy min < max");
  std::vector<double> out(static_cast<std::size_t>(n));
  for (I64 k = 0; k < n; ++k) out[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);
  return out;
}

int positive_int(const Params& p, const std::string& key) {
  const I64 v = p.integer(key);
  if (v < 1 || v > 100000000) throw ConfigError(key + " must be a positive integer");
  return static_cast<int>(v);
}

std::uint64_t calibration_stream(std::uint64_t seed) { return seed ^ 0x9E3779B97F4A7C15ull; }

ChaosConfig chaos_config() { return ChaosConfig{}; }

json chaos_tolerances(const ChaosConfig& cfg) {
  return {{"integrator_rtol", cfg.tol.rtol},
          {"integrator_atol", cfg.tol.atol},
          {"chaos_separation", cfg.separation},
          {"chaos_saturation_level", cfg.saturation_level},
          {"chaos_duration", cfg.duration},
          {"chaos_sample_interval", cfg.sample_interval},
          {"threshold_factor", kThresholdFactor}};
}

/// Explicit threshold, or the calibrated integrable-case maximum times the factor.
double resolve_threshold(const Params& p, double beta, double freq, const RunContext& ctx, json& derived) {
  const double given = p.num("threshold");
  if (given > 0.0) return given;
  const auto cal = calibrate_chaos_threshold(beta, freq, positive_int(p, "calibration_samples"), chaos_config(),
                                             calibration_stream(ctx.seed), ctx.workers);
  derived["calibrations"].push_back({{"beta", beta},
                                     {"freq", freq},
                                     {"max_exponent", cal.max_exponent},
                                     {"threshold", cal.threshold},
                                     {"n_samples", cal.n_samples}});
  return cal.threshold;
}

SphereGrid grid_from(const Params& p) {
  return SphereGrid{positive_int(p, "n_theta"), positive_int(p, "n_phi")};
}

// --------------------------------------------------------------- experiments

ExperimentResult classical_map(const RunContext& ctx) {
  const Params& p = ctx.params;
  const ClassicalParams cp{p.num("beta"), p.num("gamma"), p.num("freq")};
  try {
    cp.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const int n_periods = positive_int(p, "n_periods");
  const auto th = p.vec("seed_theta");
  const auto ph = p.vec("seed_phi");
  require(th.size() == ph.size(), "seed_theta and seed_phi must have equal length");
  std::vector<SphereDirection> seeds;
  if (!th.empty()) {
    for (std::size_t k = 0; k < th.size(); ++k) {
      require(th[k] >= 0.0 && th[k] <= kPi, "seed_theta must lie in [0, pi]");
      seeds.push_back(SphereDirection::normalized(th[k], ph[k]));
    }
  } else {
    const int n = positive_int(p, "n_seeds");
    for (int k = 0; k < n; ++k) seeds.push_back(uniform_sphere_point(ctx.seed, static_cast<std::uint64_t>(k)));
  }

  ExperimentResult r;
  r.derived["calibrations"] = json::array();
  ChaosConfig cfg = chaos_config();
  cfg.threshold = resolve_threshold(p, cp.beta, cp.freq, ctx, r.derived);
  r.derived["threshold"] = cfg.threshold;
  r.tolerances = chaos_tolerances(cfg);

  std::vector<std::vector<Vec3>> maps(seeds.size());
  std::vector<ChaosClassification> cls(seeds.size());
  parallel_for(seeds.size(), ctx.workers, [&](std::size_t k) {
    const auto s0 = AngularMomentumState::from_direction(seeds[k]);
    maps[k] = stroboscopic_map(s0, cp, n_periods, cfg.tol);
    cls[k] = classify_chaotic(s0, cp, cfg);
  });

  CsvTable points({"seed_index", "period", "lx", "ly", "lz", "hammer_x", "hammer_y"});
  CsvTable seed_table({"seed_index", "theta", "phi", "exponent", "chaotic"});
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    for (std::size_t n = 0; n < maps[k].size(); ++n) {
      const Vec3& l = maps[k][n];
      const auto [hx, hy] = hammer_projection(SphereDirection::from_vector(l));
      points.add_row({static_cast<I64>(k), static_cast<I64>(n), l.x(), l.y(), l.z(), hx, hy});
    }
    seed_table.add_row({static_cast<I64>(k), seeds[k].theta(), seeds[k].phi(), cls[k].exponent,
                        static_cast<I64>(cls[k].is_chaotic)});
  }
  r.tables.push_back({"classical_map.csv", schema("classical-map"), std::move(points)});
  r.tables.push_back({"classical_seeds.csv", schema("classical-seeds"), std::move(seed_table)});
  return r;
}

ExperimentResult chaos_fraction(const RunContext& ctx) {
  const Params& p = ctx.params;
  const double gamma = p.num("gamma");
  require(gamma >= 0.0, "gamma must be >= 0");
  const auto betas = log_grid(p.num("beta"), p.num("beta_max"), p.integer("n_beta"));
  const auto freqs = log_grid(p.num("freq"), p.num("freq_max"), p.integer("n_freq"));
  for (double f : freqs) require(f > 0.0, "freq must be positive");
  const int samples = positive_int(p, "samples");

  ExperimentResult r;
  r.derived["calibrations"] = json::array();
  CsvTable t({"beta", "gamma", "freq", "fraction", "n_chaotic", "n_samples"});
  json thresholds = json::array();
  for (double beta : betas) {
    for (double freq : freqs) {
      ChaosConfig cfg = chaos_config();
      cfg.threshold = resolve_threshold(p, beta, freq, ctx, r.derived);
      const auto fr = chaotic_fraction({beta, gamma, freq}, samples, cfg, ctx.seed, ctx.workers);
      t.add_row({beta, gamma, freq, fr.percent, static_cast<I64>(fr.n_chaotic), static_cast<I64>(fr.n_samples)});
      thresholds.push_back(cfg.threshold);
    }
  }
  r.derived["thresholds"] = thresholds;
  r.tolerances = chaos_tolerances(chaos_config());
  r.tables.push_back({"chaos_fraction.csv", schema("chaos-fraction"), std::move(t)});
  return r;
}

FluctuatingParameter fluctuating(const std::string& name) {
  if (name == "q") return FluctuatingParameter::q;
  if (name == "b0") return FluctuatingParameter::b0;
  if (name == "b1") return FluctuatingParameter::b1;
  throw ConfigError("parameter must be one of q, b0, b1");
}

ExperimentResult purity_map_experiment(const RunContext& ctx) {
  const Params& p = ctx.params;
  const auto d = donor_from(p);
  const DonorSpec spec = driven_spec(p, d);
  FluctuationSpec fl;
  fl.parameter = fluctuating(p.str("parameter"));
  fl.mean = fl.parameter == FluctuatingParameter::q ? spec.q : fl.parameter == FluctuatingParameter::b0 ? spec.b0 : spec.b1;
  fl.sigma = p.num("sigma");
  fl.n_levels = positive_int(p, "n_levels");
  fl.n_sequences = positive_int(p, "members");
  fl.n_periods = positive_int(p, "n_periods");
  fl.rng_seed = ctx.seed;
  try {
    fl.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const SphereGrid grid = grid_from(p);
  const int n_segments = positive_int(p, "n_segments");

  const auto map = purity_map(spec, fl, grid, ctx.workers, n_segments);
  CsvTable t({"i", "j", "theta", "phi", "hammer_x", "hammer_y", "purity"});
  for (int i = 0; i < grid.n_theta; ++i) {
    for (int j = 0; j < grid.n_phi; ++j) {
      const auto c = grid.cell(i, j);
      const auto [hx, hy] = hammer_projection(c);
      t.add_row({static_cast<I64>(i), static_cast<I64>(j), c.theta(), c.phi(), hx, hy, map.at(i, j)});
    }
  }
  ExperimentResult r;
  const auto dl = to_dimensionless(spec.spin.value(), spec.gamma_n, spec.b0, spec.q, spec.b1, spec.drive_freq);
  r.derived = {{"q_prime", dl.q_prime}, {"b1_prime", dl.b1_prime}, {"f_prime", dl.f_prime}, {"fluctuation_mean", fl.mean}};
  r.tolerances = {{"floquet_segments", n_segments}, {"floquet_rule", "magnus4"}};
  r.tables.push_back({"purity_map.csv", schema("purity-map"), std::move(t)});
  return r;
}

ExperimentResult tunneling(const RunContext& ctx) {
  const Params& p = ctx.params;
  const auto base = donor_from(p);
  auto two_is = p.vec("two_i_values");
  if (two_is.empty()) two_is = {static_cast<double>(base.spin.two_i())};
  const auto b0s = p.vec("b0_values");
  require(!b0s.empty(), "b0_values must not be empty");
  const double qi = p.num("qi");
  const int n_segments = positive_int(p, "n_segments");
  const I64 fft_periods = p.integer("fft_periods");
  require(fft_periods >= 0, "fft_periods must be >= 0");

  struct Task {
    DonorSpec spec;
    SphereDirection seed;
  };
  std::vector<Task> tasks;
  for (double ti : two_is) {
    require(ti >= 1.0 && ti == std::floor(ti), "two_i_values must be positive integers");
    for (double b0 : b0s) {
      DonorPreset d = base;
      d.spin = SpinQuantumNumber(static_cast<int>(ti));
      const double q = qi > 0.0 ? qi / d.spin.value() : p.num("q");
      check_quadrupole_allowed(d.spin, q, p.num("eta"));
      DonorSpec s = ionized_spec(d, b0, q, p.num("b1"), p.num("freq"));
      s.eta = p.num("eta");
      try {
        s.validate();
        drive_period(s);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      tasks.push_back({s, seed_or_island(p, s)});
    }
  }

  struct Row {
    TunnelingResult t;
    SpectralPeak peak{};
  };
  std::vector<Row> rows(tasks.size());
  parallel_for(tasks.size(), ctx.workers, [&](std::size_t k) {
    const auto& task = tasks[k];
    const auto f = floquet(task.spec, n_segments);
    const Vector psi0 = spin_coherent_state(task.spec.spin, task.seed);
    rows[k].t = tunneling_frequency(floquet_eigensystem(f), psi0);
    if (fft_periods > 0) {
      auto trace = overlap_trace(f, psi0, static_cast<int>(fft_periods));
      for (auto& v : trace) v *= v;
      rows[k].peak = spectral_peak(trace, f.period);
    }
  });

  CsvTable t({"two_i", "spin", "b0", "q", "b1", "freq", "seed_theta", "seed_phi", "frequency", "period", "weight_a",
              "weight_b", "fft_frequency", "fft_bin_width"});
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    const auto& s = tasks[k].spec;
    const auto& row = rows[k];
    t.add_row({static_cast<I64>(s.spin.two_i()), s.spin.value(), s.b0, s.q, s.b1, s.drive_freq, tasks[k].seed.theta(),
               tasks[k].seed.phi(), row.t.frequency, 1.0 / row.t.frequency, row.t.weight_a, row.t.weight_b,
               fft_periods > 0 ? row.peak.frequency : nan, fft_periods > 0 ? row.peak.bin_width : nan});
  }
  ExperimentResult r;
  r.tolerances = {{"floquet_segments", n_segments}, {"floquet_rule", "magnus4"}, {"min_component_weight", 0.8}};
  r.tables.push_back({"tunneling.csv", schema("tunneling"), std::move(t)});
  return r;
}

ExperimentResult overlap_trace_experiment(const RunContext& ctx) {
  const Params& p = ctx.params;
  const DonorSpec spec = driven_spec(p, donor_from(p));
  const int n_periods = positive_int(p, "n_periods");
  const int n_segments = positive_int(p, "n_segments");
  const auto th = p.vec("seed_theta");
  const auto ph = p.vec("seed_phi");
  require(th.size() == ph.size(), "seed_theta and seed_phi must have equal length");
  std::vector<std::pair<std::string, SphereDirection>> seeds;
  if (th.empty()) {
    seeds.emplace_back("regular-island", island_seed(spec));
    seeds.emplace_back("saddle", SphereDirection(kPi, 0.0));
  } else {
    for (std::size_t k = 0; k < th.size(); ++k) {
      require(th[k] >= 0.0 && th[k] <= kPi, "seed_theta must lie in [0, pi]");
      seeds.emplace_back("user", SphereDirection::normalized(th[k], ph[k]));
    }
  }
  const auto f = floquet(spec, n_segments);
  std::vector<std::vector<double>> traces(seeds.size());
  parallel_for(seeds.size(), ctx.workers, [&](std::size_t k) {
    traces[k] = overlap_trace(f, spin_coherent_state(spec.spin, seeds[k].second), n_periods);
  });
  CsvTable t({"seed_index", "period", "time", "overlap", "overlap_squared"});
  ExperimentResult r;
  r.derived["seeds"] = json::array();
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    r.derived["seeds"].push_back(
        {{"index", k}, {"label", seeds[k].first}, {"theta", seeds[k].second.theta()}, {"phi", seeds[k].second.phi()}});
    for (std::size_t n = 0; n < traces[k].size(); ++n) {
      const double o = traces[k][n];
      t.add_row({static_cast<I64>(k), static_cast<I64>(n), static_cast<double>(n) * f.period, o, o * o});
    }
  }
  r.derived["drive_period"] = f.period;
  r.tolerances = {{"floquet_segments", n_segments}, {"floquet_rule", "magnus4"}};
  r.tables.push_back({"overlap_trace.csv", schema("overlap-trace"), std::move(t)});
  return r;
}

/// Field direction (quadrupole-frame polar angles) with a perpendicular probe.
DonorSpec oriented(const DonorSpec& aligned, double theta, double phi) {
  const Vec3 d = SphereDirection::normalized(theta, phi).unit_vector();
  const double ct = std::cos(theta), st = std::sin(theta);
  const Vec3 c(ct * std::cos(phi), ct * std::sin(phi), -st);
  return orient_field(aligned, d, c.normalized());
}

SpectrumOptions spectrum_options(const Params& p) {
  SpectrumOptions o;
  o.intensity_floor = p.num("intensity_floor");
  require(o.intensity_floor >= 0.0, "intensity_floor must be >= 0");
  return o;
}

void add_branches(CsvTable& t, const SpectrumScan& scan) {
  const auto branches = track_branches(scan);
  for (std::size_t b = 0; b < branches.size(); ++b) {
    for (std::size_t k = 0; k < scan.points.size(); ++k) {
      t.add_row({scan.points[k].parameter, static_cast<I64>(b), branches[b][k]});
    }
  }
}

ExperimentResult spectrum(const RunContext& ctx) {
  const Params& p = ctx.params;
  const auto d = donor_from(p);
  const double q = p.num("q"), eta = p.num("eta");
  check_quadrupole_allowed(d.spin, q, eta);
  DonorSpec aligned = ionized_spec(d, p.num("b0"), q, 0.0, 0.0);
  aligned.eta = eta;
  aligned.quad_axes = QuadrupoleAxes{};
  const std::string charge = p.str("charge");
  require(charge == "ionized" || charge == "neutral", "charge must be 'ionized' or 'neutral'");
  const auto b0s = lin_grid(p.num("b0"), p.num("b0_max"), p.integer("n_b0"));
  for (double b : b0s) require(b >= 0.0, "b0 must be >= 0");
  const SpectrumOptions opt = spectrum_options(p);
  DonorSpec base;
  try {
    base = oriented(aligned, p.num("field_theta"), p.num("field_phi"));
    base.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  ExperimentResult r;
  CsvTable t({"b0", "kind", "frequency", "intensity", "lower", "upper"});
  auto put = [&t](double b0, const char* kind, const std::vector<SpectrumLine>& lines) {
    for (const auto& l : lines) {
      t.add_row({b0, std::string(kind), l.frequency, l.intensity, static_cast<I64>(l.lower), static_cast<I64>(l.upper)});
    }
  };
  if (charge == "ionized") {
    const auto scan = scan_field_magnitude(base, b0s, opt, ctx.workers);
    for (const auto& pt : scan.points) put(pt.parameter, "nmr", pt.lines);
    if (b0s.size() > 1) {
      CsvTable br({"b0", "branch", "frequency"});
      add_branches(br, scan);
      r.tables.push_back({"spectrum_branches.csv", schema("spectrum-branches"), std::move(br)});
    }
    if (p.num("field_theta") == 0.0 && d.spin.two_i() >= 2) {
      try {
        const auto est = estimate_quadrupole(scan.points.front().lines, d.spin, opt.intensity_floor);
        r.derived["quadrupole_estimate"] = {{"q", est.q}, {"spacing", est.spacing}, {"residual", est.residual}};
      } catch (const InsufficientLinesError&) {
        r.derived["quadrupole_estimate"] = nullptr;
      }
    }
  } else {
    NeutralDonorOptions nopt;
    nopt.gamma_e = p.num("gamma_e");
    nopt.spectrum = opt;
    json dev = json::array();
    for (double b0 : b0s) {
      DonorSpec s = base;
      s.b0 = b0;
      s.hyperfine_a = d.hyperfine_a;
      const auto nd = neutral_donor_spectrum(s, nopt);
      put(b0, "esr", nd.esr);
      put(b0, "esr_effective", nd.esr_effective);
      put(b0, "nmr_up", nd.nmr_up);
      put(b0, "nmr_down", nd.nmr_down);
      dev.push_back({{"b0", b0}, {"max_esr_deviation", nd.max_esr_deviation}, {"max_level_deviation", nd.max_level_deviation}});
    }
    r.derived["neutral_deviation"] = dev;
  }
  r.tolerances = {{"degeneracy_tol", opt.degeneracy_tol}, {"intensity_floor", opt.intensity_floor}};
  r.tables.insert(r.tables.begin(), {"spectrum.csv", schema("spectrum"), std::move(t)});
  return r;
}

ExperimentResult orientation_scan(const RunContext& ctx) {
  const Params& p = ctx.params;
  const auto d = donor_from(p);
  const double q = p.num("q"), eta = p.num("eta");
  check_quadrupole_allowed(d.spin, q, eta);
  DonorSpec aligned = ionized_spec(d, p.num("b0"), q, 0.0, 0.0);
  aligned.eta = eta;
  aligned.quad_axes = QuadrupoleAxes{};
  const auto uv = p.vec("u"), vv = p.vec("v");
  require(uv.size() == 3 && vv.size() == 3, "u and v must have three components");
  const Vec3 u(uv[0], uv[1], uv[2]), v(vv[0], vv[1], vv[2]);
  const auto angles = lin_grid(p.num("angle_min"), p.num("angle_max"), p.integer("n_angles"));
  const SpectrumOptions opt = spectrum_options(p);
  SpectrumScan scan;
  try {
    scan = scan_field_orientation(aligned, u, v, angles, opt, ctx.workers);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  CsvTable t({"angle", "frequency", "intensity", "lower", "upper"});
  for (const auto& pt : scan.points) {
    for (const auto& l : pt.lines) {
      t.add_row({pt.parameter, l.frequency, l.intensity, static_cast<I64>(l.lower), static_cast<I64>(l.upper)});
    }
  }
  CsvTable br({"angle", "branch", "frequency"});
  add_branches(br, scan);
  ExperimentResult r;
  r.tolerances = {{"degeneracy_tol", opt.degeneracy_tol}, {"intensity_floor", opt.intensity_floor}};
  r.tables.push_back({"orientation_scan.csv", schema("orientation-scan"), std::move(t)});
  r.tables.push_back({"orientation_branches.csv", schema("orientation-branches"), std::move(br)});
  return r;
}

ExperimentResult stateprep_experiment(const RunContext& ctx) {
  const Params& p = ctx.params;
  const auto d = donor_from(p);
  check_quadrupole_allowed(d.spin, p.num("q"), p.num("eta"));
  DonorSpec spec = ionized_spec(d, p.num("b0"), p.num("q"), 0.0, 0.0);
  spec.eta = p.num("eta");
  const double b1 = p.num("b1");
  require(b1 > 0.0, "b1 must be positive");
  const double th = p.num("target_theta");
  require(th >= 0.0 && th <= kPi, "target_theta must lie in [0, pi]");
  const auto target_dir = SphereDirection::normalized(th, p.num("target_phi"));
  CompileOptions copt;
  copt.addressability_factor = p.num("addressability_factor");
  SimulateOptions sopt;
  sopt.segments_per_period = positive_int(p, "segments_per_period");
  require(sopt.segments_per_period >= 200, "segments_per_period must be >= 200");

  const Vector target = spin_coherent_state(spec.spin, target_dir);
  CompiledSequence c;
  try {
    c = compile(target, spec, b1, copt);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const Vector psi0 = ground_state(spec);
  const auto inter = intermediate_fidelities(c.sequence, spec, psi0, sopt);
  const double simulated = fidelity(simulate(c.sequence, spec, psi0, sopt), target);

  CsvTable t({"index", "start_time", "frequency", "duration", "phase", "amplitude", "lower", "upper",
              "intermediate_fidelity"});
  json pulses = json::array();
  double start = 0.0;
  for (std::size_t k = 0; k < c.sequence.pulses.size(); ++k) {
    const auto& pl = c.sequence.pulses[k];
    t.add_row({static_cast<I64>(k), start, pl.frequency, pl.duration, pl.phase, pl.amplitude, static_cast<I64>(pl.lower),
               static_cast<I64>(pl.upper), inter[k]});
    pulses.push_back({{"frequency_hz", pl.frequency},
                      {"duration_s", pl.duration},
                      {"phase_rad", pl.phase},
                      {"amplitude_t", pl.amplitude},
                      {"lower", pl.lower},
                      {"upper", pl.upper}});
    start += pl.duration;
  }
  const json doc = {{"schema_version", kSchemaVersion},
                    {"schema", schema("pulse-sequence")},
                    {"drive", "-gamma_n * amplitude_t * cos(2 pi frequency_hz (t - t_start) + phase_rad) (n1.I)"},
                    {"target", {{"theta", target_dir.theta()}, {"phi", target_dir.phi()}}},
                    {"total_duration_s", c.sequence.total_duration()},
                    {"pulses", pulses}};
  ExperimentResult r;
  r.documents.push_back({"stateprep_pulses.json", schema("pulse-sequence"), doc.dump(2) + "\n"});
  r.derived = {{"predicted_fidelity", c.report.predicted_fidelity},
               {"simulated_fidelity", simulated},
               {"total_duration", c.sequence.total_duration()},
               {"n_pulses", c.sequence.pulses.size()}};
  r.tolerances = {{"segments_per_period", sopt.segments_per_period},
                  {"population_floor", copt.population_floor},
                  {"addressability_factor", copt.addressability_factor}};
  r.tables.push_back({"stateprep.csv", schema("stateprep"), std::move(t)});
  return r;
}

/// Shannon entropy of the area-weighted Husimi distribution on the grid.
double husimi_entropy(const SphereGrid& g, const std::vector<double>& q) {
  double total = 0.0;
  for (int i = 0; i < g.n_theta; ++i) {
    for (int j = 0; j < g.n_phi; ++j) total += q[static_cast<std::size_t>(i) * g.n_phi + j] * g.area_weight(i);
  }
  double s = 0.0;
  for (int i = 0; i < g.n_theta; ++i) {
    for (int j = 0; j < g.n_phi; ++j) {
      const double w = q[static_cast<std::size_t>(i) * g.n_phi + j] * g.area_weight(i) / total;
      if (w > 0.0) s -= w * std::log(w);
    }
  }
  return s;
}

ExperimentResult husimi_frames(const RunContext& ctx) {
  const Params& p = ctx.params;
  const DonorSpec spec = driven_spec(p, donor_from(p));
  const SphereDirection seed = seed_or_island(p, spec);
  const int n_frames = positive_int(p, "n_frames");
  const int stride = positive_int(p, "frame_stride");
  const int n_segments = positive_int(p, "n_segments");
  const SphereGrid grid = grid_from(p);

  const auto f = floquet(spec, n_segments);
  const Vector psi0 = spin_coherent_state(spec.spin, seed);
  std::vector<Vector> states(static_cast<std::size_t>(n_frames));
  states[0] = psi0;
  for (int k = 1; k < n_frames; ++k) states[k] = evolve(f, states[k - 1], stride);

  std::vector<std::vector<double>> frames(states.size());
  parallel_for(states.size(), ctx.workers, [&](std::size_t k) {
    frames[k].resize(static_cast<std::size_t>(grid.size()));
    for (int i = 0; i < grid.n_theta; ++i) {
      for (int j = 0; j < grid.n_phi; ++j) {
        frames[k][static_cast<std::size_t>(i) * grid.n_phi + j] = husimi_q_pure(states[k], grid.cell(i, j));
      }
    }
  });

  ExperimentResult r;
  CsvTable index({"frame", "period", "time", "entropy", "file"});
  for (std::size_t k = 0; k < frames.size(); ++k) {
    char name[64];
    std::snprintf(name, sizeof name, "husimi_frames/frame_%05zu.csv", k);
    CsvTable t({"i", "j", "theta", "phi", "hammer_x", "hammer_y", "husimi"});
    for (int i = 0; i < grid.n_theta; ++i) {
      for (int j = 0; j < grid.n_phi; ++j) {
        const auto c = grid.cell(i, j);
        const auto [hx, hy] = hammer_projection(c);
        t.add_row({static_cast<I64>(i), static_cast<I64>(j), c.theta(), c.phi(), hx, hy,
                   frames[k][static_cast<std::size_t>(i) * grid.n_phi + j]});
      }
    }
    const I64 period = static_cast<I64>(k) * stride;
    index.add_row({static_cast<I64>(k), period, static_cast<double>(period) * f.period, husimi_entropy(grid, frames[k]),
                   std::string(name)});
    r.tables.push_back({name, schema("husimi-frame"), std::move(t)});
  }
  r.tables.insert(r.tables.begin(), {"husimi_frames.csv", schema("husimi-frames"), std::move(index)});
  r.derived = {{"seed_theta", seed.theta()}, {"seed_phi", seed.phi()}, {"drive_period", f.period}};
  r.tolerances = {{"floquet_segments", n_segments}, {"floquet_rule", "magnus4"}};
  return r;
}

json fig4_keys() {
  return merged(donor_keys(), {{"b0", 0.5}, {"q", 0.8e6}, {"eta", 0.0}, {"b1", 10e-3}, {"freq", 5e6}, {"n_segments", 1000}});
}

}  // namespace

// -------------------------------------------------------------------- Params

const json& Params::at(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw std::logic_error("undeclared parameter '" + key + "'");
  return *it;
}

double Params::num(const std::string& key) const {
  const double v = at(key).get<double>();
  if (!std::isfinite(v)) throw ConfigError(key + " must be finite");
  return v;
}

std::int64_t Params::integer(const std::string& key) const { return at(key).get<std::int64_t>(); }

std::string Params::str(const std::string& key) const { return at(key).get<std::string>(); }

std::vector<double> Params::vec(const std::string& key) const {
  std::vector<double> out = at(key).get<std::vector<double>>();
  for (double v : out) {
    if (!std::isfinite(v)) throw ConfigError(key + " entries must be finite");
  }
  return out;
}

// ------------------------------------------------------------------ registry

const std::vector<Experiment>& experiments() {
  static const std::vector<Experiment> list{
      {"classical-map", "stroboscopic map and chaos classification of classical seeds",
       {{"beta", 1.0},
        {"gamma", 0.02},
        {"freq", 1.4},
        {"n_seeds", 24},
        {"n_periods", 500},
        {"seed_theta", json::array()},
        {"seed_phi", json::array()},
        {"threshold", 0.0},
        {"calibration_samples", 200}},
       classical_map},
      {"chaos-fraction", "chaotic fraction of area-uniform seeds over a (beta', f') grid",
       {{"beta", 1.0},
        {"gamma", 0.02},
        {"freq", 1.4},
        {"samples", 500},
        {"beta_max", 0.0},
        {"n_beta", 1},
        {"freq_max", 0.0},
        {"n_freq", 1},
        {"threshold", 0.0},
        {"calibration_samples", 500}},
       chaos_fraction},
      {"purity-map", "ensemble-averaged purity of coherent states under parameter noise",
       merged(fig4_keys(), {{"freq", 3.5e6},
                            {"parameter", "q"},
                            {"sigma", 4e3},
                            {"n_levels", 30},
                            {"members", 50},
                            {"n_periods", 1000},
                            {"n_theta", 24},
                            {"n_phi", 48}}),
       purity_map_experiment},
      {"tunneling", "tunneling frequency from the Floquet spectrum, with an FFT cross-check",
       merged(fig4_keys(), {{"two_i_values", json::array()},
                            {"b0_values", json::array({0.5})},
                            {"qi", 0.0},
                            {"seed_theta", -1.0},
                            {"seed_phi", -1.0},
                            {"fft_periods", 4096}}),
       tunneling},
      {"overlap-trace", "stroboscopic overlap |<psi(0)|psi(t)>| of coherent seeds",
       merged(fig4_keys(), {{"seed_theta", json::array()}, {"seed_phi", json::array()}, {"n_periods", 200}}),
       overlap_trace_experiment},
      {"spectrum", "NMR (ionized) or ESR/NMR (neutral) line spectrum, optionally over a B0 range",
       merged(donor_keys(), {{"charge", "ionized"},
                             {"b0", 1.4},
                             {"b0_max", 0.0},
                             {"n_b0", 1},
                             {"q", 0.8e6},
                             {"eta", 0.0},
                             {"field_theta", 0.0},
                             {"field_phi", 0.0},
                             {"intensity_floor", 1e-4},
                             {"gamma_e", 27.97e9}}),
       spectrum},
      {"orientation-scan", "NMR lines while B0 rotates in the plane of u and v (quadrupole frame)",
       merged(donor_keys(), {{"b0", 1.4},
                             {"q", 0.8e6},
                             {"eta", 0.0},
                             {"u", json::array({1.0, 0.0, 0.0})},
                             {"v", json::array({0.0, 0.0, 1.0})},
                             {"angle_min", 0.0},
                             {"angle_max", kPi},
                             {"n_angles", 73},
                             {"intensity_floor", 1e-4}}),
       orientation_scan},
      {"stateprep", "pulse sequence preparing a coherent state from the ground state",
       merged(donor_keys(), {{"b0", 0.7},
                             {"q", 1e6},
                             {"eta", 0.0},
                             {"b1", 1e-3},
                             {"target_theta", 4 * kPi / 5},
                             {"target_phi", kPi / 2},
                             {"addressability_factor", 2.0},
                             {"segments_per_period", 200}}),
       stateprep_experiment},
      {"husimi-frames", "Husimi Q grids of an evolving coherent state, one CSV per frame",
       merged(fig4_keys(), {{"seed_theta", -1.0},
                            {"seed_phi", -1.0},
                            {"n_frames", 41},
                            {"frame_stride", 1},
                            {"n_theta", 48},
                            {"n_phi", 96}}),
       husimi_frames},
  };
  return list;
}

const Experiment* find_experiment(const std::string& name) {
  for (const auto& e : experiments()) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

}  // namespace driventop::cli
