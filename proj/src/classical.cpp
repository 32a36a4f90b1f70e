#include "driventop/classical.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <stdexcept>
#include <string>

#include <boost/numeric/odeint.hpp>

#include "driventop/parallel.hpp"
#include "driventop/random.hpp"

namespace driventop {

namespace odeint = boost::numeric::odeint;

void ClassicalParams::validate() const {
  if (!(freq > 0.0) || !std::isfinite(freq)) {
    throw std::invalid_argument("classical drive frequency must be positive");
  }
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw std::invalid_argument("classical drive amplitude must be non-negative");
  }
  if (!std::isfinite(beta)) throw std::invalid_argument("classical beta must be finite");
}

namespace {

using State3 = std::array<double, 3>;
using State6 = std::array<double, 6>;

inline void rhs(const double* l, double* dl, const ClassicalParams& p, double drive) {
  dl[0] = -l[1] + p.gamma * l[2] * drive;
  dl[1] = l[0] - 2.0 * p.beta * l[0] * l[2];
  dl[2] = 2.0 * p.beta * l[0] * l[1] - p.gamma * l[0] * drive;
}

struct TopSystem {
  ClassicalParams p;
  void operator()(const State3& l, State3& dl, double tau) const {
    rhs(l.data(), dl.data(), p, std::cos(p.freq * tau));
  }
};

struct PairSystem {
  ClassicalParams p;
  void operator()(const State6& x, State6& dx, double tau) const {
    const double drive = std::cos(p.freq * tau);
    rhs(x.data(), dx.data(), p, drive);
    rhs(x.data() + 3, dx.data() + 3, p, drive);
  }
};

void check_unit(const Vec3& l) {
  if (!l.allFinite() || std::abs(l.norm() - 1.0) > 1e-9) {
    throw std::invalid_argument("angular-momentum state must be a unit vector (|l| - 1 = " +
                                std::to_string(l.norm() - 1.0) + ")");
  }
}

template <class State>
auto controlled_stepper(const IntegrationTolerances& tol) {
  if (!(tol.rtol > 0.0) || !(tol.atol > 0.0)) {
    throw std::invalid_argument("integration tolerances must be positive");
  }
  return odeint::make_controlled(tol.atol, tol.rtol, odeint::runge_kutta_fehlberg78<State>());
}

/// Advances x from t to exactly `target`, carrying the controller's step
/// suggestion `dt` across calls.
template <class Stepper, class System, class State>
void advance_to(Stepper& stepper, const System& sys, State& x, double& t, double target,
                double& dt) {
  int rejected = 0;
  while (t < target) {
    double trial = std::min(dt, target - t);
    const bool clipped = trial < dt;
    if (stepper.try_step(sys, x, t, trial) == odeint::success) {
      if (!clipped) dt = trial;
      rejected = 0;
    } else {
      dt = trial;
      if (++rejected > 500) throw NumericalError("classical integration: step size underflow");
    }
  }
}

Vec3 to_vec(const State3& s) { return {s[0], s[1], s[2]}; }

}  // namespace

Vec3 eom(const Vec3& l, const ClassicalParams& p, double tau) {
  check_unit(l);
  Vec3 out;
  rhs(l.data(), out.data(), p, std::cos(p.freq * tau));
  return out;
}

std::vector<Vec3> integrate(const AngularMomentumState& s0, const ClassicalParams& p,
                            const std::vector<double>& times, double t0,
                            const IntegrationTolerances& tol) {
  p.validate();
  check_unit(s0.l);
  std::vector<Vec3> out;
  out.reserve(times.size());
  if (times.empty()) return out;

  const double dir = times.back() >= t0 ? 1.0 : -1.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double prev = i == 0 ? t0 : times[i - 1];
    if (dir * (times[i] - prev) < 0.0) {
      throw std::invalid_argument("integration times must be monotone away from t0");
    }
  }

  State3 x{s0.l.x(), s0.l.y(), s0.l.z()};
  auto stepper = controlled_stepper<State3>(tol);
  try {
    std::vector<double> grid;
    grid.reserve(times.size() + 1);
    grid.push_back(t0);
    grid.insert(grid.end(), times.begin(), times.end());
    odeint::integrate_times(stepper, TopSystem{p}, x, grid.begin(), grid.end(), dir * 1e-3,
                            [&](const State3& s, double) { out.push_back(to_vec(s)); });
  } catch (const odeint::odeint_error& e) {
    throw NumericalError(std::string("classical integration failed: ") + e.what());
  }
  // the observer also fires at t0; drop it
  out.erase(out.begin());
  return out;
}

Vec3 integrate_to(const AngularMomentumState& s0, const ClassicalParams& p, double t_end,
                  const IntegrationTolerances& tol) {
  return integrate(s0, p, {t_end}, 0.0, tol).front();
}

std::vector<Vec3> stroboscopic_map(const AngularMomentumState& s0, const ClassicalParams& p,
                                   int n_periods, const IntegrationTolerances& tol) {
  if (n_periods < 1) throw std::invalid_argument("stroboscopic map needs n_periods >= 1");
  p.validate();
  std::vector<double> times;
  times.reserve(n_periods - 1);
  for (int k = 1; k < n_periods; ++k) times.push_back(k * p.drive_period());
  std::vector<Vec3> pts;
  pts.reserve(n_periods);
  pts.push_back(s0.l);
  const auto rest = integrate(s0, p, times, 0.0, tol);
  pts.insert(pts.end(), rest.begin(), rest.end());
  return pts;
}

namespace {

Vec3 tangent_neighbor(const Vec3& l, double delta) {
  // any unit vector orthogonal to l, fixed by l alone
  Vec3 helper = Vec3::UnitX();
  if (std::abs(l.x()) > std::abs(l.y()) && std::abs(l.x()) > std::abs(l.z())) helper = Vec3::UnitY();
  const Vec3 e = l.cross(helper).normalized();
  return std::cos(delta) * l + std::sin(delta) * e;
}

}  // namespace

ChaosClassification classify_chaotic(const AngularMomentumState& s0, const ClassicalParams& p,
                                     const ChaosConfig& cfg) {
  p.validate();
  check_unit(s0.l);
  if (!(cfg.separation > 0.0) || !(cfg.saturation_level > cfg.separation) ||
      !(cfg.duration > 0.0) || !(cfg.sample_interval > 0.0)) {
    throw std::invalid_argument("invalid chaos-classification configuration");
  }
  const Vec3 nb = tangent_neighbor(s0.l, cfg.separation);
  State6 x{s0.l.x(), s0.l.y(), s0.l.z(), nb.x(), nb.y(), nb.z()};
  auto stepper = controlled_stepper<State6>(cfg.tol);
  const PairSystem sys{p};
  double t_now = 0.0;
  double dt = 1e-2;

  std::vector<double> ts{0.0};
  std::vector<double> logd{std::log((s0.l - nb).norm())};
  const int n_samples = static_cast<int>(std::ceil(cfg.duration / cfg.sample_interval - 1e-9));
  ChaosClassification out;
  try {
    for (int k = 1; k <= n_samples; ++k) {
      const double t = std::min(cfg.duration, k * cfg.sample_interval);
      advance_to(stepper, sys, x, t_now, t, dt);
      const double d = std::hypot(x[0] - x[3], x[1] - x[4], x[2] - x[5]);
      ts.push_back(t);
      logd.push_back(std::log(d));
      out.saturated |= d >= cfg.saturation_level;
    }
  } catch (const odeint::odeint_error& e) {
    throw NumericalError(std::string("classical pair integration failed: ") + e.what());
  }

  const double n = static_cast<double>(ts.size());
  double mt = 0.0, my = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    mt += ts[i];
    my += logd[i];
  }
  mt /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    sxx += (ts[i] - mt) * (ts[i] - mt);
    sxy += (ts[i] - mt) * (logd[i] - my);
  }
  out.exponent = sxx > 0.0 ? sxy / sxx : 0.0;
  double ss = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double r = logd[i] - (my + out.exponent * (ts[i] - mt));
    ss += r * r;
  }
  out.fit_residual = std::sqrt(ss / n);
  out.fit_end = ts.back();
  out.is_chaotic = out.exponent > cfg.threshold;
  return out;
}

SphereDirection uniform_sphere_point(std::uint64_t seed, std::uint64_t index) {
  CounterRng rng(seed, index);
  const double cos_theta = 1.0 - 2.0 * rng.uniform();
  const double phi = kTwoPi * rng.uniform();
  return SphereDirection::normalized(std::acos(std::clamp(cos_theta, -1.0, 1.0)), phi);
}

ChaoticFraction chaotic_fraction(const ClassicalParams& p, int n_samples, const ChaosConfig& cfg,
                                 std::uint64_t seed, int workers) {
  if (n_samples < 1) throw std::invalid_argument("chaotic fraction needs n_samples >= 1");
  p.validate();
  std::vector<char> chaotic(n_samples, 0);
  parallel_for(static_cast<std::size_t>(n_samples), workers, [&](std::size_t i) {
    const auto s0 = AngularMomentumState::from_direction(uniform_sphere_point(seed, i));
    chaotic[i] = classify_chaotic(s0, p, cfg).is_chaotic ? 1 : 0;
  });
  ChaoticFraction out;
  out.n_samples = n_samples;
  out.n_chaotic = static_cast<int>(std::count(chaotic.begin(), chaotic.end(), 1));
  out.percent = 100.0 * out.n_chaotic / n_samples;
  return out;
}

ThresholdCalibration calibrate_chaos_threshold(double beta, double freq, int n_samples,
                                               const ChaosConfig& cfg, std::uint64_t seed,
                                               int workers, double factor) {
  if (n_samples < 1) throw std::invalid_argument("calibration needs n_samples >= 1");
  const ClassicalParams p{beta, 0.0, freq};
  p.validate();
  std::vector<double> exps(n_samples, 0.0);
  parallel_for(static_cast<std::size_t>(n_samples), workers, [&](std::size_t i) {
    const auto s0 = AngularMomentumState::from_direction(uniform_sphere_point(seed, i));
    exps[i] = classify_chaotic(s0, p, cfg).exponent;
  });
  ThresholdCalibration out;
  out.n_samples = n_samples;
  out.max_exponent = *std::max_element(exps.begin(), exps.end());
  out.threshold = factor * out.max_exponent;
  return out;
}

ClassicalParams to_dimensionless(const PhysicalClassicalParams& phys) {
  if (phys.alpha == 0.0 || !std::isfinite(phys.alpha)) {
    throw std::invalid_argument("linear coefficient alpha must be nonzero");
  }
  ClassicalParams p{phys.beta * phys.l_norm / phys.alpha, phys.gamma / phys.alpha,
                    kTwoPi * phys.freq_hz / phys.alpha};
  return p;
}

QuantumDimensionless to_dimensionless(double spin, double gamma_n, double b0, double q, double b1,
                                      double f) {
  const double lin = gamma_n * b0;
  if (lin == 0.0 || !std::isfinite(lin)) {
    throw std::invalid_argument("gamma_n * B0 must be nonzero");
  }
  return {q * spin / lin, b1 / b0, f / lin, lin};
}

std::pair<double, double> hammer_projection(SphereDirection dir) {
  const double lat = 0.5 * kPi - dir.theta();
  double lon = dir.phi();
  if (lon > kPi) lon -= kTwoPi;
  const double den = std::sqrt(1.0 + std::cos(lat) * std::cos(0.5 * lon));
  const double x = 2.0 * std::sqrt(2.0) * std::cos(lat) * std::sin(0.5 * lon) / den;
  const double y = std::sqrt(2.0) * std::sin(lat) / den;
  return {x, y};
}

SphereDirection inverse_hammer(double x, double y) {
  const double r = x * x / 8.0 + y * y / 2.0;
  if (!(r <= 1.0 + 1e-12)) throw std::invalid_argument("point lies outside the Hammer ellipse");
  const double z = std::sqrt(std::max(0.0, 1.0 - x * x / 16.0 - y * y / 4.0));
  const double lon = 2.0 * std::atan2(z * x, 2.0 * (2.0 * z * z - 1.0));
  const double lat = std::asin(std::clamp(z * y, -1.0, 1.0));
  return SphereDirection::normalized(0.5 * kPi - lat, lon);
}

Vec3 quadratic_island_center(double beta, int side) {
  if (!(beta > 0.5) || !std::isfinite(beta)) {
    throw std::invalid_argument("the quadratic islands exist only for beta' > 1/2");
  }
  if (side != 1 && side != -1) throw std::invalid_argument("side must be +1 or -1");
  const double lz = 0.5 / beta;
  return {side * std::sqrt(1.0 - lz * lz), 0.0, lz};
}

Vec3 classical_from_quantum(const Vec3& n) { return {n.x(), -n.y(), -n.z()}; }
Vec3 quantum_from_classical(const Vec3& l) { return {l.x(), -l.y(), -l.z()}; }

}  // namespace driventop
