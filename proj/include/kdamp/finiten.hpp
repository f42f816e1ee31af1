#pragma once

// N globally coupled phase oscillators,
//   dtheta_i/dt = omega_i + (K/N) sum_j sin(theta_j - theta_i) = omega_i + K Im(Z e^{-i theta_i}),
// with Z = (1/N) sum_j e^{i theta_j}.

#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "kdamp/errors.hpp"
#include "kdamp/freqdist.hpp"
#include "kdamp/parallel.hpp"
#include "kdamp/perturbation.hpp"

namespace kdamp {

struct FiniteNState {
  std::vector<double> phases;       // wrapped to [0, 2pi)
  std::vector<std::int64_t> laps;   // theta_i = phases_i + 2pi laps_i
  std::vector<double> freqs;
  double K = 0.0;
  double t = 0.0;

  std::size_t N() const { return phases.size(); }

  /// (1/N) sum theta_i with laps restored.
  double meanUnwrappedPhase() const {
    double p = 0.0, l = 0.0;
    for (std::size_t i = 0; i < N(); ++i) {
      p += phases[i];
      l += static_cast<double>(laps[i]);
    }
    return (p + 2.0 * std::numbers::pi * l) / static_cast<double>(N());
  }
};

struct Sampling {
  enum class Mode { Quantile, Seeded };
  Mode mode = Mode::Quantile;
  std::uint64_t seed = 0;
};

namespace detail {

inline double wrap_phase(double x, std::int64_t& laps) {
  const double twoPi = 2.0 * std::numbers::pi;
  const double n = std::floor(x / twoPi);
  laps += static_cast<std::int64_t>(n);
  double r = x - n * twoPi;
  if (r >= twoPi) {
    r -= twoPi;
    ++laps;
  }
  if (r < 0.0) r = 0.0;
  return r;
}

// Pairwise summation in blocks of 128.
inline cplx pairwise_sum(const cplx* x, std::size_t n) {
  if (n <= 128) {
    cplx s{};
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

// Inverts theta/2pi + eps \int_0^theta r(s, w) ds = u on [0, 2pi).
inline double invert_theta_cdf(const PerturbationSpec& spec, double eps, double w, double u) {
  if (spec.modes.empty() || eps == 0.0) return 2.0 * std::numbers::pi * u;
  auto F = [&](double th) { return th / (2.0 * std::numbers::pi) + eps * spec.integral(th, w) - u; };
  if (u <= 0.0) return 0.0;
  std::uintmax_t iters = 200;
  const auto r = boost::math::tools::toms748_solve(F, 0.0, 2.0 * std::numbers::pi, F(0.0), F(2.0 * std::numbers::pi),
                                                   boost::math::tools::eps_tolerance<double>(52), iters);
  return 0.5 * (r.first + r.second);
}

constexpr double kGoldenFraction = 0.6180339887498948482;

}  // namespace detail

/// Frequencies at stratified quantiles (i + 1/2)/N, i = 0..N-1, or from a seeded
/// generator; phases by inverting the theta-law 1/2pi + eps r(0, ., omega_i).
/// Quantile mode pairs the frequencies with a golden-ratio lattice of levels.
inline FiniteNState sampleOscillators(const FrequencyDistribution& dist, std::size_t N, const Sampling& sampling,
                                      const PerturbationSpec& spec, double eps, double K) {
  if (N < 2) fail(Errc::InvalidArgument, "need at least two oscillators");
  if (!(K >= 0.0)) fail(Errc::InvalidArgument, "coupling must be nonnegative");
  if (!(eps >= 0.0)) fail(Errc::InvalidArgument, "epsilon must be nonnegative");
  spec.validate();

  FiniteNState s;
  s.K = K;
  s.freqs.resize(N);
  s.phases.resize(N);
  s.laps.assign(N, 0);
  std::vector<double> levels(N);
  if (sampling.mode == Sampling::Mode::Quantile) {
    for (std::size_t i = 0; i < N; ++i) {
      s.freqs[i] = dist.quantile((static_cast<double>(i) + 0.5) / static_cast<double>(N));
      const double v = 0.5 + static_cast<double>(i) * detail::kGoldenFraction;
      levels[i] = v - std::floor(v);
    }
  } else {
    std::mt19937_64 rng(sampling.seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (std::size_t i = 0; i < N; ++i) {
      double u = U(rng);
      while (u <= 0.0) u = U(rng);
      s.freqs[i] = dist.quantile(u);
      levels[i] = U(rng);
    }
  }

  const int samples = 64 * std::max(1, spec.maxMode());
  for (std::size_t i = 0; i < N; ++i) {
    for (int m = 0; m < samples; ++m) {
      const double th = 2.0 * std::numbers::pi * m / samples;
      if (1.0 / (2.0 * std::numbers::pi) + eps * spec.value(th, s.freqs[i]) < 0.0)
        fail(Errc::InvalidPerturbation, "theta-density 1/2pi + eps r is negative at omega=" +
                                            std::to_string(s.freqs[i]));
    }
    s.phases[i] = detail::wrap_phase(detail::invert_theta_cdf(spec, eps, s.freqs[i], levels[i]), s.laps[i]);
  }
  return s;
}

struct OrderParameterN {
  cplx sum;         // sum_j e^{i theta_j}
  cplx normalized;  // sum / N
};

inline OrderParameterN orderParameterN(const FiniteNState& s) {
  std::vector<cplx> e(s.N());
  for (std::size_t i = 0; i < s.N(); ++i) e[i] = std::polar(1.0, s.phases[i]);
  const cplx sum = detail::pairwise_sum(e.data(), e.size());
  return {sum, sum / static_cast<double>(s.N())};
}

/// 0.1 / (K + 99th percentile of |omega_i|).
inline double finiteNStepBound(const FiniteNState& s) {
  std::vector<double> a(s.N());
  for (std::size_t i = 0; i < s.N(); ++i) a[i] = std::abs(s.freqs[i]);
  const std::size_t k = std::min(a.size() - 1, static_cast<std::size_t>(std::ceil(0.99 * a.size())) - 1);
  std::nth_element(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(k), a.end());
  const double rate = s.K + a[k];
  return rate > 0.0 ? 0.1 / rate : std::numeric_limits<double>::infinity();
}

/// Classical RK4 on the unwrapped phases; O(N) per stage through Z.
class FiniteNStepper {
 public:
  FiniteNStepper(const FiniteNState& s, double dt) : dt_(dt) {
    if (!(dt > 0.0)) fail(Errc::InvalidArgument, "time step must be positive");
    if (dt > finiteNStepBound(s) * (1.0 + 1e-12))
      fail(Errc::InvalidArgument, "time step exceeds 0.1/(K + 99th percentile |omega|)");
    const std::size_t n = s.N();
    k1_.resize(n);
    k2_.resize(n);
    k3_.resize(n);
    k4_.resize(n);
    stage_.resize(n);
    e_.resize(n);
  }

  void advance(FiniteNState& s) {
    const std::size_t n = s.N();
    velocity(s, s.phases, k1_);
    for (std::size_t i = 0; i < n; ++i) stage_[i] = s.phases[i] + 0.5 * dt_ * k1_[i];
    velocity(s, stage_, k2_);
    for (std::size_t i = 0; i < n; ++i) stage_[i] = s.phases[i] + 0.5 * dt_ * k2_[i];
    velocity(s, stage_, k3_);
    for (std::size_t i = 0; i < n; ++i) stage_[i] = s.phases[i] + dt_ * k3_[i];
    velocity(s, stage_, k4_);
    for (std::size_t i = 0; i < n; ++i)
      s.phases[i] = detail::wrap_phase(
          s.phases[i] + dt_ / 6.0 * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]), s.laps[i]);
    s.t += dt_;
  }

 private:
  void velocity(const FiniteNState& s, const std::vector<double>& th, std::vector<double>& out) {
    const std::size_t n = s.N();
    parallelFor(n, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) e_[i] = std::polar(1.0, th[i]);
    }, 16384);
    const cplx Z = detail::pairwise_sum(e_.data(), n) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = s.freqs[i] + s.K * (Z * std::conj(e_[i])).imag();
  }

  double dt_;
  std::vector<double> k1_, k2_, k3_, k4_, stage_;
  std::vector<cplx> e_;
};

inline FiniteNState stepRK4(FiniteNState s, double dt) {
  FiniteNStepper(s, dt).advance(s);
  return s;
}

struct FiniteNRun {
  std::vector<double> times;
  std::vector<OrderParameterN> order;
};

/// Integrates to T, recording the order parameter every `every` steps.
inline FiniteNRun runFiniteN(FiniteNState& s, double dt, double T, int every = 1) {
  if (!(T > 0.0)) fail(Errc::InvalidArgument, "horizon must be positive");
  if (every < 1) fail(Errc::InvalidArgument, "output stride must be at least 1");
  FiniteNStepper stepper(s, dt);
  const auto steps = static_cast<long>(std::floor((T - s.t) / dt + 1e-9));
  const double t0 = s.t;
  FiniteNRun run;
  run.times.push_back(s.t);
  run.order.push_back(orderParameterN(s));
  for (long i = 1; i <= steps; ++i) {
    stepper.advance(s);
    s.t = t0 + static_cast<double>(i) * dt;
    if (i % every == 0 || i == steps) {
      run.times.push_back(s.t);
      run.order.push_back(orderParameterN(s));
    }
  }
  return run;
}

}  // namespace kdamp
