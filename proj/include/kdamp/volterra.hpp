#pragma once

// Second-kind Volterra equation R(t) = F(t) + \int_0^t G(t - s) R(s) ds on a
// uniform grid, decay fits, empirical weighted-sup constants and the
// exponential-growth witness for unstable kernels.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "kdamp/dispersion.hpp"
#include "kdamp/errors.hpp"
#include "kdamp/freqdist.hpp"
#include "kdamp/gauss_legendre.hpp"

namespace kdamp {

using TimeFunction = std::function<cplx(double)>;

struct VolterraProblem {
  TimeFunction kernel;
  TimeFunction input;
  double timeStep = 1e-2;
  double horizon = 1.0;
};

struct VolterraSolution {
  std::vector<double> times;
  std::vector<cplx> values;
  int schemeOrder = 2;

  /// max_j (1 + t_j)^n |R_j| over t_j <= upTo.
  double weightedSup(double n, double upTo = std::numeric_limits<double>::infinity()) const {
    double m = 0.0;
    for (std::size_t j = 0; j < times.size() && times[j] <= upTo * (1.0 + 1e-12); ++j)
      m = std::max(m, std::pow(1.0 + times[j], n) * std::abs(values[j]));
    return m;
  }
};

/// Product trapezoidal rule, implicit in the diagonal term:
///   R_j (1 - dt G_0 / 2) = F_j + dt (G_j R_0 / 2 + sum_{0<i<j} G_{j-i} R_i).
inline VolterraSolution solve(const VolterraProblem& problem) {
  const double dt = problem.timeStep, T = problem.horizon;
  if (!(dt > 0.0) || !(T > 0.0) || dt > T * (1.0 + 1e-12))
    fail(Errc::InvalidArgument, "need 0 < timeStep <= horizon");
  if (!problem.kernel || !problem.input) fail(Errc::InvalidArgument, "kernel and input must be set");
  const auto steps = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
  VolterraSolution sol;
  sol.times.resize(steps + 1);
  sol.values.resize(steps + 1);
  std::vector<cplx> G(steps + 1), F(steps + 1);
  for (std::size_t j = 0; j <= steps; ++j) {
    sol.times[j] = static_cast<double>(j) * dt;
    G[j] = problem.kernel(sol.times[j]);
    F[j] = problem.input(sol.times[j]);
    if (!std::isfinite(G[j].real()) || !std::isfinite(G[j].imag()))
      fail(Errc::InvalidArgument, "kernel is not finite on the grid");
  }
  const cplx denom = 1.0 - 0.5 * dt * G[0];
  if (std::abs(denom) < 1e-12) fail(Errc::StepSolveFailure, "1 - dt G(0)/2 vanishes");
  sol.values[0] = F[0];
  for (std::size_t j = 1; j <= steps; ++j) {
    cplx s = 0.5 * G[j] * sol.values[0];
    for (std::size_t i = 1; i < j; ++i) s += G[j - i] * sol.values[i];
    sol.values[j] = (F[j] + dt * s) / denom;
  }
  return sol;
}

/// t -> (K/2) ghat(t).
inline TimeFunction kuramotoKernel(const FrequencyDistribution& dist, double K) {
  if (!(K >= 0.0)) fail(Errc::InvalidArgument, "coupling must be nonnegative");
  return [dist, K](double t) { return 0.5 * K * fourierTransform(dist, t); };
}

/// Linearised input F(t) = p1hat(0, t): the free-transport image of the
/// initial first mode.
inline TimeFunction linearInputFromInitialData(TimeFunction p1hat0) { return p1hat0; }

struct FitWindow {
  double begin = 0.0;
  double end = 0.0;
};

struct DecayFit {
  double exponent = 0.0;
  double amplitude = 0.0;
  FitWindow window;
  double residual = 0.0;  // RMS of the log-log fit
  std::size_t samples = 0;
};

/// Least squares of log|R| against log t over samples in the window.
/// Throws WindowTooNoisy when |R| reaches 1e-14 in the window or the residual
/// exceeds 0.5 (unless `throwOnNoise` is false, in which case the fit is
/// returned with its residual).
inline DecayFit fitDecay(const std::vector<double>& times, const std::vector<cplx>& values, FitWindow window,
                         bool throwOnNoise = true) {
  if (!(window.begin > 0.0) || !(window.end > window.begin))
    fail(Errc::InvalidArgument, "fit window must satisfy 0 < begin < end");
  if (times.empty() || window.end > times.back() * (1.0 + 1e-12))
    fail(Errc::InvalidArgument, "fit window exceeds the solution horizon");
  std::vector<double> xs, ys;
  for (std::size_t j = 0; j < times.size(); ++j) {
    if (times[j] < window.begin || times[j] > window.end) continue;
    const double a = std::abs(values[j]);
    if (!(a > 1e-14)) {
      if (throwOnNoise) fail(Errc::WindowTooNoisy, "|R| at machine noise inside the fit window");
      continue;
    }
    xs.push_back(std::log(times[j]));
    ys.push_back(std::log(a));
  }
  if (xs.size() < 3) fail(Errc::WindowTooNoisy, "fewer than three usable samples in the fit window");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - (intercept + slope * xs[i]);
    rss += r * r;
  }
  DecayFit fit;
  fit.exponent = -slope;
  fit.amplitude = std::exp(intercept);
  fit.window = window;
  fit.residual = std::sqrt(rss / n);
  fit.samples = xs.size();
  if (throwOnNoise && fit.residual > 0.5)
    fail(Errc::WindowTooNoisy, "log-log residual " + std::to_string(fit.residual) + " exceeds 0.5");
  return fit;
}

/// Default window [T/4, 0.9 T].
inline DecayFit fitDecay(const VolterraSolution& sol, std::optional<FitWindow> window = std::nullopt,
                         bool throwOnNoise = true) {
  const double T = sol.times.back();
  return fitDecay(sol.times, sol.values, window.value_or(FitWindow{0.25 * T, 0.9 * T}), throwOnNoise);
}

struct StabilityConstant {
  double value = 0.0;                 // ratio at the full horizon
  std::array<double, 3> horizons{};   // T/4, T/2, T
  std::array<double, 3> ratios{};     // max over inputs of weightedSup_R / weightedSup_F
  bool flat = false;                  // ratio(T) / ratio(T/2) < 1.2
};

/// max over inputs of sup (1+t)^n |R| / sup (1+t)^n |F| on [0, T'] for
/// T' in {T/4, T/2, T}. One solve per input covers all three horizons since
/// R on [0, T'] only depends on F on [0, T'].
inline StabilityConstant empiricalStabilityConstant(const FrequencyDistribution& dist, double K, double n,
                                                    const std::vector<TimeFunction>& inputs, double timeStep,
                                                    double horizon) {
  if (inputs.empty()) fail(Errc::InvalidArgument, "need at least one input");
  StabilityConstant sc;
  sc.horizons = {0.25 * horizon, 0.5 * horizon, horizon};
  const auto kernel = kuramotoKernel(dist, K);
  for (const auto& f : inputs) {
    const VolterraSolution sol = solve({kernel, f, timeStep, horizon});
    for (int h = 0; h < 3; ++h) {
      double supF = 0.0;
      for (std::size_t j = 0; j < sol.times.size() && sol.times[j] <= sc.horizons[h] * (1.0 + 1e-12); ++j)
        supF = std::max(supF, std::pow(1.0 + sol.times[j], n) * std::abs(f(sol.times[j])));
      if (!(supF > 0.0)) fail(Errc::InvalidArgument, "input vanishes on the horizon");
      sc.ratios[h] = std::max(sc.ratios[h], sol.weightedSup(n, sc.horizons[h]) / supF);
    }
  }
  const bool growing = sc.ratios[0] < sc.ratios[1] && sc.ratios[1] < sc.ratios[2];
  if (growing && sc.ratios[2] > 10.0 * sc.ratios[0])
    fail(Errc::UnstableKernel, "weighted-sup ratio grows from " + std::to_string(sc.ratios[0]) + " to " +
                                   std::to_string(sc.ratios[2]));
  sc.value = sc.ratios[2];
  sc.flat = sc.ratios[2] < 1.2 * sc.ratios[1];
  return sc;
}

struct InstabilityWitness {
  TimeFunction input;
  cplx root;             // omega_0, Im < 0
  double predictedRate;  // -Im omega_0
  cplx amplitude;
};

namespace detail {

// e^{i w0 t} \int_t^inf ghat(u) e^{-i w0 u} du for Im w0 < 0.
inline cplx shifted_laplace(const FrequencyDistribution& dist, cplx w0, double t) {
  cplx s{};
  const auto& ws = dist.weights();
  const auto& cs = dist.components();
  const cplx i(0.0, 1.0);
  for (std::size_t k = 0; k < cs.size(); ++k) {
    if (const auto* ca = std::get_if<Cauchy>(&cs[k])) {
      const cplx a = ca->halfWidth + i * ca->center;
      s += ws[k] * std::exp(-a * t) / (a + i * w0);
    } else {
      const auto& ga = std::get<Gaussian>(cs[k]);
      const cplx zeta = (ga.center + w0) / ga.stdDev;
      s += ws[k] * std::exp(i * w0 * t) / ga.stdDev * gaussian_laplace_tail(zeta, ga.stdDev * t);
    }
  }
  return s;
}

}  // namespace detail

/// F(t) = A \int_0^inf G(t + s) e^{-i w0 s} ds with D(w0) = 0, Im w0 < 0. The
/// Volterra solution for this input is A e^{i w0 t}.
inline InstabilityWitness instabilityWitness(const FrequencyDistribution& dist, double K, cplx amplitude) {
  if (amplitude == cplx(0.0, 0.0)) fail(Errc::InvalidArgument, "witness amplitude must be nonzero");
  const DispersionFunction df(dist, K);
  const auto root = findUnstableRoot(df);
  if (!root) fail(Errc::RootNotConverged, "no unstable root: the kernel is not in the unstable regime");
  InstabilityWitness w;
  w.root = *root;
  w.predictedRate = -root->imag();
  w.amplitude = amplitude;
  const cplx w0 = *root;
  w.input = [dist, K, amplitude, w0](double t) { return amplitude * 0.5 * K * detail::shifted_laplace(dist, w0, t); };
  return w;
}

/// Cauchy-Schwarz bound |F(t)| <= |A| ||G||_{L^2} ||e^{Im(w0) s}||_{L^2}.
inline double witnessBound(const FrequencyDistribution& dist, double K, const InstabilityWitness& w) {
  const double T = dist.fourierTailHorizon(1.0, 1e-16);
  const double g2 = quad::integrate([&](double t) { return std::norm(fourierTransform(dist, t)); }, 0.0, T,
                                    64 + static_cast<int>(4.0 * T * dist.minWidth()));
  return std::abs(w.amplitude) * 0.5 * K * std::sqrt(g2) / std::sqrt(2.0 * w.predictedRate);
}

/// max over t in [0, upTo] of | |R(t)| / (|A| e^{rate t}) - 1 |.
inline double witnessGrowthError(const VolterraSolution& sol, const InstabilityWitness& w, double upTo) {
  double worst = 0.0;
  for (std::size_t j = 0; j < sol.times.size() && sol.times[j] <= upTo * (1.0 + 1e-12); ++j) {
    const double predicted = std::abs(w.amplitude) * std::exp(w.predictedRate * sol.times[j]);
    worst = std::max(worst, std::abs(std::abs(sol.values[j]) / predicted - 1.0));
  }
  return worst;
}

}  // namespace kdamp
