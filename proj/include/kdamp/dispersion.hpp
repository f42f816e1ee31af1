#pragma once

// Dispersion function of the incoherent state,
//   D(omega) = 1 - (K/2) \int_0^inf ghat(t) e^{-i omega t} dt,   Im omega <= 0,
// with its boundary (Hilbert) representation, the winding number of the real
// line image, Penrose-type critical couplings and unstable roots.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "kdamp/errors.hpp"
#include "kdamp/freqdist.hpp"
#include "kdamp/gauss_legendre.hpp"

namespace kdamp {

namespace detail {

// \int_a^inf exp(-u^2/2 - i z u) du for Im z <= 0 and a >= 0, by composite
// Gauss-Legendre on [a, a + 9].
inline cplx gaussian_laplace_tail(cplx z, double a) {
  constexpr double length = 9.0;  // exp(-(a + length)^2/2 + a^2/2) < 3e-18
  const int panels = 8 + static_cast<int>(std::ceil((std::abs(z.real()) + std::abs(z.imag())) * length / 4.0));
  return quad::integrate([&](double u) { return std::exp(cplx(-0.5 * u * u, 0.0) - cplx(0.0, 1.0) * z * u); }, a,
                         a + length, panels);
}

// J0(z) = \int_0^inf exp(-u^2/2 - i z u) du for Im z <= 0 (standard Gaussian).
inline cplx gaussian_laplace_standard(cplx z) {
  if (std::abs(z) > 40.0) {
    // Repeated integration by parts; ghat^(2m)(0) = (-1)^m (2m-1)!!.
    const cplx iz = cplx(0.0, 1.0) * z;
    const cplx inv = 1.0 / iz;
    const cplx inv2 = inv * inv;
    cplx term = inv, sum = inv;
    for (int m = 1; m <= 8; ++m) {
      term *= -(2.0 * m - 1.0) * inv2;
      sum += term;
    }
    return sum;
  }
  return gaussian_laplace_tail(z, 0.0);
}

}  // namespace detail

/// D_G for G = (K/2) ghat. Immutable value type.
struct DispersionFunction {
  FrequencyDistribution dist;
  double coupling = 0.0;
  double laplaceHorizon = 0.0;  // T_L with (K/2) \int_{T_L}^inf |ghat| <= tailBound
  double tailBound = 1e-12;

  DispersionFunction(FrequencyDistribution d, double K, double tail = 1e-12)
      : dist(std::move(d)), coupling(K), tailBound(tail) {
    if (!(K >= 0.0) || !std::isfinite(K)) fail(Errc::InvalidArgument, "coupling must be finite and nonnegative");
    laplaceHorizon = dist.fourierTailHorizon(std::max(K, 1.0) / 2.0, tail);
  }
};

/// \int_0^inf ghat(t) e^{-i z t} dt: closed form per Cauchy component, scaled
/// standard-Gaussian transform otherwise.
inline cplx laplaceTransform(const FrequencyDistribution& dist, cplx z) {
  if (z.imag() > 0.0) fail(Errc::DomainError, "dispersion function is defined for Im(omega) <= 0 only");
  cplx s{};
  const auto& ws = dist.weights();
  const auto& cs = dist.components();
  for (std::size_t i = 0; i < cs.size(); ++i) {
    if (const auto* ca = std::get_if<Cauchy>(&cs[i])) {
      s += ws[i] / (ca->halfWidth + cplx(0.0, 1.0) * (ca->center + z));
    } else {
      const auto& ga = std::get<Gaussian>(cs[i]);
      s += ws[i] / ga.stdDev * detail::gaussian_laplace_standard((z + ga.center) / ga.stdDev);
    }
  }
  return s;
}

inline cplx evaluate(const DispersionFunction& df, cplx z) {
  return 1.0 - 0.5 * df.coupling * laplaceTransform(df.dist, z);
}

/// Same quantity by composite Gauss-Legendre on [0, T_L]; independent of the
/// closed forms.
inline cplx evaluateByQuadrature(const DispersionFunction& df, cplx z) {
  if (z.imag() > 0.0) fail(Errc::DomainError, "dispersion function is defined for Im(omega) <= 0 only");
  double spread = 0.0;
  for (const auto& c : df.dist.components()) spread = std::max(spread, std::abs(detail::component_center(c)));
  const double T = df.laplaceHorizon;
  const double rate = std::abs(z.real()) + spread + std::abs(z.imag());
  const int panels = 16 + static_cast<int>(std::ceil(rate * T / 4.0 + 4.0 * T * df.dist.minWidth()));
  const cplx integral = quad::integrate(
      [&](double t) { return fourierTransform(df.dist, t) * std::exp(-cplx(0.0, 1.0) * z * t); }, 0.0, T, panels);
  return 1.0 - 0.5 * df.coupling * integral;
}

/// H(u) = \int_0^inf (g(u - s) - g(u + s)) / s ds, the principal-value part.
/// Below s = 1e-4 the integrand is replaced by its limit -2 g'(u).
inline double hilbertPart(const FrequencyDistribution& dist, double u) {
  const double width = dist.minWidth();
  const double mid = std::abs(u - dist.minCenter()) + std::abs(u - dist.maxCenter()) + 20.0 * width;
  const double gp = densityDerivative(dist, u, 1);
  auto integrand = [&](double s) {
    if (s < 1e-4) return -2.0 * gp;
    return (dist.density(u - s) - dist.density(u + s)) / s;
  };
  const int panels = static_cast<int>(std::ceil(mid / (0.25 * width)));
  double total = quad::integrate(integrand, 0.0, mid, panels);
  // Tail [mid, mid * 1e8] in s = mid * e^v.
  total += quad::integrate([&](double v) {
    const double s = mid * std::exp(v);
    return integrand(s) * s;
  }, 0.0, std::log(1e8), 16);
  return total;
}

struct BoundaryValue {
  double omega = 0.0;
  cplx laplace;  // by quadrature of the Laplace integral
  cplx hilbert;  // 1 - (K/2)(pi g(-omega) + i H(-omega))
};

/// Boundary values by two independent routes. Under the transform convention
/// ghat(t) = \int g e^{-i t omega}, the boundary identity reads
///   \int_0^inf ghat(t) e^{-i omega t} dt = pi g(-omega) + i H(-omega).
inline std::vector<BoundaryValue> boundaryValues(const DispersionFunction& df, const std::vector<double>& omegas,
                                                 double tolerance = 1e-6) {
  std::vector<BoundaryValue> out;
  out.reserve(omegas.size());
  const double halfK = 0.5 * df.coupling;
  for (double w : omegas) {
    if (!std::isfinite(w)) fail(Errc::InvalidArgument, "boundary grid must be finite");
    BoundaryValue bv;
    bv.omega = w;
    bv.laplace = evaluateByQuadrature(df, cplx(w, 0.0));
    bv.hilbert = 1.0 - halfK * cplx(std::numbers::pi * df.dist.density(-w), hilbertPart(df.dist, -w));
    if (std::abs(bv.laplace - bv.hilbert) > tolerance)
      fail(Errc::CrossCheckFailure, "Laplace and Hilbert boundary values disagree at omega=" + std::to_string(w));
    out.push_back(bv);
  }
  return out;
}

struct CriticalCoupling {
  double value = std::numeric_limits<double>::infinity();
  std::vector<double> criticalFrequencies;  // where Im D = 0 and the Penrose bound is attained
  std::vector<double> boundaryZeros;        // every real omega with Im D(omega) = 0
};

namespace detail {

// Real zeros of H on a sinh-spaced scan around the centres.
inline std::vector<double> hilbert_zeros(const FrequencyDistribution& dist) {
  const double c0 = 0.5 * (dist.minCenter() + dist.maxCenter());
  const double s = dist.minWidth();
  const double reach = 0.5 * (dist.maxCenter() - dist.minCenter()) + 50.0 * s;
  const double vmax = std::asinh(reach / s);
  constexpr int kScan = 2000;  // even: v = 0 lands on the centre
  std::vector<double> us(kScan + 1), hs(kScan + 1);
  for (int i = 0; i <= kScan; ++i) {
    const double v = -vmax + 2.0 * vmax * i / kScan;
    us[i] = c0 + s * std::sinh(v);
    hs[i] = hilbertPart(dist, us[i]);
  }
  std::vector<double> zeros;
  auto h = [&](double u) { return hilbertPart(dist, u); };
  for (int i = 0; i <= kScan; ++i) {
    if (hs[i] == 0.0) {
      zeros.push_back(us[i]);
      continue;
    }
    if (i < kScan && hs[i + 1] != 0.0 && std::signbit(hs[i]) != std::signbit(hs[i + 1])) {
      std::uintmax_t iters = 200;
      auto [a, b] =
          boost::math::tools::toms748_solve(h, us[i], us[i + 1], hs[i], hs[i + 1],
                                            boost::math::tools::eps_tolerance<double>(48), iters);
      zeros.push_back(0.5 * (a + b));
    }
  }
  return zeros;
}

}  // namespace detail

/// K_c = min over real zeros u* of H of 2 / (pi g(u*)). Because D = 1 - K J(omega)
/// is affine in K, this is the first coupling at which the boundary criterion
/// fails. Frequencies are reported in the coordinate of D (omega* = -u*).
inline CriticalCoupling criticalCoupling(const FrequencyDistribution& dist) {
  CriticalCoupling cc;
  const auto zeros = detail::hilbert_zeros(dist);
  std::vector<double> thresholds;
  for (double u : zeros) {
    cc.boundaryZeros.push_back(0.0 - u);  // no negative zero
    thresholds.push_back(2.0 / (std::numbers::pi * dist.density(u)));
  }
  if (zeros.empty()) return cc;
  cc.value = *std::min_element(thresholds.begin(), thresholds.end());
  for (std::size_t i = 0; i < zeros.size(); ++i)
    if (thresholds[i] <= cc.value * (1.0 + 1e-9)) cc.criticalFrequencies.push_back(0.0 - zeros[i]);
  std::sort(cc.criticalFrequencies.begin(), cc.criticalFrequencies.end());
  std::sort(cc.boundaryZeros.begin(), cc.boundaryZeros.end());
  return cc;
}

struct ContourParams {
  int initialSegments = 1024;
  int maxDepth = 40;
  double maxArgStep = std::numbers::pi / 4.0;
  double chordFraction = 0.1;  // accepted chord <= fraction * min(|D_a|, |D_b|)
  double marginTol = 1e-9;     // |D| below this on the real line is marginal
};

struct WindingResult {
  int winding = 0;
  double minAbs = std::numeric_limits<double>::infinity();
  double minAbsOmega = 0.0;
  double resolution = 0.0;  // largest accepted chord / local |D|
  std::size_t evaluations = 0;
};

/// Index of 0 with respect to {D(omega)}, omega over the extended real line,
/// by accumulated argument on omega = c + s tan(phi) with adaptive bisection
/// in phi. The curve is closed through D(+-inf) = 1. Positive orientation
/// counts zeros in the lower half-plane.
inline WindingResult windingNumber(const DispersionFunction& df, const ContourParams& params = {}) {
  WindingResult res;
  const double c0 = 0.5 * (df.dist.minCenter() + df.dist.maxCenter());
  const double scale = df.dist.minWidth() + 0.5 * (df.dist.maxCenter() - df.dist.minCenter());
  const double half = 0.5 * std::numbers::pi;
  auto at = [&](double phi) -> cplx {
    ++res.evaluations;
    if (std::abs(phi) >= half) return cplx(1.0, 0.0);
    const double w = c0 + scale * std::tan(phi);
    const cplx d = evaluate(df, cplx(w, 0.0));
    if (std::abs(d) < res.minAbs) {
      res.minAbs = std::abs(d);
      res.minAbsOmega = w;
    }
    return d;
  };

  struct Segment {
    double a, b;
    cplx da, db;
    int depth;
  };
  std::vector<Segment> work;
  const int n = params.initialSegments;
  std::vector<cplx> values(n + 1);
  for (int i = 0; i <= n; ++i) values[i] = at(-half + std::numbers::pi * i / n);
  for (int i = 0; i < n; ++i)
    work.push_back({-half + std::numbers::pi * i / n, -half + std::numbers::pi * (i + 1) / n, values[i], values[i + 1], 0});

  double total = 0.0;
  while (!work.empty()) {
    Segment seg = work.back();
    work.pop_back();
    const double local = std::min(std::abs(seg.da), std::abs(seg.db));
    if (local < params.marginTol)
      fail(Errc::MarginalError, "dispersion curve passes within tolerance of 0 near omega=" +
                                    std::to_string(res.minAbsOmega));
    const double darg = std::arg(seg.db / seg.da);
    const double chord = std::abs(seg.db - seg.da);
    if (std::abs(darg) <= params.maxArgStep && chord <= params.chordFraction * local) {
      total += darg;
      res.resolution = std::max(res.resolution, chord / local);
      continue;
    }
    if (seg.depth >= params.maxDepth)
      fail(Errc::MarginalError, "contour refinement did not resolve the curve near omega=" +
                                    std::to_string(c0 + scale * std::tan(0.5 * (seg.a + seg.b))));
    const double m = 0.5 * (seg.a + seg.b);
    const cplx dm = at(m);
    work.push_back({seg.a, m, seg.da, dm, seg.depth + 1});
    work.push_back({m, seg.b, dm, seg.db, seg.depth + 1});
  }
  if (res.minAbs < params.marginTol)
    fail(Errc::MarginalError, "dispersion function vanishes on the real line near omega=" + std::to_string(res.minAbsOmega));
  const double turns = -total / (2.0 * std::numbers::pi);
  res.winding = static_cast<int>(std::lround(turns));
  if (std::abs(turns - res.winding) > 1e-6) fail(Errc::MarginalError, "accumulated argument is not a whole turn");
  return res;
}

namespace detail {

inline std::optional<cplx> newton_root(const DispersionFunction& df, cplx z, int maxIter = 100) {
  constexpr double h = 1e-6;
  cplx d = evaluate(df, z);
  for (int it = 0; it < maxIter; ++it) {
    if (std::abs(d) <= 1e-13) break;
    const cplx deriv = (evaluate(df, z + h) - evaluate(df, z - h)) / (2.0 * h);
    if (std::abs(deriv) == 0.0 || !std::isfinite(std::abs(deriv))) return std::nullopt;
    const cplx step = d / deriv;
    double lambda = 1.0;
    bool moved = false;
    for (int k = 0; k < 40; ++k, lambda *= 0.5) {
      const cplx trial = z - lambda * step;
      if (trial.imag() > 0.0) continue;
      const cplx dt = evaluate(df, trial);
      if (std::abs(dt) < std::abs(d)) {
        z = trial;
        d = dt;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  if (std::abs(d) <= 1e-10 && z.imag() < -1e-12) return z;
  return std::nullopt;
}

}  // namespace detail

/// Roots of D in the open lower half-plane, seeded below the boundary zeros where
/// Re D is most negative. Returns at most `count` distinct roots.
inline std::vector<cplx> findUnstableRoots(const DispersionFunction& df, int count) {
  std::vector<cplx> roots;
  if (count <= 0 || df.coupling == 0.0) return roots;
  const auto cc = criticalCoupling(df.dist);
  std::vector<std::pair<double, double>> seeds;  // (Re D, omega)
  for (double w : cc.boundaryZeros) seeds.emplace_back(evaluate(df, cplx(w, 0.0)).real(), w);
  std::sort(seeds.begin(), seeds.end());
  const double scale = df.dist.minWidth();
  for (const auto& [re, w] : seeds) {
    if (re >= 0.0) continue;
    for (double y : {1e-3, 1e-2, 0.1, 0.3, 1.0, 3.0, 10.0}) {
      auto root = detail::newton_root(df, cplx(w, -y * scale));
      if (!root) continue;
      const bool known = std::any_of(roots.begin(), roots.end(),
                                     [&](cplx r) { return std::abs(r - *root) < 1e-7 * (1.0 + std::abs(r)); });
      if (!known) roots.push_back(*root);
      break;
    }
    if (static_cast<int>(roots.size()) >= count) break;
  }
  return roots;
}

/// A root of D with Im < 0, or nullopt when the winding number is 0.
inline std::optional<cplx> findUnstableRoot(const DispersionFunction& df) {
  if (df.coupling == 0.0) return std::nullopt;
  WindingResult wr;
  try {
    wr = windingNumber(df);
  } catch (const Error& e) {
    if (e.code() == Errc::MarginalError) return std::nullopt;
    throw;
  }
  if (wr.winding < 1) return std::nullopt;
  auto roots = findUnstableRoots(df, 1);
  if (roots.empty()) fail(Errc::RootNotConverged, "Newton iteration found no root in the lower half-plane");
  return roots.front();
}

/// (K/2) ||ghat||_{L^1(R+)} < 1, a sufficient condition for stability.
inline bool l1SufficientCheck(const DispersionFunction& df) {
  return 0.5 * df.coupling * fourierMoment(df.dist, 0) < 1.0;
}

enum class Verdict { Stable, MarginallyUnstable, Unstable };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Stable: return "Stable";
    case Verdict::MarginallyUnstable: return "MarginallyUnstable";
    case Verdict::Unstable: return "Unstable";
  }
  return "Unknown";
}

struct BoundaryZero {
  double omega;
  double reD;
  double imD;
};

struct StabilityReport {
  Verdict verdict = Verdict::Stable;
  int windingNumber = 0;
  std::vector<BoundaryZero> boundaryZeros;
  std::vector<cplx> unstableRoots;
  double criticalCoupling = std::numeric_limits<double>::infinity();
  // diagnostics
  double minAbsBoundary = 0.0;
  double minAbsOmega = 0.0;
  double contourResolution = 0.0;
  std::size_t contourEvaluations = 0;
  bool l1Sufficient = false;
};

inline StabilityReport analyzeStability(const DispersionFunction& df, const ContourParams& params = {}) {
  StabilityReport rep;
  const auto cc = criticalCoupling(df.dist);
  rep.criticalCoupling = cc.value;
  for (double w : cc.boundaryZeros) {
    const cplx d = evaluate(df, cplx(w, 0.0));
    rep.boundaryZeros.push_back({w, d.real(), d.imag()});
  }
  rep.l1Sufficient = l1SufficientCheck(df);
  try {
    const auto wr = windingNumber(df, params);
    rep.windingNumber = wr.winding;
    rep.minAbsBoundary = wr.minAbs;
    rep.minAbsOmega = wr.minAbsOmega;
    rep.contourResolution = wr.resolution;
    rep.contourEvaluations = wr.evaluations;
  } catch (const Error& e) {
    if (e.code() != Errc::MarginalError) throw;
    rep.verdict = Verdict::MarginallyUnstable;
    rep.minAbsBoundary = 0.0;
    return rep;
  }
  if (rep.windingNumber == 0) {
    rep.verdict = Verdict::Stable;
    return rep;
  }
  rep.verdict = Verdict::Unstable;
  rep.unstableRoots = findUnstableRoots(df, rep.windingNumber);
  if (rep.unstableRoots.empty()) fail(Errc::RootNotConverged, "winding number positive but no root converged");
  return rep;
}

}  // namespace kdamp
