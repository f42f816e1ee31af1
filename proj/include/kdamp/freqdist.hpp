#pragma once

// Frequency densities g(omega) and the quantities derived from them: point
// values, closed-form derivatives, the Fourier transform
//   ghat(t) = \int g(omega) exp(-i t omega) domega,
// Fourier moments, weighted Sobolev norms and quadrature grids adapted to g.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/roots.hpp>

#include "kdamp/errors.hpp"
#include "kdamp/gauss_legendre.hpp"

namespace kdamp {

using cplx = std::complex<double>;

inline constexpr int kMaxDerivativeOrder = 8;

struct Cauchy {
  double halfWidth = 1.0;
  double center = 0.0;
};

struct Gaussian {
  double stdDev = 1.0;
  double center = 0.0;
};

using Component = std::variant<Cauchy, Gaussian>;

struct Mixture {
  std::vector<double> weights;
  std::vector<Component> components;
};

enum class Family { Cauchy, Gaussian, Mixture };

namespace detail {

inline double component_density(const Component& c, double w) {
  if (const auto* ca = std::get_if<Cauchy>(&c)) {
    const double x = w - ca->center;
    return ca->halfWidth / (std::numbers::pi * (x * x + ca->halfWidth * ca->halfWidth));
  }
  const auto& ga = std::get<Gaussian>(c);
  const double z = (w - ga.center) / ga.stdDev;
  return std::exp(-0.5 * z * z) / (ga.stdDev * std::sqrt(2.0 * std::numbers::pi));
}

// Cauchy via partial fractions: g^(k)(x) = (-1)^k k!/pi * Im[(x - i Delta)^{-(k+1)}].
// Gaussian via probabilists' Hermite polynomials: g^(k) = (-1)^k He_k(z) g / sigma^k.
inline double component_derivative(const Component& c, double w, int k) {
  if (const auto* ca = std::get_if<Cauchy>(&c)) {
    const cplx z(w - ca->center, -ca->halfWidth);
    const double fact = std::tgamma(k + 1.0);
    const double sign = (k % 2 == 0) ? 1.0 : -1.0;
    return sign * fact / std::numbers::pi * std::pow(z, -(k + 1)).imag();
  }
  const auto& ga = std::get<Gaussian>(c);
  const double z = (w - ga.center) / ga.stdDev;
  double he_prev = 1.0, he = z;
  if (k == 0) he = 1.0;
  for (int j = 1; j < k; ++j) {
    const double next = z * he - j * he_prev;
    he_prev = he;
    he = next;
  }
  const double sign = (k % 2 == 0) ? 1.0 : -1.0;
  return sign * he * component_density(c, w) / std::pow(ga.stdDev, k);
}

inline cplx component_fourier(const Component& c, double t) {
  if (const auto* ca = std::get_if<Cauchy>(&c))
    return std::exp(cplx(-ca->halfWidth * std::abs(t), -ca->center * t));
  const auto& ga = std::get<Gaussian>(c);
  return std::exp(cplx(-0.5 * ga.stdDev * ga.stdDev * t * t, -ga.center * t));
}

inline double component_cdf(const Component& c, double x) {
  if (const auto* ca = std::get_if<Cauchy>(&c))
    return std::atan2(1.0, -(x - ca->center) / ca->halfWidth) / std::numbers::pi;
  const auto& ga = std::get<Gaussian>(c);
  return 0.5 * std::erfc(-(x - ga.center) / (ga.stdDev * std::numbers::sqrt2));
}

inline double component_survival(const Component& c, double x) {
  if (const auto* ca = std::get_if<Cauchy>(&c))
    return std::atan2(1.0, (x - ca->center) / ca->halfWidth) / std::numbers::pi;
  const auto& ga = std::get<Gaussian>(c);
  return 0.5 * std::erfc((x - ga.center) / (ga.stdDev * std::numbers::sqrt2));
}

// Lower-tail quantile for u in (0, 1/2]; upper quantile for survival q in (0, 1/2].
inline double component_lower_quantile(const Component& c, double u) {
  if (const auto* ca = std::get_if<Cauchy>(&c))
    return u == 0.5 ? ca->center : ca->center - ca->halfWidth / std::tan(std::numbers::pi * u);
  const auto& ga = std::get<Gaussian>(c);
  return ga.center - ga.stdDev * std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u);
}

inline double component_upper_quantile(const Component& c, double q) {
  if (const auto* ca = std::get_if<Cauchy>(&c))
    return q == 0.5 ? ca->center : ca->center + ca->halfWidth / std::tan(std::numbers::pi * q);
  const auto& ga = std::get<Gaussian>(c);
  return ga.center + ga.stdDev * std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * q);
}

inline double component_width(const Component& c) {
  if (const auto* ca = std::get_if<Cauchy>(&c)) return ca->halfWidth;
  return std::get<Gaussian>(c).stdDev;
}

inline double component_center(const Component& c) {
  return std::visit([](const auto& x) { return x.center; }, c);
}

inline void validate_component(const Component& c) {
  if (const auto* ca = std::get_if<Cauchy>(&c)) {
    if (!(ca->halfWidth > 0.0) || !std::isfinite(ca->halfWidth) || !std::isfinite(ca->center))
      fail(Errc::Validation, "Cauchy half-width must be positive and finite");
    return;
  }
  const auto& ga = std::get<Gaussian>(c);
  if (!(ga.stdDev > 0.0) || !std::isfinite(ga.stdDev) || !std::isfinite(ga.center))
    fail(Errc::Validation, "Gaussian standard deviation must be positive and finite");
}

}  // namespace detail

/// A frequency density: Cauchy, Gaussian, or a finite convex mixture of the two.
/// Immutable after construction.
class FrequencyDistribution {
 public:
  static FrequencyDistribution cauchy(double halfWidth, double center = 0.0) {
    return FrequencyDistribution(Family::Cauchy, {1.0}, {Cauchy{halfWidth, center}});
  }
  static FrequencyDistribution gaussian(double stdDev, double center = 0.0) {
    return FrequencyDistribution(Family::Gaussian, {1.0}, {Gaussian{stdDev, center}});
  }
  static FrequencyDistribution mixture(std::vector<double> weights, std::vector<Component> components) {
    return FrequencyDistribution(Family::Mixture, std::move(weights), std::move(components));
  }
  /// Symmetric bi-Cauchy: (g_Delta(. + omega0) + g_Delta(. - omega0)) / 2.
  static FrequencyDistribution biCauchy(double halfWidth, double omega0) {
    return mixture({0.5, 0.5}, {Cauchy{halfWidth, -omega0}, Cauchy{halfWidth, omega0}});
  }

  Family family() const { return family_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<Component>& components() const { return components_; }

  bool hasHeavyTail() const {
    return std::any_of(components_.begin(), components_.end(),
                       [](const Component& c) { return std::holds_alternative<Cauchy>(c); });
  }
  bool allCauchy() const {
    return std::all_of(components_.begin(), components_.end(),
                       [](const Component& c) { return std::holds_alternative<Cauchy>(c); });
  }
  /// Smallest width parameter (half-width or standard deviation).
  double minWidth() const {
    double w = std::numeric_limits<double>::infinity();
    for (const auto& c : components_) w = std::min(w, detail::component_width(c));
    return w;
  }
  double minCenter() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& c : components_) m = std::min(m, detail::component_center(c));
    return m;
  }
  double maxCenter() const {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& c : components_) m = std::max(m, detail::component_center(c));
    return m;
  }

  double density(double w) const {
    double s = 0.0;
    for (std::size_t i = 0; i < components_.size(); ++i) s += weights_[i] * detail::component_density(components_[i], w);
    return s;
  }

  double cdf(double x) const {
    double s = 0.0;
    for (std::size_t i = 0; i < components_.size(); ++i) s += weights_[i] * detail::component_cdf(components_[i], x);
    return s;
  }

  double survival(double x) const {
    double s = 0.0;
    for (std::size_t i = 0; i < components_.size(); ++i) s += weights_[i] * detail::component_survival(components_[i], x);
    return s;
  }

  /// x with cdf(x) = u, accurate in the lower tail for u <= 1/2.
  double quantile(double u) const {
    if (!(u > 0.0 && u < 1.0)) fail(Errc::InvalidArgument, "quantile level must lie in (0,1)");
    if (u > 0.5) return upperQuantile(1.0 - u);
    if (components_.size() == 1) return detail::component_lower_quantile(components_[0], u);
    return solve_monotone([this](double x) { return cdf(x); }, u,
                          [&](const Component& c) { return detail::component_lower_quantile(c, u); });
  }

  /// x with survival(x) = q, accurate in the upper tail for q <= 1/2.
  double upperQuantile(double q) const {
    if (!(q > 0.0 && q < 1.0)) fail(Errc::InvalidArgument, "tail level must lie in (0,1)");
    if (q > 0.5) return quantile(1.0 - q);
    if (components_.size() == 1) return detail::component_upper_quantile(components_[0], q);
    return solve_monotone([this](double x) { return -survival(x); }, -q,
                          [&](const Component& c) { return detail::component_upper_quantile(c, q); });
  }

  /// Horizon T with factor * \int_T^inf |ghat| <= tol, from the exponential envelopes.
  double fourierTailHorizon(double factor, double tol) const {
    auto tail = [&](double T) {
      double s = 0.0;
      for (std::size_t i = 0; i < components_.size(); ++i) {
        if (const auto* ca = std::get_if<Cauchy>(&components_[i])) {
          s += weights_[i] * std::exp(-ca->halfWidth * T) / ca->halfWidth;
        } else {
          const double sg = std::get<Gaussian>(components_[i]).stdDev;
          s += weights_[i] * std::sqrt(std::numbers::pi / 2.0) / sg * std::erfc(sg * T / std::numbers::sqrt2);
        }
      }
      return factor * s;
    };
    if (factor <= 0.0) return 1.0 / minWidth();
    double hi = 1.0 / minWidth();
    while (tail(hi) > tol) hi *= 2.0;
    double lo = 0.0;
    for (int i = 0; i < 80; ++i) {
      const double mid = 0.5 * (lo + hi);
      (tail(mid) > tol ? lo : hi) = mid;
    }
    return hi;
  }

 private:
  FrequencyDistribution(Family family, std::vector<double> weights, std::vector<Component> components)
      : family_(family), weights_(std::move(weights)), components_(std::move(components)) {
    if (components_.empty()) fail(Errc::Validation, "distribution needs at least one component");
    if (weights_.size() != components_.size()) fail(Errc::Validation, "mixture weights and components differ in length");
    double total = 0.0;
    for (double w : weights_) {
      if (!(w > 0.0) || !std::isfinite(w)) fail(Errc::Validation, "mixture weights must be strictly positive");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) fail(Errc::Validation, "mixture weights must sum to 1");
    for (const auto& c : components_) detail::validate_component(c);
  }

  template <class Monotone, class Bracket>
  double solve_monotone(Monotone f, double target, Bracket bracket) const {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& c : components_) {
      const double x = bracket(c);
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    if (lo == hi) return lo;
    auto g = [&](double x) { return f(x) - target; };
    std::uintmax_t iters = 200;
    auto [a, b] = boost::math::tools::toms748_solve(g, lo, hi, boost::math::tools::eps_tolerance<double>(50), iters);
    return 0.5 * (a + b);
  }

  Family family_;
  std::vector<double> weights_;
  std::vector<Component> components_;
};

inline double density(const FrequencyDistribution& dist, double w) { return dist.density(w); }

inline double densityDerivative(const FrequencyDistribution& dist, double w, int order) {
  if (order < 0) fail(Errc::InvalidArgument, "derivative order must be nonnegative");
  if (order > kMaxDerivativeOrder)
    fail(Errc::UnsupportedOrder, "closed-form derivatives implemented up to order 8, requested " + std::to_string(order));
  double s = 0.0;
  const auto& ws = dist.weights();
  const auto& cs = dist.components();
  for (std::size_t i = 0; i < cs.size(); ++i) s += ws[i] * detail::component_derivative(cs[i], w, order);
  return s;
}

/// ghat(t) = \int g(omega) e^{-i t omega} domega, exact for every supported family.
inline cplx fourierTransform(const FrequencyDistribution& dist, double t) {
  cplx s{};
  const auto& ws = dist.weights();
  const auto& cs = dist.components();
  for (std::size_t i = 0; i < cs.size(); ++i) s += ws[i] * detail::component_fourier(cs[i], t);
  return s;
}

/// \int_0^inf t^n |ghat(t)| dt. Closed form for single-family laws, adaptive
/// Gauss-Kronrod otherwise.
inline double fourierMoment(const FrequencyDistribution& dist, int n) {
  if (n < 0) fail(Errc::InvalidArgument, "moment order must be nonnegative");
  if (dist.family() == Family::Cauchy) {
    const double d = std::get<Cauchy>(dist.components()[0]).halfWidth;
    return std::tgamma(n + 1.0) / std::pow(d, n + 1);
  }
  if (dist.family() == Family::Gaussian) {
    const double s = std::get<Gaussian>(dist.components()[0]).stdDev;
    return std::pow(2.0, 0.5 * (n - 1)) * std::tgamma(0.5 * (n + 1)) / std::pow(s, n + 1);
  }
  auto f = [&](double t) { return std::pow(t, n) * std::abs(fourierTransform(dist, t)); };
  const double horizon = dist.fourierTailHorizon(1.0, 1e-16) * (1.0 + 0.25 * n);
  double error = 0.0;
  const double value =
      boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, horizon, 25, 1e-13, &error);
  if (!std::isfinite(value) || error > 1e-8 * (1.0 + std::abs(value)))
    fail(Errc::Divergent, "Fourier moment quadrature did not converge");
  return value;
}

/// Discretisation of \int . g(omega) domega on [omega_min, omega_max].
/// `weights` include g(omega_j); `bareWeights` are the plain domega weights.
struct QuadratureGrid {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::vector<double> bareWeights;
  double massCovered = 0.0;        // sum of weights
  double analyticMass = 0.0;       // exact mass of g on the interval
  double truncationEstimate = 0.0; // mass of g outside the interval
  double minGap = 0.0;
  double maxGap = 0.0;
  int panelOrder = 0;

  std::size_t size() const { return nodes.size(); }
};

/// Fill gap statistics and masses from explicit nodes and weights.
inline QuadratureGrid gridFromNodes(std::vector<double> nodes, std::vector<double> weights,
                                    std::vector<double> bareWeights) {
  if (nodes.size() < 2 || nodes.size() != weights.size() || nodes.size() != bareWeights.size())
    fail(Errc::InvalidArgument, "grid needs at least two nodes with matching weights");
  QuadratureGrid g;
  g.nodes = std::move(nodes);
  g.weights = std::move(weights);
  g.bareWeights = std::move(bareWeights);
  g.minGap = std::numeric_limits<double>::infinity();
  for (std::size_t j = 1; j < g.nodes.size(); ++j) {
    const double gap = g.nodes[j] - g.nodes[j - 1];
    if (!(gap > 0.0)) fail(Errc::InvalidArgument, "grid nodes must be strictly increasing");
    g.minGap = std::min(g.minGap, gap);
    g.maxGap = std::max(g.maxGap, gap);
  }
  for (double w : g.weights) g.massCovered += w;
  g.analyticMass = g.massCovered;
  return g;
}

struct GridOptions {
  int nodeCount = 512;
  double massThreshold = 1.0 - 1e-8;
  int panelOrder = 16;
  bool uniform = false;  // equal panels in omega for every law
};

/// Composite Gauss-Legendre grid adapted to g. The interval is cut symmetrically
/// in probability so that the exact covered mass is 1 - (1 - threshold)/2.
/// Light-tailed laws use equal panels in omega. Laws with a Cauchy component use
/// equal panels on a core [minCenter - 5s, maxCenter + 5s] and equal panels in xi
/// on each tail, omega = edge + s sinh(xi), with s the smallest component width.
/// `uniform` forces equal panels for heavy tails too, which is what oscillatory
/// integrands such as e^{-i omega t} g need.
inline QuadratureGrid buildGrid(const FrequencyDistribution& dist, const GridOptions& opt = {}) {
  if (opt.nodeCount < 8) fail(Errc::InvalidArgument, "grid needs at least 8 nodes");
  if (!(opt.massThreshold > 0.0 && opt.massThreshold < 1.0))
    fail(Errc::InvalidArgument, "mass threshold must lie in (0,1)");
  if (opt.panelOrder < 2) fail(Errc::InvalidArgument, "panel order must be at least 2");

  const double tail = 0.25 * (1.0 - opt.massThreshold);
  const double a = dist.quantile(tail);
  const double b = dist.upperQuantile(tail);
  const double s = dist.minWidth();

  struct Segment {
    double x0, x1, anchor;
    bool mapped;
    double cost;  // relative panel demand per unit of x
  };
  std::vector<Segment> segments;
  if (dist.hasHeavyTail() && !opt.uniform) {
    const double lo = std::max(a, dist.minCenter() - 5.0 * s);
    const double hi = std::min(b, dist.maxCenter() + 5.0 * s);
    if (a < lo) segments.push_back({-std::asinh((lo - a) / s), 0.0, lo, true, 0.5});
    segments.push_back({0.0, (hi - lo) / s, lo, false, 2.0});
    if (b > hi) segments.push_back({0.0, std::asinh((b - hi) / s), hi, true, 0.5});
  } else {
    segments.push_back({0.0, (b - a) / s, a, false, 1.0});
  }

  const int panels = std::max(1, opt.nodeCount / opt.panelOrder);
  const int base = opt.nodeCount / panels;
  const int extra = opt.nodeCount % panels;

  // Panels per segment in proportion to cost-weighted length, at least one each.
  double totalLength = 0.0;
  for (const auto& seg : segments) totalLength += seg.cost * (seg.x1 - seg.x0);
  std::vector<int> share(segments.size(), 1);
  int assigned = static_cast<int>(segments.size());
  if (assigned > panels) fail(Errc::InvalidArgument, "node count too small for the grid layout");
  std::vector<double> remainder(segments.size());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const double ideal = panels * segments[i].cost * (segments[i].x1 - segments[i].x0) / totalLength;
    const int extraPanels = std::max(0, static_cast<int>(std::floor(ideal)) - 1);
    share[i] += extraPanels;
    assigned += extraPanels;
    remainder[i] = ideal - share[i];
  }
  while (assigned < panels) {
    const auto i = static_cast<std::size_t>(std::max_element(remainder.begin(), remainder.end()) - remainder.begin());
    ++share[i];
    remainder[i] -= 1.0;
    ++assigned;
  }
  while (assigned > panels) {
    const auto i = static_cast<std::size_t>(std::min_element(remainder.begin(), remainder.end()) - remainder.begin());
    if (share[i] > 1) {
      --share[i];
      --assigned;
    }
    remainder[i] += 1.0;
  }

  std::vector<double> nodes, weights, bare;
  nodes.reserve(opt.nodeCount);
  weights.reserve(opt.nodeCount);
  bare.reserve(opt.nodeCount);
  int panelIndex = 0;
  for (std::size_t si = 0; si < segments.size(); ++si) {
    const Segment& seg = segments[si];
    const double h = (seg.x1 - seg.x0) / share[si];
    for (int p = 0; p < share[si]; ++p, ++panelIndex) {
      const quad::Rule& r = quad::rule(base + (panelIndex < extra ? 1 : 0));
      const double mid = seg.x0 + (p + 0.5) * h;
      for (std::size_t i = 0; i < r.nodes.size(); ++i) {
        const double x = mid + 0.5 * h * r.nodes[i];
        const double w = seg.mapped ? seg.anchor + s * std::sinh(x) : seg.anchor + s * x;
        const double jac = seg.mapped ? s * std::cosh(x) : s;
        const double bw = 0.5 * h * r.weights[i] * jac;
        nodes.push_back(w);
        bare.push_back(bw);
        weights.push_back(bw * dist.density(w));
      }
    }
  }
  QuadratureGrid grid = gridFromNodes(std::move(nodes), std::move(weights), std::move(bare));
  grid.panelOrder = base;
  grid.truncationEstimate = 2.0 * tail;
  grid.analyticMass = 1.0 - 2.0 * tail;
  if (grid.massCovered < opt.massThreshold)
    fail(Errc::MassNotCovered, "grid mass " + std::to_string(grid.massCovered) + " below threshold");
  return grid;
}

/// ||g||_{H^n}^2 = sum_{k<=n} \int <omega>^2 |g^(k)|^2 domega, by quadrature on a
/// dedicated fine grid.
inline double sobolevNorm(const FrequencyDistribution& dist, int n) {
  if (n < 0) fail(Errc::InvalidArgument, "Sobolev order must be nonnegative");
  if (n > kMaxDerivativeOrder) fail(Errc::UnsupportedOrder, "Sobolev norm needs derivatives beyond order 8");
  const QuadratureGrid grid = buildGrid(dist, {2048, 1.0 - 1e-12, 16});
  double total = 0.0;
  for (int k = 0; k <= n; ++k) {
    for (std::size_t j = 0; j < grid.size(); ++j) {
      const double w = grid.nodes[j];
      const double d = densityDerivative(dist, w, k);
      total += grid.bareWeights[j] * (1.0 + w * w) * d * d;
    }
  }
  return std::sqrt(total);
}

}  // namespace kdamp
