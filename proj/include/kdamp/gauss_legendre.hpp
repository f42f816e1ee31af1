#pragma once

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace kdamp::quad {

/// Gauss-Legendre rule on [-1, 1]; nodes ascending.
struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {

inline Rule compute_rule(int order) {
  Rule r;
  r.nodes.resize(order);
  r.weights.resize(order);
  const int half = (order + 1) / 2;
  for (int i = 0; i < half; ++i) {
    // Tricomi initial guess, then Newton on P_n.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (order + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= order; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      if (order == 1) {
        p1 = x;
        p0 = 1.0;
      }
      dp = order * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // Recompute the derivative at the converged node.
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= order; ++k) {
      const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = pk;
    }
    if (order == 1) p0 = 1.0;
    dp = order * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    r.nodes[i] = -x;
    r.nodes[order - 1 - i] = x;
    r.weights[i] = w;
    r.weights[order - 1 - i] = w;
  }
  if (order % 2 == 1) r.nodes[order / 2] = 0.0;
  return r;
}

}  // namespace detail

/// Cached rule of the given order (1 <= order <= 256).
inline const Rule& rule(int order) {
  if (order < 1 || order > 256) throw std::invalid_argument("Gauss-Legendre order out of range");
  static std::mutex mutex;
  static std::map<int, Rule> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(order);
  if (it == cache.end()) it = cache.emplace(order, detail::compute_rule(order)).first;
  return it->second;
}

/// Composite Gauss-Legendre over [a, b] split into `panels` equal panels.
template <class F>
auto integrate(F&& f, double a, double b, int panels, int order = 16) {
  const Rule& r = rule(order);
  const double h = (b - a) / panels;
  using Value = decltype(f(a));
  Value sum{};
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * h;
    Value panel{};
    for (int i = 0; i < order; ++i) panel += r.weights[i] * f(mid + 0.5 * h * r.nodes[i]);
    sum += 0.5 * h * panel;
  }
  return sum;
}

}  // namespace kdamp::quad
