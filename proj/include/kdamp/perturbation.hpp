#pragma once

// Initial perturbations r(0, theta, omega) = (1/pi) sum_m a_m h_m(omega) cos(k_m theta + phi_m).
// In the convention r = (1/2pi) sum_k c_k e^{ik theta}, each term contributes
// c_k = a h(omega) e^{i phi}.

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "kdamp/errors.hpp"

namespace kdamp {

struct Profile {
  enum class Kind { Constant, Gaussian, Lorentzian };
  Kind kind = Kind::Constant;
  double center = 0.0;
  double width = 1.0;

  double operator()(double w) const {
    switch (kind) {
      case Kind::Constant: return 1.0;
      case Kind::Gaussian: {
        const double z = (w - center) / width;
        return std::exp(-0.5 * z * z);
      }
      case Kind::Lorentzian: {
        const double z = (w - center) / width;
        return 1.0 / (1.0 + z * z);
      }
    }
    return 0.0;
  }
};

struct ModeSpec {
  int k = 1;
  double amplitude = 1.0;
  double phase = 0.0;
  Profile profile;
};

struct PerturbationSpec {
  std::vector<ModeSpec> modes;

  static PerturbationSpec cosine(double amplitude = 1.0, Profile profile = {}) {
    return {{ModeSpec{1, amplitude, 0.0, profile}}};
  }

  void validate() const {
    for (const auto& m : modes) {
      if (m.k == 0) fail(Errc::InvalidPerturbation, "a k=0 mode changes the mass per frequency (c_0 must vanish)");
      if (m.k < 0) fail(Errc::InvalidArgument, "mode numbers are given as k >= 1");
      if (!std::isfinite(m.amplitude) || !std::isfinite(m.phase))
        fail(Errc::InvalidArgument, "mode amplitude and phase must be finite");
      if (m.profile.kind != Profile::Kind::Constant && !(m.profile.width > 0.0))
        fail(Errc::InvalidArgument, "profile width must be positive");
    }
  }

  int maxMode() const {
    int k = 0;
    for (const auto& m : modes) k = std::max(k, m.k);
    return k;
  }

  std::complex<double> coefficient(int k, double w) const {
    std::complex<double> c{};
    for (const auto& m : modes)
      if (m.k == k) c += m.amplitude * m.profile(w) * std::polar(1.0, m.phase);
    return c;
  }

  double value(double theta, double w) const {
    double r = 0.0;
    for (const auto& m : modes) r += m.amplitude * m.profile(w) * std::cos(m.k * theta + m.phase);
    return r / std::numbers::pi;
  }

  /// \int_0^theta r(s, w) ds.
  double integral(double theta, double w) const {
    double r = 0.0;
    for (const auto& m : modes)
      r += m.amplitude * m.profile(w) * (std::sin(m.k * theta + m.phase) - std::sin(m.phase)) / m.k;
    return r / std::numbers::pi;
  }
};

}  // namespace kdamp
