#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "kdamp/dispersion.hpp"

using namespace kdamp;
using Catch::Approx;

namespace {

cplx biCauchyClosedForm(double delta, double w0, double K, cplx w) {
  const cplx a = delta + cplx(0.0, 1.0) * w;
  return 1.0 - 0.5 * K * a / (a * a + w0 * w0);
}

// Winding number by brute force: 2e6 uniform samples of phi in omega = tan(phi).
int denseWinding(const DispersionFunction& df, double c0, double s) {
  const int n = 2000000;
  double total = 0.0;
  cplx prev(1.0, 0.0);
  for (int i = 1; i <= n; ++i) {
    const double phi = -0.5 * std::numbers::pi + std::numbers::pi * i / n;
    const cplx cur = (i == n) ? cplx(1.0, 0.0) : evaluate(df, cplx(c0 + s * std::tan(phi), 0.0));
    total += std::arg(cur / prev);
    prev = cur;
  }
  return static_cast<int>(std::lround(-total / (2.0 * std::numbers::pi)));
}

Errc codeOf(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no exception");
  return Errc::Validation;
}

}  // namespace

TEST_CASE("evaluation agrees with closed forms", "[dispersion]") {
  SECTION("bi-Cauchy on the real line") {
    for (double w0 : {0.5, 2.0}) {
      const DispersionFunction df(FrequencyDistribution::biCauchy(1.0, w0), 3.0);
      double worst = 0.0, worstQuad = 0.0;
      for (int i = 0; i < 200; ++i) {
        const double w = -10.0 + 20.0 * i / 199.0;
        const cplx ref = biCauchyClosedForm(1.0, w0, 3.0, w);
        worst = std::max(worst, std::abs(evaluate(df, w) - ref));
        worstQuad = std::max(worstQuad, std::abs(evaluateByQuadrature(df, w) - ref));
      }
      CHECK(worst <= 1e-8);
      CHECK(worstQuad <= 1e-7);
    }
  }
  SECTION("Cauchy critical point") {
    const DispersionFunction df(FrequencyDistribution::cauchy(1.0), 2.0);
    CHECK(std::abs(evaluate(df, 0.0)) <= 1e-15);
    CHECK(std::abs(evaluateByQuadrature(df, 0.0)) <= 1e-10);
  }
  SECTION("zero coupling") {
    const DispersionFunction df(FrequencyDistribution::gaussian(1.0), 0.0);
    for (cplx z : {cplx(0, 0), cplx(3, -1), cplx(-50, -0.1)}) CHECK(evaluate(df, z) == cplx(1.0, 0.0));
  }
  SECTION("Gaussian transform against adaptive quadrature in the lower half-plane") {
    const auto g = FrequencyDistribution::gaussian(0.8, 0.3);
    const DispersionFunction df(g, 1.7);
    for (cplx z : {cplx(0.0, 0.0), cplx(1.2, -0.5), cplx(-3.0, -2.0), cplx(25.0, -0.1), cplx(60.0, 0.0),
                   cplx(-45.0, -30.0), cplx(0.0, -40.0)}) {
      auto part = [&](auto pick) {
        return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
            [&](double t) { return pick(fourierTransform(g, t) * std::exp(-cplx(0.0, 1.0) * z * t)); }, 0.0, 15.0,
            20, 1e-14);
      };
      const cplx ref = 1.0 - 0.85 * cplx(part([](cplx c) { return c.real(); }), part([](cplx c) { return c.imag(); }));
      INFO("z=" << z);
      CHECK(std::abs(evaluate(df, z) - ref) <= 1e-10);
    }
  }
  SECTION("tends to 1 far along the real axis") {
    for (const auto& d : {FrequencyDistribution::cauchy(1.0), FrequencyDistribution::gaussian(1.0)}) {
      const DispersionFunction df(d, 2.0);
      CHECK(std::abs(evaluate(df, 1e8) - 1.0) <= 1e-7);
      CHECK(std::abs(evaluate(df, -1e8) - 1.0) <= 1e-7);
    }
  }
  SECTION("upper half-plane is rejected") {
    const DispersionFunction df(FrequencyDistribution::cauchy(1.0), 1.0);
    CHECK(codeOf([&] { evaluate(df, cplx(0.0, 1e-3)); }) == Errc::DomainError);
    CHECK(codeOf([&] { evaluateByQuadrature(df, cplx(0.0, 1e-3)); }) == Errc::DomainError);
  }
}

TEST_CASE("conjugate symmetry", "[dispersion]") {
  for (const auto& d : {FrequencyDistribution::cauchy(1.0), FrequencyDistribution::gaussian(1.0),
                        FrequencyDistribution::biCauchy(1.0, 2.0)}) {
    const DispersionFunction df(d, 1.3);
    for (cplx z : {cplx(0.7, 0.0), cplx(-2.0, -0.4), cplx(5.0, -3.0)}) {
      CHECK(std::abs(evaluate(df, -std::conj(z)) - std::conj(evaluate(df, z))) <= 1e-13);
    }
  }
  // Asymmetric laws: reflecting g conjugates D at the reflected point.
  const auto g = FrequencyDistribution::mixture({0.3, 0.7}, {Cauchy{1.0, -2.0}, Gaussian{0.5, 1.0}});
  const auto gr = FrequencyDistribution::mixture({0.3, 0.7}, {Cauchy{1.0, 2.0}, Gaussian{0.5, -1.0}});
  const DispersionFunction df(g, 2.0), dfr(gr, 2.0);
  for (cplx z : {cplx(0.7, 0.0), cplx(-2.0, -0.4), cplx(5.0, -3.0)})
    CHECK(std::abs(evaluate(dfr, -std::conj(z)) - std::conj(evaluate(df, z))) <= 1e-13);
}

TEST_CASE("boundary values by two routes", "[dispersion]") {
  std::vector<double> grid;
  for (int i = 0; i <= 40; ++i) grid.push_back(-6.0 + 0.3 * i);
  const auto asym = FrequencyDistribution::mixture({0.3, 0.7}, {Cauchy{1.0, -2.0}, Gaussian{0.5, 1.0}});
  for (const auto& d : {FrequencyDistribution::cauchy(1.0), FrequencyDistribution::gaussian(1.0),
                        FrequencyDistribution::biCauchy(1.0, 2.0), asym}) {
    const DispersionFunction df(d, 1.0);
    const auto bv = boundaryValues(df, grid);
    REQUIRE(bv.size() == grid.size());
    for (const auto& b : bv) CHECK(std::abs(b.laplace - b.hilbert) <= 1e-8);
  }
  SECTION("symmetric unimodal at zero is real") {
    const DispersionFunction df(FrequencyDistribution::gaussian(1.0), 1.0);
    CHECK(std::abs(hilbertPart(FrequencyDistribution::gaussian(1.0), 0.0)) <= 1e-14);
    CHECK(std::abs(boundaryValues(df, {0.0})[0].hilbert.imag()) <= 1e-14);
  }
  SECTION("Cauchy K=1 at zero") {
    const DispersionFunction df(FrequencyDistribution::cauchy(1.0), 1.0);
    CHECK(boundaryValues(df, {0.0})[0].hilbert.real() == Approx(0.5).epsilon(1e-14));
  }
}

TEST_CASE("critical couplings", "[dispersion]") {
  SECTION("Cauchy") {
    for (double delta : {0.5, 1.0, 2.0}) {
      const auto cc = criticalCoupling(FrequencyDistribution::cauchy(delta));
      CHECK(cc.value == Approx(2.0 * delta).epsilon(1e-6));
      REQUIRE(cc.criticalFrequencies.size() == 1);
      CHECK(std::abs(cc.criticalFrequencies[0]) <= 1e-9);
    }
  }
  SECTION("Gaussian") {
    CHECK(criticalCoupling(FrequencyDistribution::gaussian(1.0)).value ==
          Approx(std::sqrt(8.0 / std::numbers::pi)).epsilon(1e-5));
  }
  SECTION("bi-Cauchy") {
    for (double w0 : {0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0}) {
      const double expected = w0 <= 1.0 ? 2.0 * (1.0 + w0 * w0) : 4.0;
      INFO("omega0=" << w0);
      CHECK(criticalCoupling(FrequencyDistribution::biCauchy(1.0, w0)).value == Approx(expected).epsilon(1e-5));
    }
    const auto cc = criticalCoupling(FrequencyDistribution::biCauchy(1.0, 2.0));
    REQUIRE(cc.boundaryZeros.size() == 3);
    CHECK(cc.boundaryZeros[0] == Approx(-std::sqrt(3.0)).epsilon(1e-9));
    CHECK(std::abs(cc.boundaryZeros[1]) <= 1e-9);
    CHECK(cc.boundaryZeros[2] == Approx(std::sqrt(3.0)).epsilon(1e-9));
    REQUIRE(cc.criticalFrequencies.size() == 2);
    CHECK(cc.criticalFrequencies[1] == Approx(std::sqrt(3.0)).epsilon(1e-9));
  }
  SECTION("zeros of the imaginary part are zeros of Im D") {
    const auto d = FrequencyDistribution::mixture({0.3, 0.7}, {Cauchy{1.0, -2.0}, Gaussian{0.5, 1.0}});
    const DispersionFunction df(d, 1.0);
    const auto cc = criticalCoupling(d);
    REQUIRE(!cc.boundaryZeros.empty());
    for (double w : cc.boundaryZeros) CHECK(std::abs(evaluate(df, w).imag()) <= 1e-10);
  }
}

TEST_CASE("winding number", "[dispersion]") {
  const auto cauchy = FrequencyDistribution::cauchy(1.0);
  CHECK(windingNumber(DispersionFunction(cauchy, 0.0)).winding == 0);
  CHECK(windingNumber(DispersionFunction(cauchy, 1.9)).winding == 0);
  CHECK(windingNumber(DispersionFunction(cauchy, 2.1)).winding == 1);
  CHECK(denseWinding(DispersionFunction(cauchy, 1.9), 0.0, 1.0) == 0);
  CHECK(denseWinding(DispersionFunction(cauchy, 2.1), 0.0, 1.0) == 1);
  CHECK(windingNumber(DispersionFunction(FrequencyDistribution::biCauchy(1.0, 2.0), 4.2)).winding >= 1);
  CHECK(codeOf([&] { windingNumber(DispersionFunction(cauchy, 2.0)); }) == Errc::MarginalError);

  const auto bi = FrequencyDistribution::biCauchy(1.0, 2.0);
  for (double K : {3.0, 4.5, 8.0}) {
    const DispersionFunction df(bi, K);
    CHECK(windingNumber(df).winding == denseWinding(df, 0.0, 3.0));
  }
}

TEST_CASE("unstable roots", "[dispersion]") {
  const auto cauchy = FrequencyDistribution::cauchy(1.0);
  const auto root = findUnstableRoot(DispersionFunction(cauchy, 4.0));
  REQUIRE(root.has_value());
  CHECK(std::abs(*root - cplx(0.0, -1.0)) <= 1e-9);
  CHECK(!findUnstableRoot(DispersionFunction(cauchy, 0.0)).has_value());
  CHECK(!findUnstableRoot(DispersionFunction(cauchy, 1.5)).has_value());

  for (const auto& d : {cauchy, FrequencyDistribution::gaussian(1.0), FrequencyDistribution::biCauchy(1.0, 2.0),
                        FrequencyDistribution::biCauchy(1.0, 0.5)}) {
    const double kc = criticalCoupling(d).value;
    const DispersionFunction near(d, 1.001 * kc);
    const auto r = findUnstableRoot(near);
    REQUIRE(r.has_value());
    CHECK(r->imag() < 0.0);
    CHECK(std::abs(r->imag()) <= 0.1);
    CHECK(std::abs(evaluate(near, *r)) <= 1e-10);
  }
}

TEST_CASE("L1 sufficient condition", "[dispersion]") {
  const auto cauchy = FrequencyDistribution::cauchy(1.0);
  const auto gauss = FrequencyDistribution::gaussian(1.0);
  CHECK(l1SufficientCheck(DispersionFunction(cauchy, 0.0)));
  CHECK(l1SufficientCheck(DispersionFunction(cauchy, 1.99)));
  CHECK(!l1SufficientCheck(DispersionFunction(cauchy, 2.01)));
  const double bound = 2.0 / std::sqrt(std::numbers::pi / 2.0);
  CHECK(l1SufficientCheck(DispersionFunction(gauss, 0.999 * bound)));
  CHECK(!l1SufficientCheck(DispersionFunction(gauss, 1.001 * bound)));
  for (const auto& d : {cauchy, gauss}) {
    const double kc = criticalCoupling(d).value;
    for (int i = 0; i < 20; ++i) {
      const double K = 2.0 * kc * (i + 0.5) / 20.0;
      const DispersionFunction df(d, K);
      CHECK(l1SufficientCheck(df) == (K < kc));
      if (l1SufficientCheck(df)) CHECK(analyzeStability(df).verdict == Verdict::Stable);
    }
  }
}

TEST_CASE("stability reports", "[dispersion]") {
  const auto bi = FrequencyDistribution::biCauchy(1.0, 2.0);
  const auto stable = analyzeStability(DispersionFunction(bi, 3.9));
  CHECK(stable.verdict == Verdict::Stable);
  CHECK(stable.windingNumber == 0);
  CHECK(stable.criticalCoupling == Approx(4.0).epsilon(1e-6));
  CHECK(stable.boundaryZeros.size() == 3);

  const auto unstable = analyzeStability(DispersionFunction(bi, 4.1));
  CHECK(unstable.verdict == Verdict::Unstable);
  CHECK(unstable.windingNumber >= 1);
  REQUIRE(!unstable.unstableRoots.empty());
  for (cplx r : unstable.unstableRoots) {
    CHECK(r.imag() < 0.0);
    CHECK(std::abs(evaluate(DispersionFunction(bi, 4.1), r)) <= 1e-10);
  }

  CHECK(analyzeStability(DispersionFunction(FrequencyDistribution::cauchy(1.0), 2.0)).verdict ==
        Verdict::MarginallyUnstable);
}

TEST_CASE("asymmetric bi-Cauchy: boundary criterion against winding number", "[dispersion]") {
  for (double alpha : {0.3, 0.45}) {
    for (double w0 : {0.5, 2.0}) {
      const auto d = FrequencyDistribution::mixture({alpha, 1.0 - alpha}, {Cauchy{1.0, -w0}, Cauchy{1.0, w0}});
      const double kc = criticalCoupling(d).value;
      INFO("alpha=" << alpha << " omega0=" << w0 << " Kc=" << kc);
      CHECK(windingNumber(DispersionFunction(d, 0.98 * kc)).winding == 0);
      CHECK(windingNumber(DispersionFunction(d, 1.02 * kc)).winding >= 1);
    }
  }
}
