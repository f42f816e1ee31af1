#pragma once

// Config-driven experiments. Configs are strict JSON objects (unknown keys are
// rejected); results are CSV time series and JSON reports, each run also
// writing config.json with the resolved config and the format version.

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kdamp/dispersion.hpp"
#include "kdamp/finiten.hpp"
#include "kdamp/spectral.hpp"
#include "kdamp/volterra.hpp"

namespace kdamp {

using Json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;

inline const std::vector<std::string>& experimentNames() {
  static const std::vector<std::string> names = {"stability", "kc-scan",  "linear", "witness",
                                                 "nonlinear", "finite-n", "compare"};
  return names;
}

/// Exit status for a failure: 2 for configuration problems, 3 for numeric ones.
inline int exitCodeFor(Errc code) {
  switch (code) {
    case Errc::Validation:
    case Errc::InvalidArgument:
    case Errc::InvalidPerturbation:
    case Errc::MismatchedConfigs: return 2;
    default: return 3;
  }
}

/// 17 significant digits, so reruns are byte-identical and values round-trip.
inline std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// JSON number, or null for +-inf / nan.
inline Json jnum(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline Json jcplx(cplx z) { return Json{{"re", z.real()}, {"im", z.imag()}}; }

/// Reads one JSON object, remembering which keys were consumed and the values
/// (defaults included) that were used.
class ConfigReader {
 public:
  ConfigReader(Json j, std::string where) : j_(std::move(j)), where_(std::move(where)) {
    if (!j_.is_object()) invalid("expected a JSON object");
    resolved_ = Json::object();
  }

  [[noreturn]] void invalid(const std::string& msg) const { fail(Errc::Validation, where_ + ": " + msg); }

  bool has(const std::string& key) const { return j_.contains(key); }

  const Json& raw(const std::string& key) {
    if (!has(key)) invalid("missing field '" + key + "'");
    used_.insert(key);
    return j_.at(key);
  }

  double number(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_number()) invalid("'" + key + "' must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) invalid("'" + key + "' must be finite");
    resolved_[key] = x;
    return x;
  }
  double number(const std::string& key, double def) {
    if (has(key)) return number(key);
    resolved_[key] = def;
    return def;
  }

  long integer(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_number_integer()) invalid("'" + key + "' must be an integer");
    const long x = v.get<long>();
    resolved_[key] = x;
    return x;
  }
  long integer(const std::string& key, long def) {
    if (has(key)) return integer(key);
    resolved_[key] = def;
    return def;
  }

  std::string text(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_string()) invalid("'" + key + "' must be a string");
    resolved_[key] = v;
    return v.get<std::string>();
  }
  std::string text(const std::string& key, const std::string& def) {
    if (has(key)) return text(key);
    resolved_[key] = def;
    return def;
  }

  bool flag(const std::string& key, bool def) {
    if (!has(key)) {
      resolved_[key] = def;
      return def;
    }
    const Json& v = raw(key);
    if (!v.is_boolean()) invalid("'" + key + "' must be true or false");
    resolved_[key] = v;
    return v.get<bool>();
  }

  std::vector<double> numbers(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_array()) invalid("'" + key + "' must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number() || !std::isfinite(e.get<double>())) invalid("'" + key + "' must hold finite numbers");
      out.push_back(e.get<double>());
    }
    resolved_[key] = out;
    return out;
  }
  std::vector<double> numbers(const std::string& key, const std::vector<double>& def) {
    if (has(key)) return numbers(key);
    resolved_[key] = def;
    return def;
  }

  ConfigReader sub(const std::string& key) { return ConfigReader(raw(key), where_ + "." + key); }

  /// Checks `c` for unknown keys and records its resolved form under `key`.
  void adopt(const std::string& key, const ConfigReader& c) {
    c.finish();
    resolved_[key] = c.resolved();
  }

  void set(const std::string& key, Json value) { resolved_[key] = std::move(value); }

  void finish() const {
    for (const auto& item : j_.items())
      if (!used_.count(item.key())) invalid("unknown field '" + item.key() + "'");
  }

  const Json& resolved() const { return resolved_; }
  const std::string& where() const { return where_; }

 private:
  Json j_;
  std::string where_;
  std::set<std::string> used_;
  Json resolved_;
};

// ---------------------------------------------------------------- parsing

namespace detail {

inline double positive(ConfigReader& r, const std::string& key) {
  const double v = r.number(key);
  if (!(v > 0.0)) r.invalid("'" + key + "' must be positive");
  return v;
}

inline double nonnegative(ConfigReader& r, const std::string& key) {
  const double v = r.number(key);
  if (!(v >= 0.0)) r.invalid("'" + key + "' must be nonnegative");
  return v;
}

inline Component parse_component(ConfigReader& r) {
  const std::string family = r.text("family");
  if (family == "cauchy") return Cauchy{positive(r, "delta"), r.number("center", 0.0)};
  if (family == "gaussian") return Gaussian{positive(r, "sigma"), r.number("center", 0.0)};
  r.invalid("mixture components must be 'cauchy' or 'gaussian', got '" + family + "'");
}

}  // namespace detail

/// {"family": "cauchy", "delta", "center"} | {"family": "gaussian", "sigma", "center"}
/// | {"family": "bicauchy", "delta", "omega0"} | {"family": "mixture", "weights", "components"}.
inline FrequencyDistribution parseDistribution(ConfigReader& r) {
  const std::string family = r.text("family");
  try {
    if (family == "cauchy") {
      const double d = detail::positive(r, "delta");
      return FrequencyDistribution::cauchy(d, r.number("center", 0.0));
    }
    if (family == "gaussian") {
      const double s = detail::positive(r, "sigma");
      return FrequencyDistribution::gaussian(s, r.number("center", 0.0));
    }
    if (family == "bicauchy") {
      const double d = detail::positive(r, "delta");
      return FrequencyDistribution::biCauchy(d, r.number("omega0"));
    }
    if (family == "mixture") {
      const auto weights = r.numbers("weights");
      const Json& list = r.raw("components");
      if (!list.is_array()) r.invalid("'components' must be an array");
      std::vector<Component> comps;
      Json resolved = Json::array();
      for (std::size_t i = 0; i < list.size(); ++i) {
        ConfigReader c(list[i], r.where() + ".components[" + std::to_string(i) + "]");
        comps.push_back(detail::parse_component(c));
        c.finish();
        resolved.push_back(c.resolved());
      }
      r.set("components", resolved);
      return FrequencyDistribution::mixture(weights, comps);
    }
  } catch (const Error& e) {
    if (e.code() == Errc::Validation) throw;
    r.invalid(e.what());
  }
  r.invalid("unknown distribution family '" + family + "'");
}

inline FrequencyDistribution parseDistributionField(ConfigReader& r, const std::string& key = "distribution") {
  ConfigReader d = r.sub(key);
  auto dist = parseDistribution(d);
  r.adopt(key, d);
  return dist;
}

inline Profile parseProfile(ConfigReader& r) {
  Profile p;
  const std::string kind = r.text("kind", "constant");
  if (kind == "constant") return p;
  if (kind == "gaussian") {
    p.kind = Profile::Kind::Gaussian;
  } else if (kind == "lorentzian") {
    p.kind = Profile::Kind::Lorentzian;
  } else {
    r.invalid("profile kind must be 'constant', 'gaussian' or 'lorentzian'");
  }
  p.center = r.number("center", 0.0);
  p.width = detail::positive(r, "width");
  return p;
}

/// {"modes": [{"k", "amplitude", "phase", "profile": {...}}]}; absent means
/// r = (1/pi) cos theta.
inline PerturbationSpec parsePerturbationField(ConfigReader& r, const std::string& key = "initialPerturbation") {
  if (!r.has(key)) {
    r.set(key, Json{{"modes", Json::array({Json{{"k", 1}, {"amplitude", 1.0}, {"phase", 0.0},
                                                 {"profile", Json{{"kind", "constant"}}}}})}});
    return PerturbationSpec::cosine();
  }
  ConfigReader p = r.sub(key);
  const Json& list = p.raw("modes");
  if (!list.is_array()) p.invalid("'modes' must be an array");
  PerturbationSpec spec;
  Json resolved = Json::array();
  for (std::size_t i = 0; i < list.size(); ++i) {
    ConfigReader m(list[i], p.where() + ".modes[" + std::to_string(i) + "]");
    ModeSpec mode;
    mode.k = static_cast<int>(m.integer("k"));
    if (mode.k < 1) m.invalid("'k' must be at least 1 (a k=0 mode would change the mass per frequency)");
    mode.amplitude = m.number("amplitude", 1.0);
    mode.phase = m.number("phase", 0.0);
    if (m.has("profile")) {
      ConfigReader pr = m.sub("profile");
      mode.profile = parseProfile(pr);
      m.adopt("profile", pr);
    } else {
      m.set("profile", Json{{"kind", "constant"}});
    }
    m.finish();
    resolved.push_back(m.resolved());
    spec.modes.push_back(mode);
  }
  p.set("modes", resolved);
  r.adopt(key, p);
  return spec;
}

// ---------------------------------------------------------------- artifacts

struct Artifact {
  std::string name;
  std::string content;
};

struct ExperimentResult {
  std::string experiment;
  Json config;  // resolved
  std::vector<Artifact> artifacts;

  const Artifact* find(const std::string& name) const {
    for (const auto& a : artifacts)
      if (a.name == name) return &a;
    return nullptr;
  }
};

struct ExperimentContext {
  std::filesystem::path baseDir = ".";  // relative paths in configs resolve here
};

namespace detail {

inline Json envelope(const std::string& experiment, const Json& config) {
  return Json{{"formatVersion", kFormatVersion}, {"experiment", experiment}, {"config", config}};
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

class Csv {
 public:
  explicit Csv(const std::string& header) { out_ << header << '\n'; }
  Csv& row(std::initializer_list<double> values) {
    bool first = true;
    for (double v : values) {
      if (!first) out_ << ',';
      out_ << fmt(v);
      first = false;
    }
    out_ << '\n';
    return *this;
  }
  Csv& line(const std::string& s) {
    out_ << s << '\n';
    return *this;
  }
  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(Errc::Validation, "cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Numeric columns of a CSV with a header row.
inline std::vector<std::vector<double>> read_csv(const std::filesystem::path& p) {
  std::istringstream in(read_file(p));
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (...) {
        fail(Errc::Validation, p.string() + ": non-numeric cell '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void check_horizon(ConfigReader& r, double dt, double T) {
  if (!(dt > 0.0)) r.invalid("'dt' must be positive");
  if (!(T >= dt)) r.invalid("'T' must be at least dt");
}

}  // namespace detail

// ---------------------------------------------------------------- stability

inline ExperimentResult runStability(ConfigReader& r, const ExperimentContext&) {
  const auto dist = parseDistributionField(r);
  const double K = detail::nonnegative(r, "K");
  const double tail = r.number("tailBound", 1e-12);
  if (!(tail > 0.0 && tail < 1e-3)) r.invalid("'tailBound' must lie in (0, 1e-3)");
  ContourParams cp;
  if (r.has("contour")) {
    ConfigReader c = r.sub("contour");
    cp.initialSegments = static_cast<int>(c.integer("initialSegments", cp.initialSegments));
    cp.maxDepth = static_cast<int>(c.integer("maxDepth", cp.maxDepth));
    cp.marginTol = c.number("marginTol", cp.marginTol);
    if (cp.initialSegments < 8 || cp.maxDepth < 1 || !(cp.marginTol > 0.0)) c.invalid("contour parameters out of range");
    r.adopt("contour", c);
  }
  r.finish();

  const DispersionFunction df(dist, K, tail);
  const auto rep = analyzeStability(df, cp);
  const auto cc = criticalCoupling(dist);
  Json zeros = Json::array(), roots = Json::array();
  for (const auto& z : rep.boundaryZeros) zeros.push_back(Json{{"omega", z.omega}, {"reD", z.reD}, {"imD", z.imD}});
  for (const auto& w : rep.unstableRoots) roots.push_back(jcplx(w));
  Json out = detail::envelope("stability", r.resolved());
  out["report"] = Json{{"verdict", to_string(rep.verdict)},
                       {"windingNumber", rep.windingNumber},
                       {"boundaryZeros", zeros},
                       {"unstableRoots", roots},
                       {"criticalCoupling", jnum(rep.criticalCoupling)},
                       {"criticalFrequencies", cc.criticalFrequencies},
                       {"diagnostics", Json{{"minAbsBoundary", rep.minAbsBoundary},
                                            {"minAbsOmega", rep.minAbsOmega},
                                            {"contourResolution", rep.contourResolution},
                                            {"contourEvaluations", rep.contourEvaluations},
                                            {"l1Sufficient", rep.l1Sufficient}}}};
  out["notes"] = "criticalCoupling null means +infinity (no boundary zero meets the Penrose bound)";
  return {"stability", r.resolved(), {{"stability.json", detail::dump(out)}}};
}

// ---------------------------------------------------------------- kc-scan

/// Sweeps one numeric field of the distribution object ("omega0", "delta",
/// "sigma", "center") over `values`.
inline ExperimentResult runKcScan(ConfigReader& r, const ExperimentContext&) {
  const Json base = r.raw("distribution");
  if (!base.is_object()) r.invalid("'distribution' must be an object");
  const std::string param = r.text("parameter");
  const auto values = r.numbers("values");
  if (values.empty()) r.invalid("'values' must not be empty");
  r.set("distribution", base);
  r.finish();

  std::vector<FrequencyDistribution> dists;
  for (double v : values) {
    Json d = base;
    d[param] = v;
    ConfigReader dr(d, "distribution[" + param + "=" + fmt(v) + "]");
    dists.push_back(parseDistribution(dr));
    dr.finish();
  }
  detail::Csv csv("param,K_c,critical_omegas");
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto cc = criticalCoupling(dists[i]);
    std::string omegas;
    for (std::size_t k = 0; k < cc.criticalFrequencies.size(); ++k)
      omegas += (k ? ";" : "") + fmt(cc.criticalFrequencies[k]);
    csv.line(fmt(values[i]) + "," + fmt(cc.value) + "," + omegas);
  }
  return {"kc-scan", r.resolved(), {{"kc_scan.csv", csv.str()}}};
}

// ---------------------------------------------------------------- linear

namespace detail {

inline TimeFunction parse_input(ConfigReader& r, const FrequencyDistribution& dist, double T,
                                const ExperimentContext& ctx) {
  const std::string family = r.text("family");
  if (family == "algebraic") {
    const double p = r.number("p");
    const double a = r.number("amplitude", 1.0);
    const double nu = r.number("frequency", 0.0);
    return [p, a, nu](double t) { return a * std::pow(1.0 + t, -p) * std::polar(1.0, nu * t); };
  }
  if (family == "initial-data") {
    // F(t) = \int h(omega) g(omega) e^{-i omega t} domega for c_1(0, omega) = h(omega).
    Profile h;
    if (r.has("profile")) {
      ConfigReader pr = r.sub("profile");
      h = parseProfile(pr);
      r.adopt("profile", pr);
    } else {
      r.set("profile", Json{{"kind", "constant"}});
    }
    if (h.kind == Profile::Kind::Constant) return [dist](double t) { return fourierTransform(dist, t); };
    const int nodes = static_cast<int>(r.integer("gridNodes", 4096));
    const double mass = r.number("massThreshold", 1.0 - 1e-14);
    const auto grid = buildGrid(dist, {nodes, mass, 32, true});
    if (T > recurrenceHorizon(grid))
      r.invalid("horizon exceeds the recurrence horizon " + fmt(recurrenceHorizon(grid)) +
                " of the quadrature for F; raise gridNodes");
    std::vector<double> w(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) w[j] = grid.weights[j] * h(grid.nodes[j]);
    return [grid, w](double t) {
      cplx s{};
      for (std::size_t j = 0; j < w.size(); ++j) s += w[j] * std::polar(1.0, -grid.nodes[j] * t);
      return s;
    };
  }
  if (family == "csv") {
    const auto path = ctx.baseDir / r.text("path");
    const auto rows = read_csv(path);
    std::vector<double> ts;
    std::vector<cplx> vs;
    for (const auto& row : rows) {
      if (row.size() < 3) r.invalid(path.string() + ": rows need t,Re(F),Im(F)");
      if (!ts.empty() && !(row[0] > ts.back())) r.invalid(path.string() + ": times must increase");
      ts.push_back(row[0]);
      vs.emplace_back(row[1], row[2]);
    }
    if (ts.size() < 2 || ts.front() > 0.0 || ts.back() < T * (1.0 - 1e-12))
      r.invalid(path.string() + ": samples must cover [0, T]");
    return [ts, vs](double t) {
      const auto it = std::upper_bound(ts.begin(), ts.end(), t);
      if (it == ts.begin()) return vs.front();
      if (it == ts.end()) return vs.back();
      const std::size_t j = static_cast<std::size_t>(it - ts.begin());
      const double s = (t - ts[j - 1]) / (ts[j] - ts[j - 1]);
      return (1.0 - s) * vs[j - 1] + s * vs[j];
    };
  }
  r.invalid("input family must be 'algebraic', 'initial-data' or 'csv'");
}

inline Json fit_json(const DecayFit& f, bool noisy) {
  return Json{{"exponent", f.exponent},       {"amplitude", f.amplitude},
              {"fitWindow", {f.window.begin, f.window.end}}, {"residual", f.residual},
              {"samples", f.samples},         {"windowTooNoisy", noisy}};
}

}  // namespace detail

inline ExperimentResult runLinear(ConfigReader& r, const ExperimentContext& ctx) {
  const auto dist = parseDistributionField(r);
  const double K = detail::nonnegative(r, "K");
  const double n = r.number("n", 4.0);
  const double dt = r.number("dt", 1e-2);
  const double T = r.number("T");
  detail::check_horizon(r, dt, T);
  ConfigReader in = r.sub("input");
  const auto F = detail::parse_input(in, dist, T, ctx);
  r.adopt("input", in);
  FitWindow window{0.25 * T, 0.9 * T};
  if (r.has("fitWindow")) {
    const auto w = r.numbers("fitWindow");
    if (w.size() != 2 || !(w[0] > 0.0) || !(w[1] > w[0]) || w[1] > T) r.invalid("'fitWindow' must be [a, b] with 0<a<b<=T");
    window = {w[0], w[1]};
  } else {
    r.set("fitWindow", {window.begin, window.end});
  }
  r.finish();

  const auto sol = solve({kuramotoKernel(dist, K), F, dt, T});
  detail::Csv csv("t,Re(R),Im(R),abs(R),(1+t)^n*abs(R)");
  for (std::size_t j = 0; j < sol.times.size(); ++j) {
    const double t = sol.times[j], a = std::abs(sol.values[j]);
    csv.row({t, sol.values[j].real(), sol.values[j].imag(), a, std::pow(1.0 + t, n) * a});
  }
  bool noisy = false;
  DecayFit fit;
  try {
    fit = fitDecay(sol, window);
  } catch (const Error& e) {
    if (e.code() != Errc::WindowTooNoisy) throw;
    noisy = true;
    fit = fitDecay(sol, window, false);
  }
  Json out = detail::envelope("linear", r.resolved());
  out["fit"] = detail::fit_json(fit, noisy);
  out["weightedSup"] = sol.weightedSup(n);
  out["schemeOrder"] = sol.schemeOrder;
  return {"linear", r.resolved(), {{"R.csv", csv.str()}, {"fit.json", detail::dump(out)}}};
}

// ---------------------------------------------------------------- witness

inline ExperimentResult runWitness(ConfigReader& r, const ExperimentContext&) {
  const auto dist = parseDistributionField(r);
  const double K = detail::nonnegative(r, "K");
  cplx A(1.0, 0.0);
  if (r.has("amplitude")) {
    ConfigReader a = r.sub("amplitude");
    const double re = a.number("re");
    A = cplx(re, a.number("im", 0.0));
    r.adopt("amplitude", a);
  } else {
    r.set("amplitude", Json{{"re", 1.0}, {"im", 0.0}});
  }
  const double dt = r.number("dt", 1e-3);
  if (!(dt > 0.0)) r.invalid("'dt' must be positive");
  const bool hasT = r.has("T");
  double T = hasT ? r.number("T") : 0.0;
  if (hasT && !(T >= dt)) r.invalid("'T' must be at least dt");
  r.finish();

  const auto w = instabilityWitness(dist, K, A);
  if (!hasT) {
    T = 5.0 / w.predictedRate;
    r.set("T", T);
  }
  const auto sol = solve({kuramotoKernel(dist, K), w.input, dt, T});
  detail::Csv csv("t,Re(F),Im(F),Re(R),Im(R),abs(R),predicted_abs(R)");
  for (std::size_t j = 0; j < sol.times.size(); ++j) {
    const double t = sol.times[j];
    const cplx f = w.input(t), R = sol.values[j];
    csv.row({t, f.real(), f.imag(), R.real(), R.imag(), std::abs(R), std::abs(A) * std::exp(w.predictedRate * t)});
  }
  const double err = witnessGrowthError(sol, w, T);
  Json out = detail::envelope("witness", r.resolved());
  out["witness"] = Json{{"root", jcplx(w.root)},
                        {"predictedRate", w.predictedRate},
                        {"inputBound", witnessBound(dist, K, w)},
                        {"growthError", err},
                        {"tolerance", 0.02},
                        {"growthConfirmed", err < 0.02}};
  return {"witness", r.resolved(), {{"witness.csv", csv.str()}, {"witness.json", detail::dump(out)}}};
}

// ---------------------------------------------------------------- nonlinear

struct NonlinearRun {
  Json config;
  SimResult result;
  double epsilon = 0.0;
  double initialNorm = 0.0;
};

inline NonlinearRun runNonlinearData(ConfigReader& r) {
  const auto dist = parseDistributionField(r);
  SpectralOptions opt;
  opt.coupling = detail::nonnegative(r, "K");
  opt.epsilon = detail::positive(r, "epsilon");
  opt.kMax = static_cast<int>(r.integer("kMax", 8));
  if (opt.kMax < 2) r.invalid("'kMax' must be at least 2");
  const auto defaults = spectralGridDefaults();
  opt.grid.nodeCount = static_cast<int>(r.integer("gridNodes", defaults.nodeCount));
  opt.grid.massThreshold = r.number("massThreshold", defaults.massThreshold);
  opt.grid.panelOrder = static_cast<int>(r.integer("panelOrder", defaults.panelOrder));
  const double dt = r.number("dt", 1e-2);
  const double T = r.number("T");
  detail::check_horizon(r, dt, T);
  RunOptions ro;
  ro.outputEvery = static_cast<int>(r.integer("outputEvery", 100));
  if (ro.outputEvery < 1) r.invalid("'outputEvery' must be at least 1");
  ro.diagnosticsOrder = static_cast<int>(r.integer("diagnosticsOrder", 4));
  if (ro.diagnosticsOrder < 2) r.invalid("'diagnosticsOrder' must be at least 2");
  opt.normOrder = ro.diagnosticsOrder;
  ro.snapshotTimes = r.numbers("snapshotTimes", {});
  ro.clampToRecurrence = r.flag("clampToRecurrence", true);
  const auto spec = parsePerturbationField(r);
  r.finish();

  auto state = initialize(spec, dist, opt);
  NonlinearRun out;
  out.epsilon = opt.epsilon;
  out.initialNorm = state.initialNorm;
  out.result = run(state, dt, T, ro);
  out.config = r.resolved();
  return out;
}

inline ExperimentResult runNonlinear(ConfigReader& r, const ExperimentContext&) {
  const auto nl = runNonlinearData(r);
  const auto& res = nl.result;
  const int n = res.diagnosticsOrder;
  detail::Csv rcsv("t,Re(R),Im(R),abs(R),(1+t)^n*abs(R)");
  for (std::size_t j = 0; j < res.times.size(); ++j) {
    const double t = res.times[j], a = std::abs(res.orderParam[j]);
    rcsv.row({t, res.orderParam[j].real(), res.orderParam[j].imag(), a, std::pow(1.0 + t, n) * a});
  }
  detail::Csv dcsv("t,(1+t)^n*abs(R),norm_Hn/(1+t),norm_Hn-2");
  for (const auto& d : res.diagnostics) dcsv.row({d.time, d.weightedR, d.normHnOverT, d.normHnMinus2});

  Json out = detail::envelope("nonlinear", nl.config);
  out["recurrenceHorizon"] = res.recurrenceHorizon;
  out["requestedHorizon"] = res.requestedHorizon;
  out["finalTime"] = res.finalTime;
  out["clamped"] = res.clamped;
  out["initialNorm"] = Json{{"order", n}, {"value", nl.initialNorm}};
  out["bootstrapQuantity"] = res.bootstrapQuantity();
  out["grid"] = Json{{"nodes", res.grid.size()},
                     {"massCovered", res.grid.massCovered},
                     {"minGap", res.grid.minGap},
                     {"maxGap", res.grid.maxGap}};
  if (std::abs(res.orderParam.front()) > 0.0) {
    const auto d = dampingCheck(res, n);
    out["damping"] = Json{{"floorRatio", d.floorRatio},     {"floorTime", jnum(d.floorTime)},
                          {"reachedFloor", d.reachedFloor}, {"envelopeRatio", jnum(d.envelopeRatio)},
                          {"envelopeHeld", d.envelopeHeld}, {"passed", d.passed}};
  } else {
    out["damping"] = nullptr;
  }
  if (res.snapshots.size() >= 3) {
    const auto sc = scatteringProfile(res);
    out["scattering"] = Json{{"snapshotTimes", sc.times},
                             {"pairDifferences", sc.pairDifferences},
                             {"normOrder", std::max(0, n - 2)},
                             {"converged", sc.converged}};
  } else {
    out["scattering"] = nullptr;
  }
  return {"nonlinear",
          nl.config,
          {{"R.csv", rcsv.str()}, {"diagnostics.csv", dcsv.str()}, {"scattering.json", detail::dump(out)}}};
}

// ---------------------------------------------------------------- finite-n

struct FiniteNData {
  Json config;
  FiniteNRun run;
  std::size_t N = 0;
  double meanPhaseDrift = 0.0;
};

inline FiniteNData runFiniteNData(ConfigReader& r) {
  const auto dist = parseDistributionField(r);
  const long N = r.integer("N");
  if (N < 2) r.invalid("'N' must be at least 2");
  const double K = detail::nonnegative(r, "K");
  const double eps = detail::nonnegative(r, "epsilon");
  Sampling sampling;
  const std::string mode = r.text("sampling", "quantile");
  if (mode == "seeded") {
    sampling.mode = Sampling::Mode::Seeded;
  } else if (mode != "quantile") {
    r.invalid("'sampling' must be 'quantile' or 'seeded'");
  }
  const long seed = r.integer("seed", 0);
  if (seed < 0) r.invalid("'seed' must be nonnegative");
  sampling.seed = static_cast<std::uint64_t>(seed);
  const double dt = r.number("dt", 1e-2);
  const double T = r.number("T");
  detail::check_horizon(r, dt, T);
  const long every = r.integer("outputEvery", 1);
  if (every < 1) r.invalid("'outputEvery' must be at least 1");
  const auto spec = parsePerturbationField(r);
  r.finish();

  auto state = sampleOscillators(dist, static_cast<std::size_t>(N), sampling, spec, eps, K);
  double meanFreq = 0.0;
  for (double w : state.freqs) meanFreq += w;
  meanFreq /= static_cast<double>(N);
  const double m0 = state.meanUnwrappedPhase();
  FiniteNData out;
  out.N = static_cast<std::size_t>(N);
  out.run = runFiniteN(state, dt, T, static_cast<int>(every));
  out.meanPhaseDrift = std::abs(state.meanUnwrappedPhase() - m0 - meanFreq * state.t);
  out.config = r.resolved();
  return out;
}

namespace detail {

struct Series {
  Json config;
  std::vector<double> t;
  std::vector<cplx> v;
};

inline Series load_series(const std::filesystem::path& dir, const std::string& experiment, const std::string& csv) {
  const Json side = Json::parse(read_file(dir / "config.json"));
  if (!side.contains("experiment") || side["experiment"] != experiment)
    fail(Errc::MismatchedConfigs, dir.string() + " does not hold a " + experiment + " run");
  Series s;
  s.config = side.at("config");
  for (const auto& row : read_csv(dir / csv)) {
    if (row.size() < 3) fail(Errc::Validation, (dir / csv).string() + ": short row");
    s.t.push_back(row[0]);
    s.v.emplace_back(row[1], row[2]);
  }
  return s;
}

inline Series continuum_series(const Json& ref, const ExperimentContext& ctx, Json& resolved) {
  if (ref.is_string()) {
    resolved = ref;
    return load_series(ctx.baseDir / ref.get<std::string>(), "nonlinear", "R.csv");
  }
  ConfigReader r(ref, "continuum");
  auto nl = runNonlinearData(r);
  resolved = nl.config;
  return {nl.config, nl.result.times, nl.result.orderParam};
}

inline Series finite_series(const Json& ref, const ExperimentContext& ctx, Json& resolved) {
  if (ref.is_string()) {
    resolved = ref;
    return load_series(ctx.baseDir / ref.get<std::string>(), "finite-n", "Z.csv");
  }
  ConfigReader r(ref, "finiteN");
  auto fn = runFiniteNData(r);
  resolved = fn.config;
  Series s{fn.config, fn.run.times, {}};
  for (const auto& o : fn.run.order) s.v.push_back(o.normalized);
  return s;
}

inline void require_same(const Json& a, const Json& b, const std::string& key) {
  if (!a.contains(key) || !b.contains(key) || a.at(key) != b.at(key))
    fail(Errc::MismatchedConfigs, "runs differ in '" + key + "'");
}

// |Z_N - eps conj(R)| on the finite-N times, R interpolated linearly.
inline std::vector<Artifact> compare_series(const Series& cont, const Series& fin, const Json& config,
                                            const std::string& experiment, std::optional<double> tolerance) {
  require_same(cont.config, fin.config, "distribution");
  require_same(cont.config, fin.config, "K");
  require_same(cont.config, fin.config, "epsilon");
  require_same(cont.config, fin.config, "T");
  const double eps = cont.config.at("epsilon").get<double>();
  Csv csv("t,Re(Z),Im(Z),Re(eps*conj(R)),Im(eps*conj(R)),abs(Z-eps*conj(R))");
  double sup = 0.0, supT = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 0; j < fin.t.size(); ++j) {
    const double t = fin.t[j];
    if (t > cont.t.back() + 1e-9) break;
    const auto it = std::lower_bound(cont.t.begin(), cont.t.end(), t - 1e-9);
    std::size_t i = static_cast<std::size_t>(it - cont.t.begin());
    cplx R;
    if (i == 0 || std::abs(cont.t[i] - t) <= 1e-9) {
      R = cont.v[i];
    } else {
      const double s = (t - cont.t[i - 1]) / (cont.t[i] - cont.t[i - 1]);
      R = (1.0 - s) * cont.v[i - 1] + s * cont.v[i];
    }
    const cplx pred = eps * std::conj(R);
    const double d = std::abs(fin.v[j] - pred);
    if (d > sup) {
      sup = d;
      supT = t;
    }
    ++count;
    csv.row({t, fin.v[j].real(), fin.v[j].imag(), pred.real(), pred.imag(), d});
  }
  Json out = envelope(experiment, config);
  out["comparison"] = Json{
      {"supDifference", sup},
      {"supTime", supT},
      {"samples", count},
      {"comparedUpTo", count ? std::min(fin.t.back(), cont.t.back()) : 0.0},
      {"tolerance", tolerance ? Json(*tolerance) : Json(nullptr)},
      {"withinTolerance", tolerance ? Json(sup <= *tolerance) : Json(nullptr)},
      {"normalization",
       "Z = (1/N) sum_j e^{i theta_j}; the continuum R = \\int r g e^{-i theta}, so Z ~ epsilon conj(R)"}};
  return {{"comparison.csv", csv.str()}, {"comparison.json", dump(out)}};
}

}  // namespace detail

inline ExperimentResult runFiniteNExperiment(ConfigReader& r, const ExperimentContext& ctx) {
  std::optional<std::string> continuum;
  if (r.has("continuum")) {
    continuum = r.text("continuum");
  }
  const auto fn = runFiniteNData(r);
  detail::Csv csv("t,Re(Z),Im(Z),abs(Z)");
  for (std::size_t j = 0; j < fn.run.times.size(); ++j) {
    const cplx z = fn.run.order[j].normalized;
    csv.row({fn.run.times[j], z.real(), z.imag(), std::abs(z)});
  }
  Json out = detail::envelope("finite-n", fn.config);
  out["final"] = Json{{"t", fn.run.times.back()},
                      {"Z", jcplx(fn.run.order.back().normalized)},
                      {"sum", jcplx(fn.run.order.back().sum)}};
  out["meanPhaseDrift"] = fn.meanPhaseDrift;
  out["normalization"] = "Z = (1/N) sum_j e^{i theta_j}; 'sum' is the unnormalized sum_j e^{i theta_j}";
  ExperimentResult result{"finite-n", fn.config, {{"Z.csv", csv.str()}, {"finite_n.json", detail::dump(out)}}};
  if (continuum) {
    Json ignored;
    const auto cont = detail::continuum_series(Json(*continuum), ctx, ignored);
    detail::Series fin{fn.config, fn.run.times, {}};
    for (const auto& o : fn.run.order) fin.v.push_back(o.normalized);
    for (auto& a : detail::compare_series(cont, fin, fn.config, "finite-n", std::nullopt)) result.artifacts.push_back(a);
  }
  return result;
}

// ---------------------------------------------------------------- compare

/// {"continuum": nonlinear config or run directory, "finiteN": finite-n config
/// or run directory, "tolerance": optional}.
inline ExperimentResult runCompare(ConfigReader& r, const ExperimentContext& ctx) {
  const Json cref = r.raw("continuum");
  const Json fref = r.raw("finiteN");
  if (!(cref.is_object() || cref.is_string()) || !(fref.is_object() || fref.is_string()))
    r.invalid("'continuum' and 'finiteN' must be configs or run directories");
  std::optional<double> tol;
  if (r.has("tolerance")) tol = detail::positive(r, "tolerance");
  r.finish();
  // Mismatch is checked before either simulation runs when both are inline.
  if (cref.is_object() && fref.is_object())
    for (const char* key : {"distribution", "K", "epsilon", "T"})
      if (!cref.contains(key) || !fref.contains(key) || cref.at(key) != fref.at(key))
        fail(Errc::MismatchedConfigs, std::string("runs differ in '") + key + "'");
  Json cres, fres;
  const auto cont = detail::continuum_series(cref, ctx, cres);
  const auto fin = detail::finite_series(fref, ctx, fres);
  r.set("continuum", cres);
  r.set("finiteN", fres);
  return {"compare", r.resolved(), detail::compare_series(cont, fin, r.resolved(), "compare", tol)};
}

// ---------------------------------------------------------------- entry

/// Validates the top-level keys and runs `experiment`. Nothing is written here.
inline ExperimentResult runExperiment(const std::string& experiment, const Json& config,
                                      const ExperimentContext& ctx = {}) {
  if (std::find(experimentNames().begin(), experimentNames().end(), experiment) == experimentNames().end())
    fail(Errc::Validation, "unknown experiment '" + experiment + "'");
  if (!config.is_object()) fail(Errc::Validation, "config must be a JSON object");
  Json body = config;
  if (body.contains("formatVersion")) {
    if (body["formatVersion"] != kFormatVersion)
      fail(Errc::Validation, "unsupported formatVersion (expected " + std::to_string(kFormatVersion) + ")");
    body.erase("formatVersion");
  }
  if (body.contains("experiment")) {
    if (body["experiment"] != experiment)
      fail(Errc::Validation, "config is for '" + body["experiment"].dump() + "', not '" + experiment + "'");
    body.erase("experiment");
  }
  body.erase("outputDir");  // consumed by the CLI
  ConfigReader r(body, "config");
  if (experiment == "stability") return runStability(r, ctx);
  if (experiment == "kc-scan") return runKcScan(r, ctx);
  if (experiment == "linear") return runLinear(r, ctx);
  if (experiment == "witness") return runWitness(r, ctx);
  if (experiment == "nonlinear") return runNonlinear(r, ctx);
  if (experiment == "finite-n") return runFiniteNExperiment(r, ctx);
  return runCompare(r, ctx);
}

/// Writes config.json and every artifact into `dir`.
inline void writeArtifacts(const ExperimentResult& res, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto put = [&](const std::string& name, const std::string& content) {
    std::ofstream out(dir / name, std::ios::binary);
    out << content;
    if (!out) fail(Errc::Validation, "cannot write " + (dir / name).string());
  };
  put("config.json", detail::dump(detail::envelope(res.experiment, res.config)));
  for (const auto& a : res.artifacts) put(a.name, a.content);
}

/// Diagnostic written on numeric failure.
inline std::string errorReport(const std::string& experiment, const Json& config, const Error& e) {
  Json out{{"formatVersion", kFormatVersion},
           {"experiment", experiment},
           {"error", std::string(to_string(e.code()))},
           {"message", e.what()},
           {"exitCode", exitCodeFor(e.code())},
           {"config", config}};
  return detail::dump(out);
}

}  // namespace kdamp
