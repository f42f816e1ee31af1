#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kdamp/experiment.hpp"

using namespace kdamp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "kdamp_cli_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void put(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

int cli(const std::string& args) {
  const std::string cmd = std::string(KD_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Json stabilityReport(double K) {
  const Json cfg = {{"distribution", {{"family", "bicauchy"}, {"delta", 1.0}, {"omega0", 2.0}}}, {"K", K}};
  const auto res = runExperiment("stability", cfg);
  return Json::parse(res.find("stability.json")->content).at("report");
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

const Json kGauss = {{"family", "gaussian"}, {"sigma", 1.0}};

}  // namespace

TEST_CASE("stability experiment", "[cli]") {
  const auto below = stabilityReport(3.9);
  CHECK(below.at("verdict") == "Stable");
  CHECK(below.at("windingNumber") == 0);
  CHECK(below.at("criticalCoupling").get<double>() == Catch::Approx(4.0).epsilon(1e-9));

  const auto above = stabilityReport(4.1);
  CHECK(above.at("verdict") == "Unstable");
  CHECK(above.at("windingNumber").get<int>() >= 1);
  REQUIRE(!above.at("unstableRoots").empty());
  CHECK(above.at("unstableRoots")[0].at("im").get<double>() < 0.0);
}

TEST_CASE("kc-scan experiment", "[cli]") {
  const Json cfg = {{"distribution", {{"family", "bicauchy"}, {"delta", 1.0}, {"omega0", 0.0}}},
                    {"parameter", "omega0"},
                    {"values", {0.0, 0.5, 2.0}}};
  std::istringstream csv(runExperiment("kc-scan", cfg).find("kc_scan.csv")->content);
  std::string line;
  std::getline(csv, line);
  CHECK(line == "param,K_c,critical_omegas");
  for (double w0 : {0.0, 0.5, 2.0}) {
    std::getline(csv, line);
    const double kc = std::stod(line.substr(line.find(',') + 1));
    CHECK(kc == Catch::Approx(w0 <= 1.0 ? 2.0 * (1.0 + w0 * w0) : 4.0).epsilon(1e-9));
  }
  Json bad = cfg;
  bad["parameter"] = "sigma";
  CHECK(codeOf([&] { runExperiment("kc-scan", bad); }) == Errc::Validation);
}

TEST_CASE("strict parsing", "[cli]") {
  const Json good = {{"distribution", kGauss}, {"K", 1.0}};
  CHECK_NOTHROW(runExperiment("stability", good));
  for (const Json& bad : {
           Json{{"distribution", kGauss}, {"K", 1.0}, {"extra", 1}},
           Json{{"distribution", {{"family", "gaussian"}, {"sigma", 1.0}, {"delta", 2.0}}}, {"K", 1.0}},
           Json{{"distribution", kGauss}},
           Json{{"distribution", kGauss}, {"K", "one"}},
           Json{{"distribution", kGauss}, {"K", -1.0}},
           Json{{"distribution", {{"family", "laplace"}}}, {"K", 1.0}},
           Json{{"distribution", kGauss}, {"K", 1.0}, {"formatVersion", 99}},
           Json{{"distribution", kGauss}, {"K", 1.0}, {"experiment", "linear"}},
           Json{{"distribution", {{"family", "mixture"}, {"weights", {0.5, 0.6}},
                                  {"components", {{{"family", "cauchy"}, {"delta", 1.0}}, kGauss}}}},
                {"K", 1.0}},
       })
    CHECK(exitCodeFor(codeOf([&] { runExperiment("stability", bad); })) == 2);
  CHECK(codeOf([&] { runExperiment("plot", good); }) == Errc::Validation);
}

TEST_CASE("resolved config is echoed", "[cli]") {
  const Json cfg = {{"distribution", kGauss}, {"K", 1.0}, {"epsilon", 1e-3}, {"T", 1.0}};
  const auto res = runExperiment("nonlinear", cfg);
  CHECK(res.config.at("kMax") == 8);
  CHECK(res.config.at("gridNodes") == 512);
  CHECK(res.config.at("distribution").at("center") == 0.0);
  CHECK(res.config.at("initialPerturbation").at("modes").size() == 1);
  const auto report = Json::parse(res.find("scattering.json")->content);
  CHECK(report.at("formatVersion") == kFormatVersion);
  CHECK(report.at("config") == res.config);
}

TEST_CASE("reruns are byte-identical", "[cli]") {
  const Json nl = {{"distribution", kGauss}, {"K", 1.0}, {"epsilon", 1e-2}, {"T", 3.0}, {"snapshotTimes", {1, 2, 3}}};
  const auto a = runExperiment("nonlinear", nl), b = runExperiment("nonlinear", nl);
  REQUIRE(a.artifacts.size() == b.artifacts.size());
  for (std::size_t i = 0; i < a.artifacts.size(); ++i) CHECK(a.artifacts[i].content == b.artifacts[i].content);

  const Json fn = {{"distribution", kGauss}, {"N", 500},     {"K", 1.0}, {"epsilon", 0.05},
                   {"sampling", "seeded"},   {"seed", 1234}, {"T", 2.0}};
  const auto c = runExperiment("finite-n", fn), d = runExperiment("finite-n", fn);
  CHECK(c.find("Z.csv")->content == d.find("Z.csv")->content);
  std::istringstream csv(c.find("Z.csv")->content);
  std::string header;
  std::getline(csv, header);
  CHECK(header == "t,Re(Z),Im(Z),abs(Z)");
}

TEST_CASE("linear and witness experiments", "[cli]") {
  const auto dir = scratch("linear");
  std::string samples = "t,re,im\n";
  for (int j = 0; j <= 2000; ++j) samples += fmt(0.01 * j) + "," + fmt(std::pow(1.0 + 0.01 * j, -4.0)) + ",0\n";
  put(dir / "F.csv", samples);
  const Json viaCsv = {{"distribution", {{"family", "cauchy"}, {"delta", 1.0}}},
                       {"K", 1.0},
                       {"T", 20.0},
                       {"input", {{"family", "csv"}, {"path", "F.csv"}}}};
  Json viaFormula = viaCsv;
  viaFormula["input"] = {{"family", "algebraic"}, {"p", 4.0}};
  ExperimentContext ctx;
  ctx.baseDir = dir;
  const auto a = runExperiment("linear", viaCsv, ctx), b = runExperiment("linear", viaFormula, ctx);
  CHECK(a.find("R.csv")->content == b.find("R.csv")->content);
  const auto fit = Json::parse(b.find("fit.json")->content).at("fit");
  CHECK(fit.at("exponent").get<double>() > 3.0);

  Json id = viaFormula;
  id["K"] = 0.0;
  id["input"] = {{"family", "initial-data"}, {"profile", {{"kind", "gaussian"}, {"center", 0.0}, {"width", 1.0}}}};
  id["distribution"] = kGauss;
  id["T"] = 2.0;
  // h g with both unit Gaussians: F(t) = e^{-t^2/4} / sqrt(2).
  std::istringstream rows(runExperiment("linear", id).find("R.csv")->content);
  std::string line;
  std::getline(rows, line);
  double worst = 0.0;
  while (std::getline(rows, line)) {
    std::stringstream ls(line);
    std::string t, re;
    std::getline(ls, t, ',');
    std::getline(ls, re, ',');
    worst = std::max(worst, std::abs(std::stod(re) - std::exp(-0.25 * std::stod(t) * std::stod(t)) / std::sqrt(2.0)));
  }
  CHECK(worst <= 1e-12);

  const Json w = {{"distribution", {{"family", "cauchy"}, {"delta", 1.0}}}, {"K", 4.0}, {"dt", 1e-3}, {"T", 5.0}};
  const auto wr = Json::parse(runExperiment("witness", w).find("witness.json")->content).at("witness");
  CHECK(wr.at("growthConfirmed") == true);
  CHECK(wr.at("predictedRate").get<double>() == Catch::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("compare", "[cli]") {
  const Json cont = {{"distribution", kGauss}, {"K", 1.0}, {"epsilon", 0.01}, {"T", 2.0}};
  const Json fin = {{"distribution", kGauss}, {"N", 4000}, {"K", 1.0}, {"epsilon", 0.01}, {"T", 2.0}};

  SECTION("zero perturbation leaves only the lattice error") {
    Json c = cont, f = fin;
    c["initialPerturbation"] = {{"modes", Json::array()}};
    f["initialPerturbation"] = {{"modes", Json::array()}};
    const auto res = runExperiment("compare", {{"continuum", c}, {"finiteN", f}});
    const auto cmp = Json::parse(res.find("comparison.json")->content).at("comparison");
    CHECK(cmp.at("supDifference").get<double>() <= 1e-3);
  }
  SECTION("mismatched coupling") {
    Json f = fin;
    f["K"] = 2.0;
    CHECK(codeOf([&] { runExperiment("compare", {{"continuum", cont}, {"finiteN", f}}); }) ==
          Errc::MismatchedConfigs);
  }
  SECTION("run directories") {
    const auto dir = scratch("compare");
    writeArtifacts(runExperiment("nonlinear", cont), dir / "cont");
    writeArtifacts(runExperiment("finite-n", fin), dir / "fin");
    ExperimentContext ctx;
    ctx.baseDir = dir;
    const auto res = runExperiment("compare", {{"continuum", "cont"}, {"finiteN", "fin"}, {"tolerance", 5e-3}}, ctx);
    const auto cmp = Json::parse(res.find("comparison.json")->content).at("comparison");
    CHECK(cmp.at("withinTolerance") == true);
    CHECK(cmp.at("samples") == 201);

    Json f = fin;
    f["continuum"] = "cont";
    const auto viaFiniteN = runExperiment("finite-n", f, ctx);
    REQUIRE(viaFiniteN.find("comparison.csv"));
    CHECK(viaFiniteN.find("comparison.csv")->content == res.find("comparison.csv")->content);

    Json other = cont;
    other["epsilon"] = 0.02;
    writeArtifacts(runExperiment("nonlinear", other), dir / "other");
    CHECK(codeOf([&] { runExperiment("compare", {{"continuum", "other"}, {"finiteN", "fin"}}, ctx); }) ==
          Errc::MismatchedConfigs);
  }
}

TEST_CASE("command line", "[cli]") {
  const auto dir = scratch("binary");
  put(dir / "ok.json", R"({"formatVersion": 1, "distribution": {"family": "bicauchy", "delta": 1, "omega0": 2}, "K": 3.9})");
  put(dir / "unknown.json", R"({"distribution": {"family": "cauchy", "delta": 1}, "K": 1, "colour": "red"})");
  put(dir / "broken.json", R"({"distribution": )");
  put(dir / "noroot.json", R"({"distribution": {"family": "cauchy", "delta": 1}, "K": 1})");

  CHECK(cli("stability --config " + (dir / "ok.json").string() + " --out " + (dir / "ok").string()) == 0);
  CHECK(fs::exists(dir / "ok" / "stability.json"));
  const auto side = Json::parse(slurp(dir / "ok" / "config.json"));
  CHECK(side.at("formatVersion") == kFormatVersion);
  CHECK(side.at("experiment") == "stability");

  CHECK(cli("stability --config " + (dir / "unknown.json").string() + " --out " + (dir / "unknown").string()) == 2);
  CHECK(!fs::exists(dir / "unknown"));
  CHECK(cli("stability --config " + (dir / "broken.json").string() + " --out " + (dir / "broken").string()) == 2);
  CHECK(!fs::exists(dir / "broken"));
  CHECK(cli("stability --config " + (dir / "missing.json").string()) == 2);
  CHECK(cli("frobnicate --config " + (dir / "ok.json").string()) == 2);

  CHECK(cli("witness --config " + (dir / "noroot.json").string() + " --out " + (dir / "noroot").string()) == 3);
  const auto err = Json::parse(slurp(dir / "noroot" / "error.json"));
  CHECK(err.at("error") == "RootNotConverged");
  CHECK(err.at("exitCode") == 3);
}
