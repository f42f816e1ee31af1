#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "kdamp/experiment.hpp"

namespace fs = std::filesystem;

namespace {

// Exit codes: 0 success, 2 invalid config (nothing written), 3 numeric failure
// (error.json written to the output directory).
int runOne(const std::string& experiment, const std::string& configPath, std::string outDir) {
  kdamp::Json config;
  try {
    std::ifstream in(configPath);
    if (!in) throw kdamp::Error(kdamp::Errc::Validation, "cannot open config " + configPath);
    config = kdamp::Json::parse(in);
  } catch (const kdamp::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const kdamp::Json::exception& e) {
    std::cerr << "error: malformed JSON in " << configPath << ": " << e.what() << '\n';
    return 2;
  }
  if (outDir.empty()) {
    if (config.is_object() && config.contains("outputDir") && config["outputDir"].is_string())
      outDir = config["outputDir"].get<std::string>();
    else
      outDir = "kd-" + experiment;
  }
  kdamp::ExperimentContext ctx;
  ctx.baseDir = fs::absolute(configPath).parent_path();
  try {
    const auto result = kdamp::runExperiment(experiment, config, ctx);
    kdamp::writeArtifacts(result, outDir);
    std::cout << experiment << ": wrote " << result.artifacts.size() + 1 << " files to " << outDir << '\n';
    return 0;
  } catch (const kdamp::Error& e) {
    const int code = kdamp::exitCodeFor(e.code());
    std::cerr << "error: " << e.what() << '\n';
    if (code == 3) {
      try {
        fs::create_directories(outDir);
        std::ofstream(fs::path(outDir) / "error.json") << kdamp::errorReport(experiment, config, e);
      } catch (...) {
      }
    }
    return code;
  } catch (const kdamp::Json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stability and Landau damping experiments for the Kuramoto model"};
  app.require_subcommand(1);
  std::string config, out;
  for (const auto& name : kdamp::experimentNames()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", config, "experiment config (JSON)")->required();
    sub->add_option("--out", out, "output directory (default: outputDir from the config, else kd-<subcommand>)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  return runOne(app.get_subcommands().front()->get_name(), config, out);
}
