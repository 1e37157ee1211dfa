// eeqt: command-line entry point for the four workflows.
#include <CLI11.hpp>

#include <iostream>

#include "eeqt/workflows.hpp"

namespace {

using Workflow = int (*)(const eeqt::Json&, const eeqt::RunOptions&);

/// A manifest written by a previous run is accepted as a config: its
/// snapshot is used verbatim.
eeqt::Json read_config(const std::string& path) {
  if (path.empty()) return eeqt::Json::object();
  eeqt::Json j = eeqt::load_json(path);
  if (j.is_object() && j.value("tool", "") == "eeqt" && j.contains("config")) return j["config"];
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-enhanced quantum theory simulations"};
  app.require_subcommand(1);
  std::string config_path;
  eeqt::RunOptions opt;
  std::string out_dir = "out";
  app.add_option("--config", config_path, "JSON config file (or a previous run's manifest.json)")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", opt.seed, "Master seed");
  app.add_option("--workers", opt.workers, "Worker threads (results do not depend on this)")
      ->check(CLI::PositiveNumber);
  app.add_option("--out", out_dir, "Output directory");
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress the report on stdout");

  const std::pair<const char*, Workflow> commands[] = {
      {"validate", eeqt::run_validate_workflow},
      {"cloud", eeqt::run_cloud_workflow},
      {"tunnel", eeqt::run_tunnel_workflow},
      {"fractal", eeqt::run_fractal_workflow},
  };
  const char* help[] = {
      "PDP ensemble versus the master equation on the toy model",
      "cloud-chamber tracks, effective-equation check and Born limit",
      "tunneling-time scan over barrier width or height",
      "tetrahedral quantum fractal: point cloud, dimensions, Markov iterates",
  };
  std::vector<CLI::App*> subs;
  for (size_t i = 0; i < std::size(commands); ++i) {
    auto* sub = app.add_subcommand(commands[i].first, help[i]);
    sub->fallthrough();
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return eeqt::kExitUsage;
  }

  opt.out_dir = out_dir;
  if (!quiet) opt.log = &std::cout;
  try {
    const eeqt::Json cfg = read_config(config_path);
    for (size_t i = 0; i < subs.size(); ++i)
      if (subs[i]->parsed()) return commands[i].second(cfg, opt);
  } catch (const eeqt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return eeqt::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return eeqt::kExitUsage;
  }
  return eeqt::kExitUsage;
}
