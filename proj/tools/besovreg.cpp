// besovreg: command-line front end for the experiment pipelines.

#include <CLI11.hpp>
#include <iostream>
#include <map>

#include "besov/experiment.hpp"

namespace {

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> jmax;
  std::optional<double> tol;
};

int run_subcommand(const std::string& kind, const Overrides& o) {
  using namespace besov;
  ExperimentConfig cfg;
  try {
    if (!o.config.empty()) cfg = read_config_file(o.config);
    if (!cfg.experiment.empty() && cfg.experiment != kind)
      throw ConfigError(concat("config key 'experiment': '", cfg.experiment, "' does not match subcommand ", kind));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  cfg.experiment = kind;
  if (!o.out.empty()) cfg.out = o.out;
  if (o.seed) cfg.seed = *o.seed;
  if (o.jmax) cfg.j_max = *o.jmax;
  if (o.tol) cfg.tol = *o.tol;
  const RunResult r = run(cfg);
  if (r.status != kExitOk) {
    std::cerr << "error: " << r.error << '\n';
    if (!r.manifest.is_null()) std::cerr << "partial manifest: " << (fs::path(cfg.out) / "manifest.json").string() << '\n';
    return r.status;
  }
  std::cout << "wrote " << r.manifest["files"].size() << " files, manifest " << (fs::path(cfg.out) / "manifest.json").string()
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Besov regularity experiments for Stokes and Navier-Stokes on polyhedral domains"};
  app.require_subcommand(1);
  const std::map<std::string, std::string> kinds{
      {"analyze", "analyze-field"}, {"solve-stokes", "solve-stokes"}, {"solve-nse", "solve-nse"},
      {"nterm", "nterm-compare"},   {"embed-check", "embed-check"},   {"bounds", "bounds-table"},
      {"dt-diagram", "dt-diagram"}};
  Overrides o;
  std::string chosen;
  for (const auto& [name, kind] : kinds) {
    auto* sub = app.add_subcommand(name, kind);
    sub->add_option("--config", o.config, "flat JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed", o.seed, "random seed");
    sub->add_option("--jmax", o.jmax, "finest wavelet level");
    sub->add_option("--tol", o.tol, "solver tolerance");
    sub->callback([&chosen, k = kind] { chosen = k; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : besov::kExitValidation;
  }
  return run_subcommand(chosen, o);
}
