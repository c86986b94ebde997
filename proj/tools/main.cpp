// main.cpp - command line front end: runs scenario configs or builtin
// presets, lists presets, and validates configs without running them.
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <string>

#include "CLI11.hpp"
#include "lclab/report.hpp"
#include "lclab/scenario.hpp"
#include "lclab/version.hpp"

namespace {

// A run argument is either a builtin preset name or a path to a config file.
lclab::ScenarioConfig load_config(const std::string& arg) {
  if (const lclab::ScenarioPreset* p = lclab::find_preset(arg))
    return lclab::parse_scenario(p->text);
  if (!std::filesystem::exists(arg))
    throw lclab::config_error("config", "no such preset or config file: " + arg);
  return lclab::parse_scenario(lclab::read_text_file(arg));
}

// Output directory resolution: --out-dir wins; otherwise LCLAB_OUT_DIR, if
// set, roots the configured directory's last component; otherwise the config
// value stands.
void resolve_out_dir(lclab::ScenarioConfig& cfg, const std::string& flag_value) {
  if (!flag_value.empty()) {
    cfg.output.directory = flag_value;
    return;
  }
  if (const char* root = std::getenv("LCLAB_OUT_DIR")) {
    std::filesystem::path base(cfg.output.directory);
    cfg.output.directory = (std::filesystem::path(root) / base.filename()).string();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lclab: lattice transport bounds, smoothed observables, and "
               "propagation checks"};
  app.set_version_flag("--version", std::string("lclab ") + lclab::kVersion);
  app.require_subcommand(1);

  std::string run_target, out_dir;
  int threads = 0;
  long long seed = -1;
  bool no_plots = false;
  CLI::App* run = app.add_subcommand("run", "run a preset or config file");
  run->add_option("config", run_target, "preset name or config path")->required();
  run->add_option("--out-dir", out_dir, "artifact directory (overrides the config)");
  run->add_option("--threads", threads, "worker pool size for the checks stage");
  run->add_option("--seed", seed, "seed override for randomized checks");
  run->add_flag("--no-plots", no_plots, "skip SVG plot artifacts");

  CLI::App* list = app.add_subcommand("list", "list builtin scenario presets");

  std::string validate_target;
  CLI::App* validate = app.add_subcommand("validate", "parse and validate a config");
  validate->add_option("config", validate_target, "preset name or config path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage problems are configuration errors
  }

  try {
    if (list->parsed()) {
      std::fputs(lclab::list_builtin_scenarios().c_str(), stdout);
      return 0;
    }

    if (validate->parsed()) {
      lclab::ScenarioConfig cfg = load_config(validate_target);
      lclab::validate_scenario(cfg);
      std::printf("valid: %zu checks, config hash %s\n", cfg.checks.size(),
                  lclab::config_hash(cfg).c_str());
      return 0;
    }

    lclab::ScenarioConfig cfg = load_config(run_target);
    resolve_out_dir(cfg, out_dir);
    if (threads > 0) cfg.threads = threads;
    if (seed >= 0) cfg.seed = static_cast<unsigned>(seed);
    if (no_plots) cfg.output.plots = false;

    lclab::RunManifest man = lclab::run_scenario(cfg);
    for (const auto& [name, passed] : man.summary)
      std::printf("check %-24s %s\n", name.c_str(), passed ? "pass" : "FAIL");
    std::printf("wrote %s (%zu files)\n",
                (std::filesystem::path(cfg.output.directory) / "manifest.json").string().c_str(),
                man.files.size());
    if (!man.failure.empty()) {
      std::fprintf(stderr, "stage failure: %s\n", man.failure.c_str());
      return 2;
    }
    return man.all_passed() ? 0 : 1;
  } catch (const lclab::config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
