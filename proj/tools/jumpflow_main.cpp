// jumpflow: simulate and certify distributed gradient flows over Poisson
// channels.
//
//   jumpflow run <config.json> [--out DIR] [--seed S] [--paths N]
//   jumpflow certify <config.json>
//   jumpflow preset <name> [--out DIR] [--seed S] [--paths N]
//
// --dump-effective-config prints the configuration after overrides and exits.
// JUMPFLOW_OUT_DIR sets the default output directory.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "jumpflow/errors.hpp"
#include "jumpflow/experiment.hpp"

namespace {

struct Overrides {
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> paths;
  bool dump = false;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--out", o.out, "Output directory (default: $JUMPFLOW_OUT_DIR/<name> or ./jumpflow_out/<name>)");
  cmd->add_option("--seed", o.seed, "Master seed of the ensemble");
  cmd->add_option("--paths", o.paths, "Number of sample paths")->check(CLI::PositiveNumber);
  cmd->add_flag("--dump-effective-config", o.dump, "Print the effective configuration and exit");
}

jumpflow::ExperimentConfig apply(jumpflow::ExperimentConfig cfg, const Overrides& o) {
  if (o.seed) cfg.ensemble.master_seed = *o.seed;
  if (o.paths) cfg.ensemble.N = *o.paths;
  return cfg;
}

std::filesystem::path output_dir(const jumpflow::ExperimentConfig& cfg, const Overrides& o) {
  if (!o.out.empty()) return o.out;
  if (const char* env = std::getenv("JUMPFLOW_OUT_DIR"); env && *env) {
    return std::filesystem::path(env) / cfg.name;
  }
  return std::filesystem::path("jumpflow_out") / cfg.name;
}

int run(const jumpflow::ExperimentConfig& cfg, const Overrides& o) {
  if (o.dump) {
    std::cout << jumpflow::dump_config(cfg);
    return 0;
  }
  const auto dir = output_dir(cfg, o);
  const auto report = jumpflow::run_experiment(cfg, dir);
  jumpflow::write_certificate_text(std::cout, cfg, report.certificate);
  std::cout << "\n";
  for (const auto& r : report.runs) {
    std::cout << "wrote " << r.csv.string() << "  (beta_hat " << r.beta_hat << ", plateau "
              << r.plateau << ")\n";
  }
  std::cout << "summary in " << (dir / "summary.txt").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed gradient flow over Poisson communication channels"};
  app.require_subcommand(1);

  Overrides run_opts, preset_opts, certify_opts;
  std::string run_config, certify_config, preset_name;

  auto* run_cmd = app.add_subcommand("run", "Simulate a configuration and write CSVs and reports");
  run_cmd->add_option("config", run_config, "JSON configuration file")->required()->check(CLI::ExistingFile);
  add_overrides(run_cmd, run_opts);

  auto* certify_cmd = app.add_subcommand("certify", "Compute the sufficient rates only");
  certify_cmd->add_option("config", certify_config, "JSON configuration file")->required()->check(CLI::ExistingFile);
  add_overrides(certify_cmd, certify_opts);

  auto* preset_cmd = app.add_subcommand("preset", "Run a built-in experiment (nominal, experiment1, experiment2)");
  preset_cmd->add_option("name", preset_name, "Preset name")->required();
  add_overrides(preset_cmd, preset_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return run(apply(jumpflow::load_config(run_config), run_opts), run_opts);
    if (*preset_cmd) return run(apply(jumpflow::preset(preset_name), preset_opts), preset_opts);
    if (*certify_cmd) {
      const auto cfg = apply(jumpflow::load_config(certify_config), certify_opts);
      if (certify_opts.dump) {
        std::cout << jumpflow::dump_config(cfg);
        return 0;
      }
      const auto cert = jumpflow::certify(cfg);
      jumpflow::write_certificate_text(std::cout, cfg, cert);
      if (!certify_opts.out.empty()) {
        std::filesystem::create_directories(certify_opts.out);
        std::ofstream kv(std::filesystem::path(certify_opts.out) / "certificate.kv");
        jumpflow::write_certificate_kv(kv, cert);
        std::ofstream txt(std::filesystem::path(certify_opts.out) / "certificate.txt");
        jumpflow::write_certificate_text(txt, cfg, cert);
      }
      return 0;
    }
  } catch (const jumpflow::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const jumpflow::PathDiverged& e) {
    std::cerr << "simulation diverged: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
