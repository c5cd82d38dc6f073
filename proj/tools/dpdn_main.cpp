#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dpdn/config.hpp"
#include "dpdn/train.hpp"

namespace fs = std::filesystem;

namespace {

// DPDN_SEED and DPDN_OUT_ROOT override the config seed and relocate relative
// output paths.
void apply_env_seed(dpdn::cli::RunConfig& cfg) {
  if (const char* s = std::getenv("DPDN_SEED")) {
    cfg.seed = std::strtoull(s, nullptr, 10);
  }
}

std::string apply_out_root(const std::string& path) {
  const char* root = std::getenv("DPDN_OUT_ROOT");
  if (root == nullptr || path.empty() || fs::path(path).is_absolute()) {
    return path;
  }
  return (fs::path(root) / path).string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DPDN: category-level 6D pose and size estimation"};
  app.require_subcommand(1);

  std::string config_path, out_path, data_path, ckpt_path, report_path;
  std::string in_path, csv_path, mode_override;
  std::vector<std::string> ablate_override;

  auto* gen = app.add_subcommand("gen", "generate a synthetic two-domain dataset");
  gen->add_option("--config", config_path, "run config JSON")->required();
  gen->add_option("--out", out_path, "output dataset directory")->required();

  auto* train = app.add_subcommand("train", "train DPDN per the config");
  train->add_option("--config", config_path, "run config JSON")->required();
  train->add_option("--data", data_path, "dataset directory")->required();
  train->add_option("--out", ckpt_path, "final checkpoint path")->required();
  train->add_option("--mode", mode_override,
                    "sim-only | supervised | self-supervised");
  train->add_option("--ablate", ablate_override,
                    "deformer | estimator | inter | intra | parallel");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on real_test");
  eval->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
  eval->add_option("--data", data_path, "dataset directory")->required();
  eval->add_option("--report", report_path, "report JSON path")->required();
  eval->add_option("--config", config_path,
                   "run config JSON (default: <ckpt>.config.json)");

  auto* report = app.add_subcommand("report", "re-emit a report as CSV");
  report->add_option("--in", in_path, "report JSON path")->required();
  report->add_option("--csv", csv_path, "CSV output path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      dpdn::cli::RunConfig cfg = dpdn::cli::RunConfig::load(config_path);
      apply_env_seed(cfg);
      const std::string out = apply_out_root(out_path);
      dpdn::datagen::make_split(cfg.effective_dataset(), out);
      std::cout << "dataset written to " << out << "\n";
    } else if (train->parsed()) {
      dpdn::cli::RunConfig cfg = dpdn::cli::RunConfig::load(config_path);
      apply_env_seed(cfg);
      if (!mode_override.empty()) cfg.mode = mode_override;
      for (const auto& a : ablate_override) cfg.ablate.insert(a);
      cfg.validate();
      const auto out = dpdn::cli::run_training(cfg, apply_out_root(data_path),
                                               apply_out_root(ckpt_path));
      std::cout << "checkpoint written to " << out.checkpoint << "\n"
                << "training log at " << out.log_csv << "\n";
    } else if (eval->parsed()) {
      const std::string ckpt = apply_out_root(ckpt_path);
      const std::string cfg_path =
          config_path.empty() ? ckpt + ".config.json" : config_path;
      dpdn::cli::RunConfig cfg = dpdn::cli::RunConfig::load(cfg_path);
      const auto out = dpdn::cli::run_evaluation(
          ckpt, apply_out_root(data_path), cfg, apply_out_root(report_path));
      std::cout << "reports written to " << out.head_json << " and "
                << out.umeyama_json << "\n";
      for (const std::string& m : out.head.metrics) {
        std::cout << "  " << m << ": " << out.head.mean.at(m)
                  << " (umeyama " << out.umeyama.mean.at(m) << ")\n";
      }
    } else if (report->parsed()) {
      const auto rep = dpdn::evalharness::read_report(apply_out_root(in_path));
      dpdn::evalharness::write_report_csv(rep, apply_out_root(csv_path));
      std::cout << "CSV written to " << apply_out_root(csv_path) << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
