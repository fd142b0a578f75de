// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "robust_shift/errors.hpp"
#include "robust_shift/experiment.hpp"
#include "robust_shift/synthdata.hpp"

namespace rs = robust_shift;
namespace fs = std::filesystem;

namespace {

std::string run_stem(const rs::TrainConfig& cfg, std::uint64_t seed) {
  return std::string(rs::method_name(cfg.method)) + "_noise" + rs::format_double(cfg.data.alpha) + "_seed" +
         std::to_string(seed);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << text;
}

rs::Split split_option(const std::string& name) { return rs::parse_split(name); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust graph classification under label noise and distribution shift"};
  app.require_subcommand(1);

  std::string config_path, data_path, out_path, model_path, grid_path, dir_path;
  std::string split_name = "test";

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic graph dataset");
  gen->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out_path, "Output JSONL path")->required();

  auto* tr = app.add_subcommand("train", "Train every configured seed");
  tr->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  tr->add_option("--data", data_path, "Dataset JSONL")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", out_path, "Output directory")->required();

  auto* ev = app.add_subcommand("evaluate", "Per-class accuracy of a saved model");
  ev->add_option("--model", model_path, "Model JSON")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", data_path, "Dataset JSONL")->required()->check(CLI::ExistingFile);
  ev->add_option("--split", split_name, "train, val or test");

  auto* sw = app.add_subcommand("sweep", "Cartesian hyperparameter sweep");
  sw->add_option("--config", config_path, "Base config file")->required()->check(CLI::ExistingFile);
  sw->add_option("--grid", grid_path, "Grid file (key = v1, v2, ...)")->required()->check(CLI::ExistingFile);
  sw->add_option("--out", out_path, "Write the CSV here as well as to stdout");

  auto* dg = app.add_subcommand("diagnose", "Bound diagnostics for a saved model");
  dg->add_option("--model", model_path, "Model JSON")->required()->check(CLI::ExistingFile);
  dg->add_option("--data", data_path, "Dataset JSONL")->required()->check(CLI::ExistingFile);
  dg->add_option("--out", out_path, "Write the report here as well as to stdout");

  auto* rp = app.add_subcommand("report", "Aggregate run documents into tables");
  rp->add_option("--dir", dir_path, "Directory of run JSON files")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const rs::TrainConfig cfg = rs::load_config(config_path);
      rs::save_dataset(rs::generate_dataset(cfg.data), out_path);
    } else if (*tr) {
      const rs::TrainConfig cfg = rs::load_config(config_path);
      const rs::Dataset data = rs::load_dataset(data_path);
      fs::create_directories(out_path);
      const auto result = rs::run_experiment(cfg, data, /*keep_models=*/true);
      for (std::size_t i = 0; i < result.runs.size(); ++i) {
        const auto& run = result.runs[i];
        const fs::path base = fs::path(out_path) / run_stem(cfg, run.seed);
        rs::write_json_file(rs::to_json(run), base.string() + ".json");
        if (result.trained[i]) {
          rs::ModelFile file{result.trained[i]->selected_model, cfg, run.seed,
                             result.trained[i]->selected_epoch};
          rs::save_model(file, base.string() + ".model.json");
        }
        if (!run.ok) std::cerr << "seed " << run.seed << " failed: " << run.error << "\n";
      }
      rs::write_json_file(rs::summary_json(result),
                          (fs::path(out_path) / (std::string(rs::method_name(cfg.method)) + "_noise" +
                                                 rs::format_double(cfg.data.alpha) +
                                                 "_summary.json"))
                              .string());
      std::cout << rs::to_json(result.summary).dump(2) << "\n";
      if (result.summary.runs_ok == 0) return 3;
    } else if (*ev) {
      const rs::ModelFile file = rs::load_model(model_path);
      const rs::Dataset data = rs::load_dataset(data_path);
      const auto graphs = rs::prepare_all(data.split(split_option(split_name)));
      std::cout << rs::to_json(rs::evaluate(file.model, graphs, data.num_classes)).dump(2) << "\n";
    } else if (*sw) {
      const rs::TrainConfig cfg = rs::load_config(config_path);
      const rs::Grid grid = rs::load_grid(grid_path);
      const std::string csv = rs::sweep_csv(grid, rs::sweep(cfg, grid));
      if (!out_path.empty()) write_text(out_path, csv);
      std::cout << csv;
    } else if (*dg) {
      const rs::ModelFile file = rs::load_model(model_path);
      const rs::Dataset data = rs::load_dataset(data_path);
      const auto train = rs::prepare_all(data.split(rs::Split::kTrain));
      const auto test = rs::prepare_all(data.split(rs::Split::kTest));
      const auto report = rs::diagnose(file.model, train, test, data.num_classes, file.config.nnr,
                                       file.config.diag.margins, file.config.diag.sigma);
      const std::string text = rs::to_json(report).dump(2) + "\n";
      if (!out_path.empty()) write_text(out_path, text);
      std::cout << text;
    } else if (*rp) {
      const std::string csv = rs::report_csv(dir_path);
      write_text(fs::path(dir_path) / "report.csv", csv);
      rs::write_json_file(rs::report_json(dir_path), (fs::path(dir_path) / "report.json").string());
      std::cout << csv;
    }
  } catch (const rs::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const rs::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
