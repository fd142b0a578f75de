// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "robust_shift/config.hpp"
#include "robust_shift/diagnostics.hpp"
#include "robust_shift/trainer.hpp"

namespace robust_shift {

using Json = nlohmann::ordered_json;

/// Outcome of one (config, seed) training run, evaluated on the test split.
struct RunRecord {
  std::string method;
  double noise_rate = 0.0;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  int minority_class = 0;
  int selected_epoch = -1;
  EvalResult test;
  EvalResult val;
  std::vector<double> q_final;
  std::vector<std::vector<double>> q_trajectory;
  ConvergenceTrace trace;
  // Oracle check using the hidden noisy flags; never fed back into training.
  std::optional<double> nnr_mean_weight_noisy;
  std::optional<double> nnr_mean_weight_clean;
  std::vector<std::pair<std::string, std::string>> config;

  double minority_accuracy() const { return test.per_class_accuracy.at(minority_class); }
};

/// Aggregate over the seeds of one (method, noise rate) cell.
struct MetricsSummary {
  std::string method;
  double noise_rate = 0.0;
  int runs_ok = 0;
  std::vector<std::uint64_t> failed_seeds;
  double minority_avg = 0.0;
  double minority_std = 0.0;  // sample standard deviation over seeds
  double minority_max = 0.0;
  double overall_avg = 0.0;
  double overall_std = 0.0;
};

struct ExperimentResult {
  std::vector<RunRecord> runs;  // in seed order
  std::vector<std::optional<TrainResult>> trained;
  MetricsSummary summary;
};

/// Worker threads for independent runs: ROBUST_SHIFT_THREADS if set, else
/// the hardware concurrency.
int worker_count();

/// Trains and evaluates one seed. Training failures are captured in the
/// record rather than thrown.
RunRecord run_single(const TrainConfig& config, const Dataset& dataset, const TrainData& data,
                     std::uint64_t seed, TrainResult* keep = nullptr);

/// Every seed of config.seeds on the given dataset; runs execute
/// concurrently and are collected in seed order.
ExperimentResult run_experiment(const TrainConfig& config, const Dataset& dataset,
                                bool keep_models = false);
/// Generates the dataset from config.data first.
ExperimentResult run_experiment(const TrainConfig& config);

MetricsSummary summarize(const std::vector<RunRecord>& runs);

Json to_json(const RunRecord& run);
RunRecord run_from_json(const Json& doc);
Json to_json(const MetricsSummary& summary);
Json summary_json(const ExperimentResult& result);
Json to_json(const BoundReport& report);
Json to_json(const EvalResult& eval);

/// Model file: the parameters plus the config snapshot they were trained with.
struct ModelFile {
  ModelState model;
  TrainConfig config;
  std::uint64_t seed = 0;
  int selected_epoch = -1;
};

Json model_to_json(const ModelFile& file);
ModelFile model_from_json(const Json& doc);
void save_model(const ModelFile& file, const std::string& path);
ModelFile load_model(const std::string& path);

/// Writes `doc` followed by a newline.
void write_json_file(const Json& doc, const std::string& path);

/// Grid of hyperparameter values, one axis per key, file order.
using Grid = std::vector<std::pair<std::string, std::vector<std::string>>>;
Grid parse_grid(std::istream& in);
Grid load_grid(const std::string& path);

struct SweepRow {
  std::vector<std::pair<std::string, std::string>> settings;
  MetricsSummary summary;
};

/// Cartesian product of the grid (first axis varies slowest).
std::vector<SweepRow> sweep(const TrainConfig& config, const Grid& grid);
std::string sweep_csv(const Grid& grid, const std::vector<SweepRow>& rows);

inline constexpr const char* kReportHeader =
    "method,noise_rate,minority_avg,minority_std,minority_max,overall_avg,overall_std";

/// Aggregates every run document (kind == "run") found directly in `dir`.
/// Missing (method, noise rate) combinations appear as rows of "NA".
std::string report_csv(const std::string& dir);
Json report_json(const std::string& dir);

}  // namespace robust_shift
