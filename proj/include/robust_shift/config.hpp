// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "robust_shift/baselines.hpp"
#include "robust_shift/cmo.hpp"
#include "robust_shift/nnr.hpp"
#include "robust_shift/synthdata.hpp"

namespace robust_shift {

enum class Method {
  kErm,
  kErmNnr,
  kErmCmoKl,
  kErmCmoChi,
  kErmNnrCmoKl,
  kErmNnrCmoChi,
  kCvar,
  kChisq,
  kCvarDoro,
  kChisqDoro,
  kCvarGroup,
  kGroupDro,
  kGradientDro,
  kVariantDro,
};

/// Canonical order used for reports.
const std::vector<Method>& all_methods();
const char* method_name(Method method);
Method parse_method(const std::string& name);

bool uses_nnr(Method method);
bool uses_cmo(Method method);
/// Divergence order for CMO methods (1 for _kl, 2 for _chi).
double cmo_order(Method method);
std::optional<BaselineMethod> as_baseline(Method method);

enum class ModelSelection { kBestValidation, kLastEpoch };

struct DiagConfig {
  std::vector<double> margins = {0.0, 0.5, 1.0, 2.0};
  double sigma = 0.0;  // <= 0 selects the pooled estimate
};

struct TrainConfig {
  Method method = Method::kErm;
  int batch_size = 32;
  int epochs = 400;
  double learning_rate = 0.001;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  int embedding_dim = 32;
  int num_layers = 3;
  ModelSelection selection = ModelSelection::kBestValidation;

  SynthConfig data;
  NnrConfig nnr;
  CmoConfig cmo;
  BaselineSpec baseline;
  DiagConfig diag;
};

/// Throws ConfigError on the first invalid field.
void validate(const TrainConfig& config);

/// Full-scale defaults: 3000 graphs per majority class, 400 epochs.
TrainConfig paper_preset();
/// Same hyperparameters on per-class train counts [300,300,30,300,300,300],
/// 300 validation/test graphs per class, and 50 epochs.
TrainConfig desk_preset();

/// Applies one `section.key = value` entry. Unknown keys throw ConfigError
/// naming the key.
void apply_setting(TrainConfig& config, const std::string& key, const std::string& value);

/// Ordered key/value pairs of a flat config file. Blank lines and lines
/// starting with '#' are skipped.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::istream& in);

/// `run.preset` (if present) is applied first, then every other entry in
/// file order.
TrainConfig parse_config(std::istream& in);
TrainConfig load_config(const std::string& path);

/// Every key with its current value, in canonical order; parse_config of
/// the rendered text reproduces the config.
std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& config);
std::string render_config(const TrainConfig& config);

std::string format_double(double value);

}  // namespace robust_shift
