// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "robust_shift/config.hpp"
#include "robust_shift/errors.hpp"
#include "robust_shift/model.hpp"

namespace robust_shift {

/// Raised when the training loss or gradient stops being finite.
class TrainingDiverged : public NumericError {
 public:
  using NumericError::NumericError;
};

struct ConvergenceTrace {
  std::vector<double> grad_norm;          // per epoch, mean over batches of ||grad_theta L||
  std::vector<double> duality_gap_proxy;  // per epoch, max_g l_g - sum_g q_g l_g
};

struct EvalResult {
  std::vector<double> per_class_accuracy;  // percent; NaN for absent classes
  std::vector<int> class_counts;
  double overall_accuracy = 0.0;  // macro average over present classes
  std::vector<int> absent_classes;
};

/// Split-specific inputs to the training loop.
struct TrainData {
  std::vector<PreparedGraph> train;
  std::vector<PreparedGraph> val;
  int num_classes = 0;
  int input_dim = 0;
};

TrainData make_train_data(const Dataset& dataset);

struct TrainResult {
  ModelState initial_model;
  ModelState final_model;
  ModelState selected_model;
  int selected_epoch = -1;  // -1: no epoch ran, the initial model is selected
  std::optional<Vector> group_weights;         // final q for group-weighting methods
  std::vector<Vector> q_trajectory;            // q after each epoch
  std::optional<Vector> nnr_weights;           // weights of the last refresh
  ConvergenceTrace trace;
  std::vector<double> val_accuracy;            // macro, per epoch
};

/// Trains one model. Deterministic in (config, data, seed).
TrainResult train(const TrainConfig& config, const TrainData& data, std::uint64_t seed);

EvalResult evaluate(const ModelState& model, std::span<const PreparedGraph> graphs,
                    int num_classes);

/// Accuracy from predictions; exposed for fixtures.
EvalResult evaluate_predictions(std::span<const int> predictions, std::span<const int> labels,
                                int num_classes);

/// Argmax with ties resolved to the lower class index.
int predict(const ModelState& model, const PreparedGraph& graph);

/// Empirical label frequencies of the train split; absent classes count as
/// one sample so the prior stays strictly positive.
Vector label_prior(std::span<const PreparedGraph> train, int num_classes);

/// Class with the fewest training labels (lowest index on ties).
int minority_class(std::span<const PreparedGraph> train, int num_classes);

}  // namespace robust_shift
