// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "robust_shift/model.hpp"

namespace robust_shift {

enum class NnrMode {
  kNeighborFraction,  // same-class neighbors / all neighbors within gamma
  kClassNormalized,   // same-class neighbors / (class size - 1)
};

const char* nnr_mode_name(NnrMode mode);
NnrMode parse_nnr_mode(const std::string& name);

struct NnrConfig {
  double gamma = 4.0;  // Euclidean radius in readout space
  NnrMode mode = NnrMode::kNeighborFraction;
  int refresh_every = 5;
  double fallback_weight = 1.0;
};

void validate(const NnrConfig& config);

/// Readout embedding of every graph, one per row. Does not touch the model.
Matrix compute_embeddings(const ModelState& model, std::span<const PreparedGraph> graphs);

struct NeighborCount {
  int same = 0;
  int total = 0;
  bool operator==(const NeighborCount&) const = default;
};

/// Neighbors j != i with ||g_i - g_j|| <= gamma, and how many share i's label.
NeighborCount count_neighbors(int i, const Matrix& embeddings, std::span<const int> labels,
                              double gamma);

/// Per-sample weights in [0, 1]. A sample with no neighbor inside gamma gets
/// the fallback weight.
Vector nnr_weights(const Matrix& embeddings, std::span<const int> labels,
                   const NnrConfig& config);

/// Weights for query points measured against a reference index (query
/// points are never their own neighbors).
Vector nnr_weights_against(const Matrix& queries, std::span<const int> query_labels,
                           const Matrix& reference, std::span<const int> reference_labels,
                           const NnrConfig& config);

std::vector<double> apply_weights(std::span<const double> raw_losses,
                                  std::span<const double> weights);

/// True on epoch 0 and whenever epoch is a multiple of refresh_every.
bool refresh_schedule(int epoch, const NnrConfig& config);

}  // namespace robust_shift
