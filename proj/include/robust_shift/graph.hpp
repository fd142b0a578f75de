// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace robust_shift {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Edge = std::pair<int, int>;

enum class Split { kTrain, kVal, kTest };

const char* split_name(Split split);
Split parse_split(const std::string& name);

/// One labeled graph. `noisy` is ground truth for oracle evaluation only and
/// is never read on the training path.
struct GraphInstance {
  std::int64_t id = 0;
  Split split = Split::kTrain;
  int env = 0;
  int label = 0;
  bool noisy = false;
  Matrix nodes;  // n_nodes x d_in
  std::vector<Edge> edges;

  int num_nodes() const { return static_cast<int>(nodes.rows()); }
  bool operator==(const GraphInstance&) const = default;
};

/// Throws InvalidInput if the graph has no nodes or an edge is out of range,
/// and DomainError if the label is outside [0, num_classes).
void validate(const GraphInstance& graph, int num_classes);

/// Row-stochastic matrix A with A(v, u) = 1/|{v} U N(v)| for u in {v} U N(v).
/// Duplicate edges and self loops collapse into the set semantics.
Matrix mean_aggregation_matrix(int num_nodes, const std::vector<Edge>& edges);

/// Graph with its aggregation operator precomputed, as consumed by the model.
struct PreparedGraph {
  Matrix features;
  Matrix aggregation;
  Matrix aggregated_input;  // aggregation * features, reused every epoch
  int label = 0;
};

PreparedGraph prepare(const GraphInstance& graph);
std::vector<PreparedGraph> prepare_all(const std::vector<GraphInstance>& graphs);

}  // namespace robust_shift
