// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#include "robust_shift/graph.hpp"

#include <algorithm>

#include "robust_shift/errors.hpp"

namespace robust_shift {

const char* split_name(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw InvalidInput("unknown split '" + name + "'");
}

void validate(const GraphInstance& graph, int num_classes) {
  const int n = graph.num_nodes();
  if (n < 1) throw InvalidInput("graph " + std::to_string(graph.id) + " has no nodes");
  for (const auto& [u, v] : graph.edges) {
    if (u < 0 || v < 0 || u >= n || v >= n) {
      throw InvalidInput("graph " + std::to_string(graph.id) + " has edge (" +
                         std::to_string(u) + "," + std::to_string(v) +
                         ") outside [0, " + std::to_string(n) + ")");
    }
  }
  if (graph.label < 0 || graph.label >= num_classes) {
    throw DomainError("graph " + std::to_string(graph.id) + " label " +
                      std::to_string(graph.label) + " outside [0, " +
                      std::to_string(num_classes) + ")");
  }
}

Matrix mean_aggregation_matrix(int num_nodes, const std::vector<Edge>& edges) {
  if (num_nodes < 1) throw InvalidInput("aggregation over an empty graph");
  Matrix adjacency = Matrix::Identity(num_nodes, num_nodes);
  for (const auto& [u, v] : edges) {
    if (u < 0 || v < 0 || u >= num_nodes || v >= num_nodes) {
      throw ShapeError("edge endpoint outside node range");
    }
    adjacency(u, v) = 1.0;
    adjacency(v, u) = 1.0;
  }
  for (int v = 0; v < num_nodes; ++v) {
    adjacency.row(v) /= adjacency.row(v).sum();
  }
  return adjacency;
}

PreparedGraph prepare(const GraphInstance& graph) {
  PreparedGraph out;
  out.features = graph.nodes;
  out.aggregation = mean_aggregation_matrix(graph.num_nodes(), graph.edges);
  out.aggregated_input = out.aggregation * out.features;
  out.label = graph.label;
  return out;
}

std::vector<PreparedGraph> prepare_all(const std::vector<GraphInstance>& graphs) {
  std::vector<PreparedGraph> out;
  out.reserve(graphs.size());
  std::transform(graphs.begin(), graphs.end(), std::back_inserter(out),
                 [](const GraphInstance& g) { return prepare(g); });
  return out;
}

}  // namespace robust_shift
