// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "robust_shift/graph.hpp"

namespace robust_shift {

/// Affine map y = weight * x + bias; weight is (out x in).
struct Layer {
  Matrix weight;
  Vector bias;

  int in_dim() const { return static_cast<int>(weight.cols()); }
  int out_dim() const { return static_cast<int>(weight.rows()); }
  bool operator==(const Layer& other) const {
    return weight == other.weight && bias == other.bias;
  }
};

/// Parameters of the graph classifier: L mean-aggregation layers followed by
/// mean-pooling readout and a linear head. Gradients use the same type.
struct ModelState {
  std::vector<Layer> layers;
  Layer head;

  int input_dim() const;
  int embedding_dim() const;
  int num_classes() const { return head.out_dim(); }
  int num_layers() const { return static_cast<int>(layers.size()); }

  std::size_t num_parameters() const;
  Vector flatten() const;
  void assign(const Vector& flat);
  double norm() const;
  bool all_finite() const;

  /// Same shapes, all zeros.
  ModelState zeros_like() const;
  ModelState& add_scaled(const ModelState& other, double scale);

  bool operator==(const ModelState&) const = default;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
/// With num_layers == 0 the head maps input_dim directly to classes.
ModelState init_model(int input_dim, int embedding_dim, int num_layers,
                      int num_classes, std::uint64_t seed);

/// Throws ShapeError unless layer l maps d_{l-1} -> d_l and the head maps the
/// embedding width to the class count.
void check_shapes(const ModelState& model, int input_dim);

/// ReLU(mean over {v} U N(v) of features, then affine). One row per node.
Matrix aggregate_layer(const Matrix& features, const std::vector<Edge>& edges,
                       const Layer& layer);

/// Column-wise mean of the node matrix.
Vector readout(const Matrix& nodes);

/// Intermediate values kept for the backward pass.
struct ForwardTrace {
  std::vector<Matrix> aggregated;      // input to layer l's affine map
  std::vector<Matrix> pre_activation;  // affine output of layer l
  Matrix final_nodes;
  Vector embedding;
  Vector logits;
};

ForwardTrace forward_trace(const ModelState& model, const PreparedGraph& graph);
Vector forward(const ModelState& model, const PreparedGraph& graph);
Vector forward(const ModelState& model, const GraphInstance& graph);
Vector embed(const ModelState& model, const PreparedGraph& graph);

/// sample_weight * (-log softmax(logits)[label]).
double weighted_cross_entropy(const Vector& logits, int label,
                              double sample_weight = 1.0);

/// Adds coefficient * d(raw cross-entropy)/d(theta) for one graph into grad.
void accumulate_gradient(const ModelState& model, const PreparedGraph& graph,
                         const ForwardTrace& trace, double coefficient,
                         ModelState& grad);

/// Gradient of sum_i coefficients[i] * loss_i. Returns the summed loss too.
struct LossAndGradient {
  double loss = 0.0;
  ModelState gradient;
};
LossAndGradient backward_coefficients(const ModelState& model,
                                      std::span<const PreparedGraph> batch,
                                      std::span<const double> coefficients);

/// Gradient of sum_i q[label_i] * w_i * loss_i.
ModelState backward(const ModelState& model, std::span<const PreparedGraph> batch,
                    std::span<const double> sample_weights,
                    std::span<const double> group_weights);

ModelState sgd_step(const ModelState& model, const ModelState& gradient,
                    double learning_rate);

}  // namespace robust_shift
