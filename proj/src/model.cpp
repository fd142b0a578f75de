// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#include "robust_shift/model.hpp"

#include <cmath>
#include <string>

#include "robust_shift/errors.hpp"
#include "robust_shift/rng.hpp"

namespace robust_shift {
namespace {

std::string dims(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

Layer init_layer(int in_dim, int out_dim, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  Layer layer{Matrix(out_dim, in_dim), Vector(out_dim)};
  for (int r = 0; r < out_dim; ++r) {
    for (int c = 0; c < in_dim; ++c) layer.weight(r, c) = rng.uniform(-bound, bound);
  }
  for (int r = 0; r < out_dim; ++r) layer.bias(r) = rng.uniform(-bound, bound);
  return layer;
}

// Z = M W^T + 1 b^T
Matrix affine_rows(const Matrix& m, const Layer& layer) {
  Matrix z = m * layer.weight.transpose();
  z.rowwise() += layer.bias.transpose();
  return z;
}

template <typename Fn>
void for_each_layer(ModelState& model, Fn&& fn) {
  for (auto& l : model.layers) fn(l);
  fn(model.head);
}

template <typename Fn>
void for_each_layer(const ModelState& model, Fn&& fn) {
  for (const auto& l : model.layers) fn(l);
  fn(model.head);
}

}  // namespace

int ModelState::input_dim() const {
  return layers.empty() ? head.in_dim() : layers.front().in_dim();
}

int ModelState::embedding_dim() const { return head.in_dim(); }

std::size_t ModelState::num_parameters() const {
  std::size_t n = 0;
  for_each_layer(*this, [&](const Layer& l) {
    n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  });
  return n;
}

Vector ModelState::flatten() const {
  Vector flat(static_cast<Eigen::Index>(num_parameters()));
  Eigen::Index at = 0;
  for_each_layer(*this, [&](const Layer& l) {
    flat.segment(at, l.weight.size()) = l.weight.reshaped();
    at += l.weight.size();
    flat.segment(at, l.bias.size()) = l.bias;
    at += l.bias.size();
  });
  return flat;
}

void ModelState::assign(const Vector& flat) {
  if (flat.size() != static_cast<Eigen::Index>(num_parameters())) {
    throw ShapeError("flat parameter vector has " + std::to_string(flat.size()) +
                     " entries, model has " + std::to_string(num_parameters()));
  }
  Eigen::Index at = 0;
  for_each_layer(*this, [&](Layer& l) {
    l.weight.reshaped() = flat.segment(at, l.weight.size());
    at += l.weight.size();
    l.bias = flat.segment(at, l.bias.size());
    at += l.bias.size();
  });
}

double ModelState::norm() const {
  double sq = 0.0;
  for_each_layer(*this, [&](const Layer& l) {
    sq += l.weight.squaredNorm() + l.bias.squaredNorm();
  });
  return std::sqrt(sq);
}

bool ModelState::all_finite() const {
  bool ok = true;
  for_each_layer(*this, [&](const Layer& l) {
    ok = ok && l.weight.allFinite() && l.bias.allFinite();
  });
  return ok;
}

ModelState ModelState::zeros_like() const {
  ModelState out = *this;
  for_each_layer(out, [](Layer& l) {
    l.weight.setZero();
    l.bias.setZero();
  });
  return out;
}

ModelState& ModelState::add_scaled(const ModelState& other, double scale) {
  if (other.layers.size() != layers.size()) throw ShapeError("layer count mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weight += scale * other.layers[i].weight;
    layers[i].bias += scale * other.layers[i].bias;
  }
  head.weight += scale * other.head.weight;
  head.bias += scale * other.head.bias;
  return *this;
}

ModelState init_model(int input_dim, int embedding_dim, int num_layers,
                      int num_classes, std::uint64_t seed) {
  if (input_dim < 1 || num_classes < 1 || num_layers < 0 ||
      (num_layers > 0 && embedding_dim < 1)) {
    throw ShapeError("invalid model dimensions");
  }
  Rng rng(child_seed(seed, 0x6d6f64656cULL));
  ModelState model;
  int in = input_dim;
  for (int l = 0; l < num_layers; ++l) {
    model.layers.push_back(init_layer(in, embedding_dim, rng));
    in = embedding_dim;
  }
  model.head = init_layer(in, num_classes, rng);
  return model;
}

void check_shapes(const ModelState& model, int input_dim) {
  int in = input_dim;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const Layer& layer = model.layers[l];
    if (layer.in_dim() != in || layer.bias.size() != layer.weight.rows()) {
      throw ShapeError("layer " + std::to_string(l) + " is " +
                       dims(layer.weight.rows(), layer.weight.cols()) +
                       " but receives width " + std::to_string(in));
    }
    in = layer.out_dim();
  }
  if (model.head.in_dim() != in || model.head.bias.size() != model.head.weight.rows()) {
    throw ShapeError("head is " + dims(model.head.weight.rows(), model.head.weight.cols()) +
                     " but receives width " + std::to_string(in));
  }
}

Matrix aggregate_layer(const Matrix& features, const std::vector<Edge>& edges,
                       const Layer& layer) {
  if (features.cols() != layer.in_dim()) {
    throw ShapeError("features are " + dims(features.rows(), features.cols()) +
                     " but layer expects width " + std::to_string(layer.in_dim()));
  }
  if (layer.bias.size() != layer.weight.rows()) throw ShapeError("bias length mismatch");
  const Matrix agg = mean_aggregation_matrix(static_cast<int>(features.rows()), edges);
  return affine_rows(agg * features, layer).cwiseMax(0.0);
}

Vector readout(const Matrix& nodes) {
  if (nodes.rows() < 1) throw InvalidInput("readout of an empty graph");
  return nodes.colwise().mean().transpose();
}

ForwardTrace forward_trace(const ModelState& model, const PreparedGraph& graph) {
  if (graph.features.rows() < 1) throw InvalidInput("forward on an empty graph");
  check_shapes(model, static_cast<int>(graph.features.cols()));
  ForwardTrace trace;
  const auto n_layers = model.layers.size();
  trace.aggregated.reserve(n_layers);
  trace.pre_activation.reserve(n_layers);
  Matrix h = graph.features;
  for (std::size_t l = 0; l < n_layers; ++l) {
    trace.aggregated.push_back(l == 0 && graph.aggregated_input.size() > 0
                                   ? graph.aggregated_input
                                   : Matrix(graph.aggregation * h));
    trace.pre_activation.push_back(affine_rows(trace.aggregated.back(), model.layers[l]));
    h = trace.pre_activation.back().cwiseMax(0.0);
  }
  trace.embedding = readout(h);
  trace.final_nodes = std::move(h);
  trace.logits = model.head.weight * trace.embedding + model.head.bias;
  return trace;
}

Vector forward(const ModelState& model, const PreparedGraph& graph) {
  return forward_trace(model, graph).logits;
}

Vector forward(const ModelState& model, const GraphInstance& graph) {
  return forward(model, prepare(graph));
}

Vector embed(const ModelState& model, const PreparedGraph& graph) {
  return forward_trace(model, graph).embedding;
}

double weighted_cross_entropy(const Vector& logits, int label, double sample_weight) {
  if (!logits.allFinite()) throw NumericError("non-finite logits");
  if (label < 0 || label >= logits.size()) throw DomainError("label outside logit range");
  if (!(sample_weight >= 0.0)) throw DomainError("negative sample weight");
  if (sample_weight == 0.0) return 0.0;
  const double max_logit = logits.maxCoeff();
  const double log_sum = max_logit + std::log((logits.array() - max_logit).exp().sum());
  return sample_weight * (log_sum - logits(label));
}

void accumulate_gradient(const ModelState& model, const PreparedGraph& graph,
                         const ForwardTrace& trace, double coefficient,
                         ModelState& grad) {
  if (coefficient == 0.0) return;
  // d loss / d logits = softmax - onehot
  Vector d_logits = (trace.logits.array() - trace.logits.maxCoeff()).exp();
  d_logits /= d_logits.sum();
  d_logits(graph.label) -= 1.0;
  d_logits *= coefficient;

  grad.head.weight.noalias() += d_logits * trace.embedding.transpose();
  grad.head.bias += d_logits;
  if (model.layers.empty()) return;

  const Vector d_embedding = model.head.weight.transpose() * d_logits;
  const auto n_nodes = static_cast<double>(trace.final_nodes.rows());
  // Readout spreads the embedding gradient evenly over nodes.
  Matrix d_nodes = (d_embedding / n_nodes).transpose().replicate(trace.final_nodes.rows(), 1);
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    const Matrix d_pre = (trace.pre_activation[l].array() > 0.0).select(d_nodes, 0.0);
    grad.layers[l].weight.noalias() += d_pre.transpose() * trace.aggregated[l];
    grad.layers[l].bias += d_pre.colwise().sum().transpose();
    if (l > 0) {
      d_nodes = graph.aggregation.transpose() * (d_pre * model.layers[l].weight);
    }
  }
}

LossAndGradient backward_coefficients(const ModelState& model,
                                      std::span<const PreparedGraph> batch,
                                      std::span<const double> coefficients) {
  if (batch.size() != coefficients.size()) {
    throw ShapeError("batch has " + std::to_string(batch.size()) + " graphs but " +
                     std::to_string(coefficients.size()) + " coefficients");
  }
  LossAndGradient out{0.0, model.zeros_like()};
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (coefficients[i] == 0.0) continue;
    const ForwardTrace trace = forward_trace(model, batch[i]);
    out.loss += coefficients[i] * weighted_cross_entropy(trace.logits, batch[i].label);
    accumulate_gradient(model, batch[i], trace, coefficients[i], out.gradient);
  }
  if (!out.gradient.all_finite()) throw NumericError("non-finite gradient");
  return out;
}

ModelState backward(const ModelState& model, std::span<const PreparedGraph> batch,
                    std::span<const double> sample_weights,
                    std::span<const double> group_weights) {
  if (batch.size() != sample_weights.size()) throw ShapeError("sample weight length mismatch");
  std::vector<double> coefficients(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const int g = batch[i].label;
    if (g < 0 || static_cast<std::size_t>(g) >= group_weights.size()) {
      throw ShapeError("group weight missing for class " + std::to_string(g));
    }
    if (sample_weights[i] < 0.0 || group_weights[g] < 0.0) {
      throw DomainError("negative weight");
    }
    coefficients[i] = group_weights[g] * sample_weights[i];
  }
  return backward_coefficients(model, batch, coefficients).gradient;
}

ModelState sgd_step(const ModelState& model, const ModelState& gradient,
                    double learning_rate) {
  ModelState out = model;
  out.add_scaled(gradient, -learning_rate);
  return out;
}

}  // namespace robust_shift
