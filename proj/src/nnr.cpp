// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#include "robust_shift/nnr.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "robust_shift/errors.hpp"

namespace robust_shift {
namespace {

double weight_from_counts(NeighborCount count, int class_size, const NnrConfig& config) {
  switch (config.mode) {
    case NnrMode::kNeighborFraction:
      if (count.total == 0) return config.fallback_weight;
      return static_cast<double>(count.same) / count.total;
    case NnrMode::kClassNormalized:
      if (count.total == 0 || class_size <= 1) return config.fallback_weight;
      return std::clamp(static_cast<double>(count.same) / (class_size - 1), 0.0, 1.0);
  }
  return config.fallback_weight;
}

}  // namespace

const char* nnr_mode_name(NnrMode mode) {
  return mode == NnrMode::kNeighborFraction ? "neighbor_fraction" : "class_normalized";
}

NnrMode parse_nnr_mode(const std::string& name) {
  if (name == "neighbor_fraction") return NnrMode::kNeighborFraction;
  if (name == "class_normalized") return NnrMode::kClassNormalized;
  throw ConfigError("unknown nnr.mode '" + name + "'");
}

void validate(const NnrConfig& config) {
  if (!(config.gamma > 0.0)) throw ConfigError("nnr.gamma must be > 0");
  if (config.refresh_every < 1) throw ConfigError("nnr.refresh_every must be >= 1");
  if (!(config.fallback_weight >= 0.0 && config.fallback_weight <= 1.0)) {
    throw ConfigError("nnr.fallback_weight must lie in [0, 1]");
  }
}

Matrix compute_embeddings(const ModelState& model, std::span<const PreparedGraph> graphs) {
  Matrix out(static_cast<Eigen::Index>(graphs.size()), model.embedding_dim());
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = embed(model, graphs[i]).transpose();
  }
  return out;
}

NeighborCount count_neighbors(int i, const Matrix& embeddings, std::span<const int> labels,
                              double gamma) {
  if (static_cast<std::size_t>(embeddings.rows()) != labels.size()) {
    throw ShapeError("embedding/label count mismatch");
  }
  if (i < 0 || i >= embeddings.rows()) throw ShapeError("sample index out of range");
  NeighborCount count;
  const auto row = embeddings.row(i);
  for (Eigen::Index j = 0; j < embeddings.rows(); ++j) {
    if (j == i) continue;
    if ((embeddings.row(j) - row).norm() <= gamma) {
      ++count.total;
      if (labels[j] == labels[i]) ++count.same;
    }
  }
  return count;
}

Vector nnr_weights(const Matrix& embeddings, std::span<const int> labels,
                   const NnrConfig& config) {
  validate(config);
  const auto n = embeddings.rows();
  if (static_cast<std::size_t>(n) != labels.size()) throw ShapeError("embedding/label count mismatch");
  std::map<int, int> class_size;
  for (int y : labels) ++class_size[y];

  // Symmetric pass over pairs i < j.
  std::vector<NeighborCount> counts(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if ((embeddings.row(j) - embeddings.row(i)).norm() > config.gamma) continue;
      ++counts[i].total;
      ++counts[j].total;
      if (labels[i] == labels[j]) {
        ++counts[i].same;
        ++counts[j].same;
      }
    }
  }
  Vector w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    w(i) = weight_from_counts(counts[i], class_size[labels[i]], config);
  }
  return w;
}

Vector nnr_weights_against(const Matrix& queries, std::span<const int> query_labels,
                           const Matrix& reference, std::span<const int> reference_labels,
                           const NnrConfig& config) {
  validate(config);
  if (static_cast<std::size_t>(queries.rows()) != query_labels.size() ||
      static_cast<std::size_t>(reference.rows()) != reference_labels.size()) {
    throw ShapeError("embedding/label count mismatch");
  }
  if (queries.cols() != reference.cols()) throw ShapeError("embedding width mismatch");
  std::map<int, int> class_size;
  for (int y : reference_labels) ++class_size[y];
  Vector w(queries.rows());
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    NeighborCount count;
    for (Eigen::Index j = 0; j < reference.rows(); ++j) {
      if ((reference.row(j) - queries.row(i)).norm() <= config.gamma) {
        ++count.total;
        if (reference_labels[j] == query_labels[i]) ++count.same;
      }
    }
    w(i) = weight_from_counts(count, class_size[query_labels[i]] + 1, config);
  }
  return w;
}

std::vector<double> apply_weights(std::span<const double> raw_losses,
                                  std::span<const double> weights) {
  if (raw_losses.size() != weights.size()) {
    throw ShapeError("loss vector has " + std::to_string(raw_losses.size()) +
                     " entries, weights have " + std::to_string(weights.size()));
  }
  std::vector<double> out(raw_losses.size());
  std::transform(raw_losses.begin(), raw_losses.end(), weights.begin(), out.begin(),
                 [](double l, double w) { return l * w; });
  return out;
}

bool refresh_schedule(int epoch, const NnrConfig& config) {
  return epoch == 0 || epoch % config.refresh_every == 0;
}

}  // namespace robust_shift
