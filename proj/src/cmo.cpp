// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#include "robust_shift/cmo.hpp"

#include "robust_shift/errors.hpp"

namespace robust_shift {

void validate(const CmoConfig& config) {
  if (!(config.k >= 1.0)) throw ConfigError("cmo.k must be >= 1");
  if (!(config.eta_q >= 0.0)) throw ConfigError("cmo.eta_q must be >= 0");
  if (!(config.lambda1 >= 0.0) || !(config.lambda2 >= 0.0)) {
    throw ConfigError("cmo.lambda1 and cmo.lambda2 must be >= 0");
  }
  if (!(config.rho1 > 0.0) || !(config.rho2 > 0.0)) {
    throw ConfigError("cmo.rho1 and cmo.rho2 must be > 0");
  }
  if (!(config.ema_decay >= 0.0 && config.ema_decay < 1.0)) {
    throw ConfigError("cmo.ema_decay must lie in [0, 1)");
  }
}

CmoState CmoState::initial(const Vector& prior, const CmoConfig& config) {
  CmoState state{GroupWeights::uniform(prior), config};
  validate(state.weights);
  return state;
}

ClassMeanStats::ClassMeanStats(int num_groups, int dim)
    : means_(num_groups, Vector::Zero(dim)), counts_(num_groups, 0) {}

void ClassMeanStats::update(int group, const Vector& batch_mean, long batch_count,
                            double decay) {
  if (batch_count <= 0) return;
  if (counts_[group] == 0) {
    means_[group] = batch_mean;
  } else {
    means_[group] = decay * means_[group] + (1.0 - decay) * batch_mean;
  }
  counts_[group] += batch_count;
}

void ClassMeanStats::set_mean(int group, Vector mean, long count) {
  means_[group] = std::move(mean);
  counts_[group] = count;
}

GroupLossTracker::GroupLossTracker(int num_groups, double decay)
    : running_(Vector::Zero(num_groups)), seen_(num_groups, false), decay_(decay) {}

Vector GroupLossTracker::resolve(const Vector& batch_means, const std::vector<bool>& present) {
  double present_sum = 0.0;
  int present_count = 0;
  for (Eigen::Index g = 0; g < running_.size(); ++g) {
    if (!present[g]) continue;
    running_(g) = seen_[g] ? decay_ * running_(g) + (1.0 - decay_) * batch_means(g)
                           : batch_means(g);
    seen_[g] = true;
    present_sum += batch_means(g);
    ++present_count;
  }
  const double fallback = present_count > 0 ? present_sum / present_count : 0.0;
  Vector out(running_.size());
  for (Eigen::Index g = 0; g < running_.size(); ++g) {
    if (present[g]) {
      out(g) = batch_means(g);
    } else {
      out(g) = seen_[g] ? running_(g) : fallback;
    }
  }
  return out;
}

double group_risk(const Vector& per_group_mean_losses, const Vector& q) {
  if (per_group_mean_losses.size() != q.size()) throw ShapeError("loss/q length mismatch");
  if (!per_group_mean_losses.allFinite()) throw NumericError("non-finite group loss");
  return q.dot(per_group_mean_losses);
}

double mean_separation_penalty(const ClassMeanStats& stats, const Vector& q) {
  const int m = stats.num_groups();
  if (q.size() != m) throw ShapeError("stats/q length mismatch");
  double total = 0.0;
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      total += (q(i) * stats.mean(i) - q(j) * stats.mean(j)).squaredNorm();
    }
  }
  return total;
}

Vector mean_separation_gradient(const ClassMeanStats& stats, const Vector& q) {
  const int m = stats.num_groups();
  if (q.size() != m) throw ShapeError("stats/q length mismatch");
  Vector grad = Vector::Zero(m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      if (j == i) continue;
      grad(i) += 2.0 * (q(i) * stats.mean(i) - q(j) * stats.mean(j)).dot(stats.mean(i));
    }
  }
  return grad;
}

double lagrangian(const CmoState& state, const Vector& per_group_mean_losses,
                  const ClassMeanStats& stats) {
  const auto& [q, p] = state.weights;
  const auto& cfg = state.config;
  return group_risk(per_group_mean_losses, q) -
         cfg.lambda1 * (divergence(q, p, cfg.k) - cfg.rho1) -
         cfg.lambda2 * (mean_separation_penalty(stats, q) - cfg.rho2);
}

Vector grad_q_lagrangian(const CmoState& state, const Vector& per_group_mean_losses,
                         const ClassMeanStats& stats) {
  const auto& [q, p] = state.weights;
  const auto& cfg = state.config;
  if (per_group_mean_losses.size() != q.size()) throw ShapeError("loss/q length mismatch");
  Vector grad = per_group_mean_losses;
  if (cfg.lambda1 != 0.0) grad -= cfg.lambda1 * divergence_gradient(q, p, cfg.k);
  if (cfg.lambda2 != 0.0) grad -= cfg.lambda2 * mean_separation_gradient(stats, q);
  return grad;
}

CmoState cmo_update_q(const CmoState& state, const Vector& per_group_mean_losses,
                      const ClassMeanStats& stats) {
  CmoState next = state;
  if (state.config.eta_q == 0.0) return next;
  const Vector ascent = state.weights.q +
                        state.config.eta_q * grad_q_lagrangian(state, per_group_mean_losses, stats);
  next.weights.q = project_simplex(ascent);
  if (state.config.hard_ball) {
    next.weights.q = project_divergence_ball(next.weights.q, state.weights.p, state.config.k,
                                             state.config.rho1);
  }
  return next;
}

std::vector<double> group_average_coefficients(std::span<const int> labels,
                                               std::span<const double> sample_weights,
                                               const Vector& q) {
  if (labels.size() != sample_weights.size()) throw ShapeError("label/weight length mismatch");
  std::vector<int> counts(q.size(), 0);
  for (int y : labels) {
    if (y < 0 || y >= q.size()) throw ShapeError("label outside group range");
    ++counts[y];
  }
  std::vector<double> coefficients(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    coefficients[i] = q(labels[i]) * sample_weights[i] / counts[labels[i]];
  }
  return coefficients;
}

CmoThetaObjective cmo_objective_for_theta(const ModelState& model,
                                          std::span<const PreparedGraph> batch,
                                          const Vector& q,
                                          std::span<const double> nnr_weights) {
  if (batch.size() != nnr_weights.size()) throw ShapeError("batch/weight length mismatch");
  const int m = static_cast<int>(q.size());
  std::vector<int> labels;
  labels.reserve(batch.size());
  for (const auto& g : batch) labels.push_back(g.label);
  const auto coefficients = group_average_coefficients(labels, nnr_weights, q);

  CmoThetaObjective out;
  out.gradient = model.zeros_like();
  out.group_mean_losses = Vector::Zero(m);
  out.present.assign(m, false);
  out.group_embedding_means.assign(m, Vector::Zero(model.embedding_dim()));
  std::vector<int> counts(m, 0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const ForwardTrace trace = forward_trace(model, batch[i]);
    const double raw = weighted_cross_entropy(trace.logits, labels[i]);
    const int g = labels[i];
    out.group_mean_losses(g) += nnr_weights[i] * raw;
    out.group_embedding_means[g] += trace.embedding;
    ++counts[g];
    out.loss += coefficients[i] * raw;
    accumulate_gradient(model, batch[i], trace, coefficients[i], out.gradient);
  }
  for (int g = 0; g < m; ++g) {
    if (counts[g] == 0) continue;
    out.present[g] = true;
    out.group_mean_losses(g) /= counts[g];
    out.group_embedding_means[g] /= counts[g];
  }
  return out;
}

}  // namespace robust_shift
