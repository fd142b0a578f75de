// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "robust_shift/divergence.hpp"
#include "robust_shift/model.hpp"

namespace robust_shift {

/// Hyperparameters of constrained mean optimization. Groups are classes.
struct CmoConfig {
  double k = 1.0;  // divergence order: 1 = KL, 2 = chi-square
  double eta_q = 0.01;
  double lambda1 = 0.01;
  double lambda2 = 1e-5;
  double rho1 = 1.0;
  double rho2 = 1.0;
  bool hard_ball = false;
  double ema_decay = 0.9;
};

void validate(const CmoConfig& config);

struct CmoState {
  GroupWeights weights;
  CmoConfig config;

  /// q uniform, p = prior.
  static CmoState initial(const Vector& prior, const CmoConfig& config);
};

/// Exponential moving averages of per-group readout embeddings.
class ClassMeanStats {
 public:
  ClassMeanStats() = default;
  ClassMeanStats(int num_groups, int dim);

  /// First observation of a group replaces the zero mean outright.
  void update(int group, const Vector& batch_mean, long batch_count, double decay);

  int num_groups() const { return static_cast<int>(means_.size()); }
  const Vector& mean(int group) const { return means_[group]; }
  long count(int group) const { return counts_[group]; }
  bool observed(int group) const { return counts_[group] > 0; }

  void set_mean(int group, Vector mean, long count = 1);

 private:
  std::vector<Vector> means_;
  std::vector<long> counts_;
};

/// Running per-group mean loss. Groups missing from a batch fall back to
/// their running average; never-seen groups to the mean of present groups.
class GroupLossTracker {
 public:
  explicit GroupLossTracker(int num_groups = 0, double decay = 0.9);

  /// present[g] marks groups with samples in the batch.
  Vector resolve(const Vector& batch_means, const std::vector<bool>& present);

 private:
  Vector running_;
  std::vector<bool> seen_;
  double decay_;
};

/// sum_i q_i * losses_i
double group_risk(const Vector& per_group_mean_losses, const Vector& q);

/// sum_{i<j} || q_i m_i - q_j m_j ||^2
double mean_separation_penalty(const ClassMeanStats& stats, const Vector& q);

/// d penalty / d q_i = sum_{j != i} 2 (q_i m_i - q_j m_j) . m_i
Vector mean_separation_gradient(const ClassMeanStats& stats, const Vector& q);

/// risk - lambda1 (D_k(q || p) - rho1) - lambda2 (penalty - rho2)
double lagrangian(const CmoState& state, const Vector& per_group_mean_losses,
                  const ClassMeanStats& stats);

Vector grad_q_lagrangian(const CmoState& state, const Vector& per_group_mean_losses,
                         const ClassMeanStats& stats);

/// Projected ascent: q <- proj_simplex(q + eta_q grad); in hard-ball mode the
/// result is also pulled into {D_k(q || p) <= rho1}.
CmoState cmo_update_q(const CmoState& state, const Vector& per_group_mean_losses,
                      const ClassMeanStats& stats);

/// Per-sample coefficients c_i = q_{y_i} w_i / n_{y_i} so that
/// sum_i c_i loss_i = sum_g q_g mean_{i in g}(w_i loss_i) over groups present.
std::vector<double> group_average_coefficients(std::span<const int> labels,
                                               std::span<const double> sample_weights,
                                               const Vector& q);

struct CmoThetaObjective {
  double loss = 0.0;
  ModelState gradient;
  Vector group_mean_losses;    // mean_{i in g}(w_i loss_i); 0 for absent groups
  std::vector<bool> present;   // group g has samples in the batch
  std::vector<Vector> group_embedding_means;
};

/// The theta-side objective sum_g q_g mean_{i in g}(w_i loss_i) and its gradient.
CmoThetaObjective cmo_objective_for_theta(const ModelState& model,
                                          std::span<const PreparedGraph> batch,
                                          const Vector& q,
                                          std::span<const double> nnr_weights);

}  // namespace robust_shift
