// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "robust_shift/graph.hpp"

namespace robust_shift {

enum class BaselineMethod {
  kErm,
  kCvar,
  kChisq,
  kCvarDoro,
  kChisqDoro,
  kCvarGroup,
  kGroupDro,
  kGradientDro,
  kVariantDro,
};

const char* baseline_name(BaselineMethod method);
/// Returns false if `name` is not a baseline.
bool parse_baseline(const std::string& name, BaselineMethod& out);

struct BaselineSpec {
  BaselineMethod method = BaselineMethod::kErm;
  double alpha_cvar = 0.5;
  double eps_doro = 0.1;
  double rho_chisq = 0.5;
  double eta_group = 0.01;
  double lambda_var = 1.0;
};

void validate(const BaselineSpec& spec);

double erm_batch_loss(std::span<const double> losses);

/// Indices of the k largest losses; ties go to the lower index.
std::vector<std::size_t> top_k_indices(std::span<const double> losses, std::size_t k);

/// Mean of the ceil(alpha n) largest losses.
double cvar_loss(std::span<const double> losses, double alpha);

/// Per-sample coefficients whose dot product with the losses is cvar_loss.
std::vector<double> cvar_coefficients(std::span<const double> losses, double alpha);

/// Worst-case weights (mean 1) over the chi-square ball
/// { w : w >= 0, mean(w) = 1, (1/2n) sum (w_i - 1)^2 <= rho }.
/// w_i is proportional to (loss_i - eta)_+ with eta found by bisection.
/// When rho exceeds the largest reachable divergence the weight sits on
/// the maximal losses; all-equal losses give uniform weights.
std::vector<double> chisq_weights(std::span<const double> losses, double rho);

/// (1/2n) sum (w_i - 1)^2 for mean-1 weights.
double chisq_of_weights(std::span<const double> weights);

/// Indices kept after dropping the floor(eps n) largest losses, ascending.
/// Ties at the cut drop the lowest index first.
std::vector<std::size_t> doro_filter(std::span<const double> losses, double eps);

/// Exponentiated-gradient ascent: q'_i proportional to q_i exp(eta l_i).
Vector group_dro_update(const Vector& q, const Vector& group_losses, double eta);

double cvar_group_loss(std::span<const double> group_losses, double alpha);

/// q_i proportional to the group gradient norm; uniform when all are zero.
Vector gradient_dro_weights(std::span<const double> group_gradient_norms);

/// mean(l) + lambda * population variance(l)
double variant_dro_loss(std::span<const double> group_losses, double lambda_var);

/// d variant_dro_loss / d l_g
std::vector<double> variant_dro_gradient(std::span<const double> group_losses,
                                         double lambda_var);

}  // namespace robust_shift
