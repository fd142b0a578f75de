// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "robust_shift/graph.hpp"

namespace robust_shift {

/// Clamp applied to q_i before log(q_i / p_i) in the KL gradient.
inline constexpr double kLogClamp = 1e-12;

/// A point q on the probability simplex together with its prior p.
struct GroupWeights {
  Vector q;
  Vector p;

  int size() const { return static_cast<int>(q.size()); }
  /// Uniform q with the given prior.
  static GroupWeights uniform(const Vector& prior);
};

/// Throws DomainError unless q, p have equal length, are nonnegative, sum to
/// 1 within 1e-9, and p is strictly positive.
void validate(const GroupWeights& weights);

/// Cressie-Read generator (t^k - k t + k - 1) / (k (k - 1)); for k == 1 the
/// limit t ln t - t + 1 with 0 ln 0 = 0. Zero at t == 1 for every k.
double cressie_read_f(double k, double t);

/// First derivative of cressie_read_f in t: (t^(k-1) - 1)/(k - 1), or ln t.
double cressie_read_f_prime(double k, double t);

/// sum_i p_i f_k(q_i / p_i). k == 1 is KL(q || p), k == 2 is chi^2(q, p) / 2.
double divergence(const Vector& q, const Vector& p, double k);

/// d divergence / d q_i = f_k'(q_i / p_i). For k == 1, q_i is clamped at
/// kLogClamp.
Vector divergence_gradient(const Vector& q, const Vector& p, double k);

/// Euclidean projection onto {q : q >= 0, sum q = 1} by sort and threshold.
Vector project_simplex(const Vector& v);

/// Pulls q back along the segment towards p until divergence(q', p) <= rho.
/// Returns q itself when already feasible; otherwise (1 - s) p + s q with the
/// largest feasible s, located by bisection to 1e-10.
Vector project_divergence_ball(const Vector& q, const Vector& p, double k, double rho);

}  // namespace robust_shift
