// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#include "robust_shift/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "robust_shift/errors.hpp"

namespace robust_shift {
namespace {

void check_order(double k) {
  if (!(k >= 1.0)) throw DomainError("Cressie-Read order k must be >= 1");
}

void check_pair(const Vector& q, const Vector& p) {
  if (q.size() != p.size()) {
    throw ShapeError("q has " + std::to_string(q.size()) + " entries, p has " +
                     std::to_string(p.size()));
  }
}

}  // namespace

GroupWeights GroupWeights::uniform(const Vector& prior) {
  const auto m = prior.size();
  return {Vector::Constant(m, 1.0 / static_cast<double>(m)), prior};
}

void validate(const GroupWeights& weights) {
  check_pair(weights.q, weights.p);
  if (weights.q.size() == 0) throw DomainError("empty group weights");
  if ((weights.q.array() < 0.0).any()) throw DomainError("q has a negative entry");
  if ((weights.p.array() <= 0.0).any()) throw DomainError("p must be strictly positive");
  if (std::abs(weights.q.sum() - 1.0) > 1e-9) throw DomainError("q does not sum to 1");
  if (std::abs(weights.p.sum() - 1.0) > 1e-9) throw DomainError("p does not sum to 1");
}

double cressie_read_f(double k, double t) {
  check_order(k);
  if (!(t >= 0.0)) throw DomainError("Cressie-Read argument must be >= 0");
  if (k == 1.0) return (t > 0.0 ? t * std::log(t) : 0.0) - t + 1.0;
  return (std::pow(t, k) - k * t + k - 1.0) / (k * (k - 1.0));
}

double cressie_read_f_prime(double k, double t) {
  check_order(k);
  if (!(t >= 0.0)) throw DomainError("Cressie-Read argument must be >= 0");
  if (k == 1.0) return std::log(t);
  return (std::pow(t, k - 1.0) - 1.0) / (k - 1.0);
}

double divergence(const Vector& q, const Vector& p, double k) {
  check_pair(q, p);
  double total = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (q(i) < 0.0 || p(i) < 0.0) throw DomainError("negative probability");
    if (p(i) == 0.0) {
      if (q(i) > 0.0) throw DomainError("q puts mass where p has none");
      continue;
    }
    total += p(i) * cressie_read_f(k, q(i) / p(i));
  }
  return total;
}

Vector divergence_gradient(const Vector& q, const Vector& p, double k) {
  check_pair(q, p);
  Vector grad(q.size());
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (!(p(i) > 0.0)) throw DomainError("p must be strictly positive");
    const double qi = k == 1.0 ? std::max(q(i), kLogClamp) : std::max(q(i), 0.0);
    grad(i) = cressie_read_f_prime(k, qi / p(i));
  }
  return grad;
}

Vector project_simplex(const Vector& v) {
  if (v.size() == 0) throw ShapeError("projection of an empty vector");
  if (!v.allFinite()) throw NumericError("projection of a non-finite vector");
  std::vector<double> sorted(v.data(), v.data() + v.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double threshold = 0.0;
  for (std::size_t j = 0; j < sorted.size(); ++j) {
    cumulative += sorted[j];
    const double candidate = (cumulative - 1.0) / static_cast<double>(j + 1);
    if (sorted[j] - candidate > 0.0) threshold = candidate;
  }
  return (v.array() - threshold).cwiseMax(0.0);
}

Vector project_divergence_ball(const Vector& q, const Vector& p, double k, double rho) {
  if (!(rho > 0.0)) throw DomainError("ball radius must be > 0");
  if (divergence(q, p, k) <= rho) return q;
  double lo = 0.0;  // feasible
  double hi = 1.0;  // infeasible
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    if (divergence((1.0 - mid) * p + mid * q, p, k) <= rho) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return (1.0 - lo) * p + lo * q;
}

}  // namespace robust_shift
