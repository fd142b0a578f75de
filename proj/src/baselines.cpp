// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#include "robust_shift/baselines.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <utility>

#include "robust_shift/errors.hpp"

namespace robust_shift {
namespace {

constexpr std::array<std::pair<BaselineMethod, const char*>, 9> kNames = {{
    {BaselineMethod::kErm, "erm"},
    {BaselineMethod::kCvar, "cvar"},
    {BaselineMethod::kChisq, "chisq"},
    {BaselineMethod::kCvarDoro, "cvar_doro"},
    {BaselineMethod::kChisqDoro, "chisq_doro"},
    {BaselineMethod::kCvarGroup, "cvar_group"},
    {BaselineMethod::kGroupDro, "group_dro"},
    {BaselineMethod::kGradientDro, "gradient_dro"},
    {BaselineMethod::kVariantDro, "variant_dro"},
}};

std::size_t cvar_count(std::size_t n, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("CVaR alpha must lie in (0, 1]");
  if (n == 0) throw InvalidInput("CVaR of an empty batch");
  const double scaled = alpha * static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::ceil(scaled - 1e-12));
  return std::clamp<std::size_t>(k, 1, n);
}

std::vector<double> mean_one(const std::vector<double>& raw) {
  const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
  std::vector<double> w(raw.size());
  const auto n = static_cast<double>(raw.size());
  std::transform(raw.begin(), raw.end(), w.begin(), [&](double r) { return n * r / total; });
  return w;
}

std::vector<double> hinge_weights(std::span<const double> losses, double eta) {
  std::vector<double> raw(losses.size());
  std::transform(losses.begin(), losses.end(), raw.begin(),
                 [&](double l) { return std::max(l - eta, 0.0); });
  return mean_one(raw);
}

}  // namespace

const char* baseline_name(BaselineMethod method) {
  for (const auto& [m, name] : kNames) {
    if (m == method) return name;
  }
  return "?";
}

bool parse_baseline(const std::string& name, BaselineMethod& out) {
  for (const auto& [m, n] : kNames) {
    if (name == n) {
      out = m;
      return true;
    }
  }
  return false;
}

void validate(const BaselineSpec& spec) {
  if (!(spec.alpha_cvar > 0.0 && spec.alpha_cvar <= 1.0)) {
    throw ConfigError("baseline.alpha_cvar must lie in (0, 1]");
  }
  if (!(spec.eps_doro >= 0.0 && spec.eps_doro < 1.0)) {
    throw ConfigError("baseline.eps_doro must lie in [0, 1)");
  }
  if (!(spec.rho_chisq > 0.0)) throw ConfigError("baseline.rho_chisq must be > 0");
  if (!(spec.eta_group > 0.0)) throw ConfigError("baseline.eta_group must be > 0");
  if (!(spec.lambda_var >= 0.0)) throw ConfigError("baseline.lambda_var must be >= 0");
}

double erm_batch_loss(std::span<const double> losses) {
  if (losses.empty()) throw InvalidInput("empty batch");
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
}

std::vector<std::size_t> top_k_indices(std::span<const double> losses, std::size_t k) {
  std::vector<std::size_t> order(losses.size());
  std::iota(order.begin(), order.end(), 0);
  k = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (losses[a] != losses[b]) return losses[a] > losses[b];
                      return a < b;
                    });
  order.resize(k);
  return order;
}

double cvar_loss(std::span<const double> losses, double alpha) {
  const std::size_t k = cvar_count(losses.size(), alpha);
  std::vector<double> chosen;
  for (std::size_t i : top_k_indices(losses, k)) chosen.push_back(losses[i]);
  std::sort(chosen.begin(), chosen.end(), std::greater<>());
  double total = 0.0;
  for (double v : chosen) total += v;
  return total / static_cast<double>(k);
}

std::vector<double> cvar_coefficients(std::span<const double> losses, double alpha) {
  const std::size_t k = cvar_count(losses.size(), alpha);
  std::vector<double> c(losses.size(), 0.0);
  for (std::size_t i : top_k_indices(losses, k)) c[i] = 1.0 / static_cast<double>(k);
  return c;
}

double chisq_of_weights(std::span<const double> weights) {
  if (weights.empty()) return 0.0;
  double total = 0.0;
  for (double w : weights) total += (w - 1.0) * (w - 1.0);
  return 0.5 * total / static_cast<double>(weights.size());
}

std::vector<double> chisq_weights(std::span<const double> losses, double rho) {
  if (!(rho > 0.0)) throw DomainError("chi-square radius must be > 0");
  const std::size_t n = losses.size();
  if (n == 0) throw InvalidInput("empty batch");
  const auto [min_it, max_it] = std::minmax_element(losses.begin(), losses.end());
  const double lo_loss = *min_it;
  const double hi_loss = *max_it;
  std::vector<double> uniform(n, 1.0);
  if (hi_loss == lo_loss) return uniform;

  // Limit eta -> max loss: mass spread evenly over the maximal losses.
  std::vector<double> top(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) top[i] = losses[i] == hi_loss ? 1.0 : 0.0;
  const auto concentrated = mean_one(top);
  if (chisq_of_weights(concentrated) <= rho) return concentrated;

  // Divergence is increasing in eta; bracket from below.
  double spread = hi_loss - lo_loss;
  double eta_lo = lo_loss - spread;
  int expansions = 0;
  while (chisq_of_weights(hinge_weights(losses, eta_lo)) > rho) {
    if (++expansions > 200) return uniform;
    spread *= 2.0;
    eta_lo = lo_loss - spread;
  }
  double eta_hi = hi_loss;
  for (int it = 0; it < 200 && eta_hi - eta_lo > 1e-14 * (1.0 + std::abs(eta_hi)); ++it) {
    const double mid = 0.5 * (eta_lo + eta_hi);
    if (chisq_of_weights(hinge_weights(losses, mid)) <= rho) {
      eta_lo = mid;
    } else {
      eta_hi = mid;
    }
  }
  return hinge_weights(losses, eta_lo);
}

std::vector<std::size_t> doro_filter(std::span<const double> losses, double eps) {
  if (!(eps >= 0.0 && eps < 1.0)) throw DomainError("DORO eps must lie in [0, 1)");
  const auto drop = static_cast<std::size_t>(
      std::floor(eps * static_cast<double>(losses.size()) + 1e-12));
  std::vector<bool> dropped(losses.size(), false);
  for (std::size_t i : top_k_indices(losses, drop)) dropped[i] = true;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (!dropped[i]) kept.push_back(i);
  }
  return kept;
}

Vector group_dro_update(const Vector& q, const Vector& group_losses, double eta) {
  if (q.size() != group_losses.size()) throw ShapeError("q/loss length mismatch");
  if (!(eta >= 0.0)) throw DomainError("group step size must be >= 0");
  const Vector exponent = eta * group_losses;
  const double shift = exponent.maxCoeff();
  Vector next = q.array() * (exponent.array() - shift).exp();
  const double total = next.sum();
  if (!(total > 0.0)) throw NumericError("group weights collapsed to zero");
  return next / total;
}

double cvar_group_loss(std::span<const double> group_losses, double alpha) {
  return cvar_loss(group_losses, alpha);
}

Vector gradient_dro_weights(std::span<const double> group_gradient_norms) {
  const auto m = static_cast<Eigen::Index>(group_gradient_norms.size());
  if (m == 0) throw InvalidInput("no groups");
  Vector q(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!(group_gradient_norms[i] >= 0.0)) throw DomainError("negative gradient norm");
    q(i) = group_gradient_norms[i];
  }
  const double total = q.sum();
  if (total == 0.0) return Vector::Constant(m, 1.0 / static_cast<double>(m));
  return q / total;
}

double variant_dro_loss(std::span<const double> group_losses, double lambda_var) {
  if (group_losses.empty()) throw InvalidInput("no groups");
  const double n = static_cast<double>(group_losses.size());
  const double mean = std::accumulate(group_losses.begin(), group_losses.end(), 0.0) / n;
  double var = 0.0;
  for (double l : group_losses) var += (l - mean) * (l - mean);
  return mean + lambda_var * var / n;
}

std::vector<double> variant_dro_gradient(std::span<const double> group_losses,
                                         double lambda_var) {
  if (group_losses.empty()) throw InvalidInput("no groups");
  const double n = static_cast<double>(group_losses.size());
  const double mean = std::accumulate(group_losses.begin(), group_losses.end(), 0.0) / n;
  std::vector<double> grad(group_losses.size());
  for (std::size_t g = 0; g < group_losses.size(); ++g) {
    grad[g] = 1.0 / n + lambda_var * 2.0 * (group_losses[g] - mean) / n;
  }
  return grad;
}

}  // namespace robust_shift
