// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <vector>

#include "robust_shift/cmo.hpp"
#include "robust_shift/errors.hpp"
#include "robust_shift/rng.hpp"

using namespace robust_shift;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

ClassMeanStats random_stats(Rng& rng, int groups, int dim) {
  ClassMeanStats stats(groups, dim);
  for (int g = 0; g < groups; ++g) {
    Vector m(dim);
    for (int d = 0; d < dim; ++d) m(d) = rng.normal();
    stats.set_mean(g, m);
  }
  return stats;
}

Vector random_simplex(Rng& rng, int n) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = 0.1 + rng.uniform();
  return v / v.sum();
}

CmoState make_state(const Vector& q, const Vector& p, double lambda1, double lambda2,
                    double k = 1.0, double eta = 0.1) {
  CmoConfig cfg;
  cfg.k = k;
  cfg.lambda1 = lambda1;
  cfg.lambda2 = lambda2;
  cfg.eta_q = eta;
  cfg.rho1 = 0.3;
  cfg.rho2 = 0.7;
  CmoState s = CmoState::initial(p, cfg);
  s.weights.q = q;
  return s;
}

PreparedGraph tiny_graph(Rng& rng, int label) {
  GraphInstance g;
  g.label = label;
  g.nodes = Matrix(3, 2);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 2; ++c) g.nodes(r, c) = rng.normal();
  g.edges = {{0, 1}, {1, 2}};
  return prepare(g);
}

}  // namespace

TEST_CASE("group_risk") {
  CHECK(group_risk(vec({1.5, 1.5, 1.5}), vec({1, 1, 1}) / 3.0) == doctest::Approx(1.5));
  CHECK(group_risk(vec({0.3, 4.0, 2.0}), vec({0, 1, 0})) == doctest::Approx(4.0));
  CHECK(group_risk(vec({1, 2}), vec({0.2, 0.8})) == doctest::Approx(1.8));
  CHECK_THROWS_AS(group_risk(vec({1, 2, 3}), vec({0.5, 0.5})), ShapeError);
}

TEST_CASE("mean separation penalty") {
  ClassMeanStats zero(3, 2);
  CHECK(mean_separation_penalty(zero, vec({0.2, 0.3, 0.5})) == 0.0);

  ClassMeanStats scaled(2, 2);
  scaled.set_mean(0, vec({1, 1}));
  scaled.set_mean(1, vec({2, 2}));
  CHECK(mean_separation_penalty(scaled, vec({2.0 / 3.0, 1.0 / 3.0})) == doctest::Approx(0.0));

  ClassMeanStats axes(2, 2);
  axes.set_mean(0, vec({1, 0}));
  axes.set_mean(1, vec({0, 1}));
  CHECK(mean_separation_penalty(axes, vec({0.5, 0.5})) == doctest::Approx(0.5));

  Rng rng(6);
  const ClassMeanStats stats = random_stats(rng, 4, 3);
  const Vector q = random_simplex(rng, 4);
  const Vector g = mean_separation_gradient(stats, q);
  for (int i = 0; i < 4; ++i) {
    Vector up = q, down = q;
    up(i) += 1e-6;
    down(i) -= 1e-6;
    const double numeric =
        (mean_separation_penalty(stats, up) - mean_separation_penalty(stats, down)) / 2e-6;
    CHECK(numeric == doctest::Approx(g(i)).epsilon(1e-6));
  }
}

TEST_CASE("class mean statistics") {
  ClassMeanStats stats(2, 2);
  CHECK_FALSE(stats.observed(0));
  stats.update(0, vec({4, 4}), 3, 0.9);
  CHECK(stats.mean(0).isApprox(vec({4, 4})));
  stats.update(0, vec({0, 0}), 2, 0.9);
  CHECK(stats.mean(0).isApprox(vec({3.6, 3.6})));
  CHECK(stats.count(0) == 5);
  stats.update(1, vec({1, 1}), 0, 0.9);
  CHECK_FALSE(stats.observed(1));
}

TEST_CASE("group loss tracker fills absent groups") {
  GroupLossTracker tracker(3, 0.5);
  const Vector first = tracker.resolve(vec({1.0, 3.0, 0.0}), {true, true, false});
  CHECK(first.isApprox(vec({1.0, 3.0, 2.0})));
  const Vector second = tracker.resolve(vec({0.0, 5.0, 0.0}), {false, true, false});
  CHECK(second(0) == doctest::Approx(1.0));
  CHECK(second(1) == doctest::Approx(5.0));
  CHECK(second(2) == doctest::Approx(5.0));
}

TEST_CASE("lagrangian") {
  Rng rng(10);
  const ClassMeanStats stats = random_stats(rng, 3, 2);
  const Vector losses = vec({0.4, 1.1, 0.7});
  const Vector p = vec({0.5, 0.3, 0.2});
  const Vector q = vec({0.2, 0.5, 0.3});

  CHECK(lagrangian(make_state(q, p, 0.0, 0.0), losses, stats) ==
        doctest::Approx(group_risk(losses, q)));

  const CmoState at_prior = make_state(p, p, 0.2, 0.05);
  CHECK(lagrangian(at_prior, losses, ClassMeanStats(3, 2)) ==
        doctest::Approx(group_risk(losses, p) + 0.2 * 0.3 + 0.05 * 0.7));

  for (double k : {1.0, 2.0}) {
    const CmoState s = make_state(q, p, 0.2, 0.05, k);
    double sep = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j)
        sep += (q(i) * stats.mean(i) - q(j) * stats.mean(j)).squaredNorm();
    double div = 0.0;
    for (int i = 0; i < 3; ++i) div += p(i) * cressie_read_f(k, q(i) / p(i));
    const double expected = q.dot(losses) - 0.2 * (div - 0.3) - 0.05 * (sep - 0.7);
    CHECK(std::abs(lagrangian(s, losses, stats) - expected) < 1e-12);
  }
}

TEST_CASE("q gradient of the lagrangian") {
  Rng rng(13);
  const ClassMeanStats stats = random_stats(rng, 4, 3);
  const Vector losses = vec({0.3, 0.9, 1.4, 0.2});
  const Vector p = random_simplex(rng, 4);
  const Vector q = random_simplex(rng, 4);

  CHECK(grad_q_lagrangian(make_state(q, p, 0.0, 0.0), losses, stats).isApprox(losses));
  CHECK(grad_q_lagrangian(make_state(p, p, 0.5, 0.0), losses, stats).isApprox(losses));

  for (double k : {1.0, 2.0}) {
    const CmoState s = make_state(q, p, 0.3, 0.1, k);
    const Vector g = grad_q_lagrangian(s, losses, stats);
    for (int i = 0; i < 4; ++i) {
      CmoState up = s, down = s;
      up.weights.q(i) += 1e-6;
      down.weights.q(i) -= 1e-6;
      const double numeric =
          (lagrangian(up, losses, stats) - lagrangian(down, losses, stats)) / 2e-6;
      CHECK(std::abs(numeric - g(i)) < 1e-6);
    }
  }
}

TEST_CASE("cmo_update_q") {
  const Vector half = vec({0.5, 0.5});
  const ClassMeanStats stats(2, 1);

  const CmoState frozen = make_state(vec({0.3, 0.7}), half, 0.1, 0.1, 1.0, 0.0);
  CHECK(cmo_update_q(frozen, vec({5, 1}), stats).weights.q == frozen.weights.q);

  const CmoState uniform = make_state(half, half, 0.0, 0.0);
  CHECK(cmo_update_q(uniform, vec({1.3, 1.3}), stats).weights.q.isApprox(half));

  const CmoState s = make_state(half, half, 0.0, 0.0, 1.0, 0.1);
  CHECK(cmo_update_q(s, vec({2, 1}), stats).weights.q.isApprox(vec({0.55, 0.45})));

  Rng rng(1);
  CmoState walk = make_state(vec({0.25, 0.25, 0.25, 0.25}), vec({0.4, 0.3, 0.2, 0.1}), 0.05,
                             0.0, 2.0, 0.5);
  walk.config.hard_ball = true;
  walk.config.rho1 = 0.05;
  for (int t = 0; t < 100; ++t) {
    Vector losses(4);
    for (int i = 0; i < 4; ++i) losses(i) = rng.uniform(0.0, 3.0);
    walk = cmo_update_q(walk, losses, ClassMeanStats(4, 1));
    CHECK(walk.weights.q.minCoeff() >= 0.0);
    CHECK(std::abs(walk.weights.q.sum() - 1.0) < 1e-9);
    CHECK(divergence(walk.weights.q, walk.weights.p, 2.0) <= 0.05 + 1e-8);
  }
}

TEST_CASE("config validation") {
  CmoConfig cfg;
  CHECK_NOTHROW(validate(cfg));
  cfg.k = 0.5;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = CmoConfig{};
  cfg.rho1 = 0.0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = CmoConfig{};
  cfg.ema_decay = 1.0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
}

TEST_CASE("theta objective") {
  Rng rng(31);
  const ModelState model = init_model(2, 4, 1, 3, 77);
  std::vector<PreparedGraph> batch;
  const std::vector<int> labels = {0, 0, 1, 2, 2, 2};
  for (int y : labels) batch.push_back(tiny_graph(rng, y));
  const std::vector<double> w = {1.0, 0.5, 0.8, 1.0, 0.2, 0.9};

  SUBCASE("matches a direct summation") {
    const Vector q = vec({0.5, 0.2, 0.3});
    const auto out = cmo_objective_for_theta(model, batch, q, w);
    std::vector<double> sum(3, 0.0);
    std::vector<int> count(3, 0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      sum[labels[i]] += w[i] * weighted_cross_entropy(forward(model, batch[i]), labels[i]);
      ++count[labels[i]];
    }
    double expected = 0.0;
    for (int g = 0; g < 3; ++g) {
      CHECK(out.group_mean_losses(g) == doctest::Approx(sum[g] / count[g]));
      expected += q(g) * sum[g] / count[g];
    }
    CHECK(out.loss == doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("uniform q and unit weights average per-group means") {
    const std::vector<double> ones(batch.size(), 1.0);
    const auto out = cmo_objective_for_theta(model, batch, Vector::Constant(3, 1.0 / 3.0), ones);
    CHECK(out.loss == doctest::Approx(out.group_mean_losses.mean()));
  }
  SUBCASE("one-hot q ignores the other groups") {
    const Vector q = vec({0, 1, 0});
    const auto out = cmo_objective_for_theta(model, batch, q, w);
    const std::vector<PreparedGraph> only = {batch[2]};
    const std::vector<double> only_w = {w[2]};
    const auto solo = cmo_objective_for_theta(model, only, q, only_w);
    CHECK(out.loss == doctest::Approx(solo.loss));
    CHECK((out.gradient.flatten() - solo.gradient.flatten()).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("absent groups are flagged") {
    const std::vector<PreparedGraph> part = {batch[0], batch[1]};
    const std::vector<double> pw = {1.0, 1.0};
    const auto out = cmo_objective_for_theta(model, part, vec({0.4, 0.3, 0.3}), pw);
    CHECK(out.present == std::vector<bool>{true, false, false});
    CHECK(out.group_mean_losses(1) == 0.0);
  }
  SUBCASE("length mismatch") {
    const std::vector<double> short_w = {1.0};
    CHECK_THROWS_AS(cmo_objective_for_theta(model, batch, vec({0.4, 0.3, 0.3}), short_w),
                    ShapeError);
  }
}
