// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <vector>

#include "robust_shift/errors.hpp"
#include "robust_shift/model.hpp"
#include "robust_shift/rng.hpp"

using namespace robust_shift;

namespace {

GraphInstance make_graph(Matrix nodes, std::vector<Edge> edges, int label = 0) {
  GraphInstance g;
  g.nodes = std::move(nodes);
  g.edges = std::move(edges);
  g.label = label;
  return g;
}

GraphInstance random_graph(Rng& rng, int n, int dim, int classes) {
  Matrix x(n, dim);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < dim; ++c) x(r, c) = rng.normal();
  std::vector<Edge> edges;
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      if (rng.bernoulli(0.4)) edges.emplace_back(a, b);
  return make_graph(x, edges, static_cast<int>(rng.below(classes)));
}

Layer identity_layer(int d) {
  return Layer{Matrix::Identity(d, d), Vector::Zero(d)};
}

// Mean over {v} and its neighbours, affine map, ReLU, one node at a time.
Matrix brute_layer(const Matrix& x, const std::vector<Edge>& edges, const Layer& layer) {
  const int n = static_cast<int>(x.rows());
  std::vector<std::vector<int>> adj(n);
  for (auto [a, b] : edges) {
    if (a == b) continue;
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  Matrix out(n, layer.out_dim());
  for (int v = 0; v < n; ++v) {
    Vector mean = x.row(v).transpose();
    for (int u : adj[v]) mean += x.row(u).transpose();
    mean /= static_cast<double>(adj[v].size() + 1);
    out.row(v) = (layer.weight * mean + layer.bias).cwiseMax(0.0).transpose();
  }
  return out;
}

Vector brute_forward(const ModelState& m, const GraphInstance& g) {
  Matrix h = g.nodes;
  for (const auto& layer : m.layers) h = brute_layer(h, g.edges, layer);
  const Vector pooled = h.colwise().mean().transpose();
  return m.head.weight * pooled + m.head.bias;
}

}  // namespace

TEST_CASE("aggregate_layer on hand-built graphs") {
  SUBCASE("isolated node with identity map keeps nonnegative features") {
    Matrix x(1, 3);
    x << 0.5, 2.0, 0.0;
    CHECK(aggregate_layer(x, {}, identity_layer(3)) == x);
  }
  SUBCASE("two joined nodes average to (1,1)") {
    Matrix x(2, 2);
    x << 2, 0, 0, 2;
    const Matrix out = aggregate_layer(x, {{0, 1}}, identity_layer(2));
    CHECK(out(0, 0) == doctest::Approx(1.0));
    CHECK(out(0, 1) == doctest::Approx(1.0));
    CHECK(out(1, 0) == doctest::Approx(1.0));
    CHECK(out(1, 1) == doctest::Approx(1.0));
  }
  SUBCASE("random 5-node graph matches a per-node loop") {
    Rng rng(7);
    for (int t = 0; t < 20; ++t) {
      const GraphInstance g = random_graph(rng, 5, 4, 2);
      const ModelState m = init_model(4, 6, 1, 2, 100 + t);
      const Matrix fast = aggregate_layer(g.nodes, g.edges, m.layers[0]);
      CHECK((fast - brute_layer(g.nodes, g.edges, m.layers[0])).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("dimension mismatch is a shape error") {
    CHECK_THROWS_AS(aggregate_layer(Matrix::Zero(2, 3), {}, identity_layer(2)), ShapeError);
  }
  SUBCASE("duplicate edges do not double-count a neighbour") {
    CHECK(mean_aggregation_matrix(2, {{0, 1}, {1, 0}}) == mean_aggregation_matrix(2, {{0, 1}}));
  }
}

TEST_CASE("readout is a column mean") {
  Matrix single(1, 2);
  single << 3, -1;
  CHECK(readout(single) == Vector(single.row(0).transpose()));
  Matrix two(2, 2);
  two << 0, 0, 2, 2;
  CHECK(readout(two).isApprox(Vector::Ones(2)));
  Rng rng(11);
  Matrix seven(7, 5);
  for (int r = 0; r < 7; ++r)
    for (int c = 0; c < 5; ++c) seven(r, c) = rng.normal();
  const Vector got = readout(seven);
  for (int c = 0; c < 5; ++c) {
    double s = 0.0;
    for (int r = 0; r < 7; ++r) s += seven(r, c);
    CHECK(std::abs(got(c) - s / 7.0) < 1e-12);
  }
  CHECK_THROWS_AS(readout(Matrix(0, 3)), InvalidInput);
}

TEST_CASE("forward composition") {
  SUBCASE("zero parameters give zero logits") {
    ModelState m = init_model(3, 4, 2, 3, 1).zeros_like();
    Rng rng(2);
    CHECK(forward(m, random_graph(rng, 4, 3, 3)).isZero());
  }
  SUBCASE("no layers and an identity head return the mean node feature") {
    ModelState m;
    m.head = identity_layer(3);
    Rng rng(3);
    const GraphInstance g = random_graph(rng, 5, 3, 3);
    CHECK(forward(m, g).isApprox(Vector(g.nodes.colwise().mean().transpose())));
  }
  SUBCASE("random model agrees with an independent implementation") {
    Rng rng(5);
    for (int t = 0; t < 20; ++t) {
      const ModelState m = init_model(4, 5, 3, 3, 50 + t);
      const GraphInstance g = random_graph(rng, 2 + t % 6, 4, 3);
      CHECK((forward(m, g) - brute_forward(m, g)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("node relabelling leaves logits unchanged") {
    Rng rng(9);
    const ModelState m = init_model(3, 8, 3, 4, 17);
    const GraphInstance g = random_graph(rng, 6, 3, 4);
    const std::vector<int> perm = {3, 0, 5, 1, 4, 2};
    GraphInstance h = g;
    for (int v = 0; v < 6; ++v) h.nodes.row(perm[v]) = g.nodes.row(v);
    h.edges.clear();
    for (auto [a, b] : g.edges) h.edges.emplace_back(perm[a], perm[b]);
    CHECK((forward(m, g) - forward(m, h)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("wrong feature width is rejected") {
    const ModelState m = init_model(3, 4, 1, 2, 1);
    CHECK_THROWS_AS(forward(m, make_graph(Matrix::Zero(2, 5), {})), ShapeError);
  }
}

TEST_CASE("init_model shapes and bounds") {
  const ModelState m = init_model(16, 32, 3, 6, 42);
  REQUIRE(m.num_layers() == 3);
  CHECK(m.input_dim() == 16);
  CHECK(m.embedding_dim() == 32);
  CHECK(m.num_classes() == 6);
  CHECK(m.layers[0].weight.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(16.0));
  CHECK(m.layers[1].weight.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(32.0));
  CHECK(m.num_parameters() == static_cast<std::size_t>(m.flatten().size()));
  CHECK(init_model(16, 32, 3, 6, 42) == m);
  CHECK_FALSE(init_model(16, 32, 3, 6, 43) == m);
  CHECK_THROWS_AS(init_model(0, 32, 3, 6, 1), ShapeError);
}

TEST_CASE("flatten and assign round trip") {
  ModelState m = init_model(3, 4, 2, 2, 8);
  const Vector flat = m.flatten();
  ModelState other = m.zeros_like();
  other.assign(flat);
  CHECK(other == m);
  CHECK_THROWS_AS(other.assign(Vector::Zero(flat.size() + 1)), ShapeError);
}

TEST_CASE("weighted cross-entropy") {
  CHECK(weighted_cross_entropy(Vector::Zero(6), 2) == doctest::Approx(std::log(6.0)).epsilon(1e-12));
  Vector logits(2);
  logits << 2.0, 0.5;
  CHECK(weighted_cross_entropy(logits, 0, 0.0) == 0.0);
  const double expected = 0.5 * -std::log(std::exp(2.0) / (std::exp(2.0) + std::exp(0.5)));
  CHECK(weighted_cross_entropy(logits, 0, 0.5) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(weighted_cross_entropy(logits, 1, 3.0) ==
        doctest::Approx(3.0 * weighted_cross_entropy(logits, 1, 1.0)).epsilon(1e-12));
  Vector huge(2);
  huge << 1000.0, -1000.0;
  CHECK(std::isfinite(weighted_cross_entropy(huge, 1)));
  Vector bad(2);
  bad << 0.0, std::nan("");
  CHECK_THROWS_AS(weighted_cross_entropy(bad, 0), NumericError);
  CHECK_THROWS_AS(weighted_cross_entropy(logits, 0, -1.0), DomainError);
}

TEST_CASE("backward") {
  Rng rng(21);
  const ModelState m = init_model(3, 4, 2, 3, 5);
  std::vector<PreparedGraph> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(prepare(random_graph(rng, 3 + i, 3, 3)));
  const std::vector<double> q = {0.2, 0.3, 0.5};

  SUBCASE("zero sample weights give a zero gradient") {
    const std::vector<double> w(4, 0.0);
    CHECK(backward(m, batch, w, q).flatten().isZero());
  }
  SUBCASE("single linear layer matches the softmax-regression gradient") {
    ModelState lin;
    lin.head = Layer{Matrix::Random(3, 2), Vector::Random(3)};
    Matrix x(1, 2);
    x << 0.7, -1.2;
    const PreparedGraph g = prepare(make_graph(x, {}, 1));
    const std::vector<PreparedGraph> one = {g};
    const std::vector<double> w = {1.0};
    const std::vector<double> uq = {1.0, 1.0, 1.0};
    const ModelState grad = backward(lin, one, w, uq);
    Vector z = lin.head.weight * x.row(0).transpose() + lin.head.bias;
    Vector p = (z.array() - z.maxCoeff()).exp();
    p /= p.sum();
    p(1) -= 1.0;
    CHECK((grad.head.bias - p).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((grad.head.weight - p * x.row(0)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("matches central finite differences") {
    const std::vector<double> w = {0.3, 1.0, 0.7, 0.1};
    const Vector analytic = backward(m, batch, w, q).flatten();
    auto objective = [&](const ModelState& s) {
      double total = 0.0;
      for (int i = 0; i < 4; ++i)
        total += q[batch[i].label] * w[i] * weighted_cross_entropy(forward(s, batch[i]), batch[i].label);
      return total;
    };
    Vector theta = m.flatten();
    ModelState probe = m;
    double worst = 0.0;
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
      const double saved = theta(k);
      theta(k) = saved + 1e-5;
      probe.assign(theta);
      const double up = objective(probe);
      theta(k) = saved - 1e-5;
      probe.assign(theta);
      const double down = objective(probe);
      theta(k) = saved;
      const double numeric = (up - down) / 2e-5;
      worst = std::max(worst, std::abs(numeric - analytic(k)) /
                                  std::max({std::abs(numeric), std::abs(analytic(k)), 1e-6}));
    }
    CHECK(worst < 1e-4);
  }
  SUBCASE("bitwise deterministic") {
    const std::vector<double> w = {1, 1, 1, 1};
    CHECK(backward(m, batch, w, q) == backward(m, batch, w, q));
  }
  SUBCASE("input errors") {
    const std::vector<double> short_w = {1.0};
    CHECK_THROWS_AS(backward(m, batch, short_w, q), ShapeError);
    const std::vector<double> neg = {1.0, -1.0, 1.0, 1.0};
    CHECK_THROWS_AS(backward(m, batch, neg, q), DomainError);
  }
}

TEST_CASE("sgd_step") {
  const ModelState m = init_model(2, 3, 1, 2, 4);
  CHECK(sgd_step(m, m.zeros_like(), 0.1) == m);
  CHECK(sgd_step(m, m, 0.0) == m);

  // One step on f(theta) = (theta - 3)^2 with a single bias parameter.
  ModelState scalar;
  scalar.head = Layer{Matrix::Zero(1, 0), Vector::Constant(1, 0.0)};
  ModelState grad = scalar.zeros_like();
  grad.head.bias(0) = 2.0 * (scalar.head.bias(0) - 3.0);
  const ModelState next = sgd_step(scalar, grad, 0.1);
  auto f = [](double t) { return (t - 3.0) * (t - 3.0); };
  CHECK(f(next.head.bias(0)) < f(scalar.head.bias(0)));
}
