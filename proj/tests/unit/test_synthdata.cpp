// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "robust_shift/errors.hpp"
#include "robust_shift/synthdata.hpp"

using namespace robust_shift;

namespace {

SynthConfig small_config(std::uint64_t seed = 3) {
  SynthConfig cfg;
  cfg.num_classes = 3;
  cfg.train_counts = {12, 12, 4};
  cfg.val_count = 5;
  cfg.test_count = 5;
  cfg.d_inv = 3;
  cfg.d_spu = 2;
  cfg.seed = seed;
  return cfg;
}

double min_distance(const std::vector<Vector>& pts) {
  double best = 1e300;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) best = std::min(best, (pts[i] - pts[j]).norm());
  return best;
}

}  // namespace

TEST_CASE("class means") {
  Rng rng(1);
  const auto two = gen_class_means(2, 2, 2.0, rng);
  REQUIRE(two.size() == 2);
  CHECK(two[0].isApprox(Vector::Unit(2, 0) * 2.0));
  CHECK(two[1].isApprox(Vector::Unit(2, 1) * 2.0));

  const auto six = gen_class_means(6, 8, 5.0, rng, true);
  int pairs = 0;
  for (int i = 0; i < 6; ++i) {
    for (int j = i + 1; j < 6; ++j) {
      CHECK((six[i] - six[j]).norm() >= 5.0 - 1e-9);
      ++pairs;
    }
  }
  CHECK(pairs == 15);

  for (int dim : {1, 2, 3}) {
    const auto crowded = gen_class_means(5, dim, 1.5, rng);
    CHECK(min_distance(crowded) >= 1.5);
  }
  CHECK_THROWS_AS(gen_class_means(0, 2, 1.0, rng), ConfigError);
}

TEST_CASE("sample_instance") {
  SynthConfig cfg = small_config();
  const SynthMeans means = make_means(cfg);

  SUBCASE("no label noise without alpha") {
    Rng rng(4);
    for (int t = 0; t < 200; ++t) CHECK_FALSE(sample_instance(t % 3, 0, cfg, means, rng).noisy);
  }
  SUBCASE("zero variance with full correlation places nodes on the means") {
    cfg.sigma = 0.0;
    cfg.beta = 1.0;
    Rng rng(5);
    const GraphInstance g = sample_instance(1, 1, cfg, means, rng);
    for (int v = 0; v < g.num_nodes(); ++v) {
      CHECK(g.nodes.row(v).head(3).transpose() == means.class_means[1]);
      CHECK(g.nodes.row(v).tail(2).transpose() == means.spurious_means[1][1]);
    }
    CHECK(g.num_nodes() >= cfg.nodes_min);
    CHECK(g.num_nodes() <= cfg.nodes_max);
  }
  SUBCASE("noisy-flag rate follows the flip probability") {
    cfg.num_classes = 6;
    cfg.train_counts.assign(6, 1);
    cfg.alpha = 0.2;
    const SynthMeans m6 = make_means(cfg);
    Rng rng(6);
    const int n = 10000;
    int noisy = 0;
    for (int t = 0; t < n; ++t) noisy += sample_instance(t % 6, 0, cfg, m6, rng).noisy ? 1 : 0;
    const double p = 0.2 * 5.0 / 6.0;
    const double se = std::sqrt(p * (1.0 - p) / n);
    CHECK(std::abs(static_cast<double>(noisy) / n - p) <= 3.0 * se);
  }
  SUBCASE("invalid class or environment") {
    Rng rng(1);
    CHECK_THROWS_AS(sample_instance(3, 0, cfg, means, rng), DomainError);
    CHECK_THROWS_AS(sample_instance(0, 7, cfg, means, rng), DomainError);
  }
}

TEST_CASE("generate_dataset") {
  SUBCASE("default sizes") {
    const SynthConfig cfg;
    CHECK(std::accumulate(cfg.train_counts.begin(), cfg.train_counts.end(), 0) == 15300);
    CHECK(cfg.val_count * cfg.num_classes == 6000);
    CHECK(cfg.test_count * cfg.num_classes == 6000);
  }
  SUBCASE("split sizes and environments") {
    const SynthConfig cfg = small_config();
    const Dataset ds = generate_dataset(cfg);
    CHECK(ds.split(Split::kTrain).size() == 28);
    CHECK(ds.split(Split::kVal).size() == 15);
    CHECK(ds.split(Split::kTest).size() == 15);
    CHECK(ds.label_counts(Split::kTrain) == std::vector<int>{12, 12, 4});
    for (const auto& g : ds.split(Split::kTest)) CHECK(g.env == cfg.test_env());
    for (const auto& g : ds.split(Split::kTrain)) CHECK(g.env < cfg.num_train_envs);
  }
  SUBCASE("a zero count removes only that class") {
    SynthConfig cfg = small_config();
    const Dataset full = generate_dataset(cfg);
    cfg.train_counts = {12, 0, 4};
    const Dataset gap = generate_dataset(cfg);
    CHECK(gap.label_counts(Split::kTrain) == std::vector<int>{12, 0, 4});
    const auto a = full.split(Split::kTrain);
    const auto b = gap.split(Split::kTrain);
    for (int i = 0; i < 12; ++i) CHECK(a[i].nodes == b[i].nodes);
  }
  SUBCASE("noise touches only the train split") {
    SynthConfig cfg = small_config();
    cfg.alpha = 0.5;
    const Dataset ds = generate_dataset(cfg);
    for (const auto& g : ds.split(Split::kVal)) CHECK_FALSE(g.noisy);
    for (const auto& g : ds.split(Split::kTest)) CHECK_FALSE(g.noisy);
  }
  SUBCASE("same seed gives identical bytes") {
    CHECK(serialize(generate_dataset(small_config(9))) == serialize(generate_dataset(small_config(9))));
    CHECK(serialize(generate_dataset(small_config(9))) != serialize(generate_dataset(small_config(10))));
  }
  SUBCASE("config errors") {
    SynthConfig cfg = small_config();
    cfg.train_counts = {1, 2};
    CHECK_THROWS_AS(generate_dataset(cfg), ConfigError);
    cfg = small_config();
    cfg.alpha = 1.5;
    CHECK_THROWS_AS(generate_dataset(cfg), ConfigError);
  }
}

TEST_CASE("dataset serialization") {
  SUBCASE("empty dataset is a header line") {
    Dataset empty;
    empty.num_classes = 4;
    empty.feature_dim = 2;
    const std::string text = serialize(empty);
    CHECK(std::count(text.begin(), text.end(), '\n') == 1);
    std::istringstream in(text);
    CHECK(read_dataset(in) == empty);
  }
  SUBCASE("round trip") {
    const Dataset ds = generate_dataset(small_config());
    std::istringstream in(serialize(ds));
    CHECK(read_dataset(in) == ds);
  }
  SUBCASE("fixture file") {
    const Dataset ds = load_dataset(std::string(ROBUST_SHIFT_FIXTURES) + "/two_records.jsonl");
    CHECK(ds.num_classes == 3);
    CHECK(ds.feature_dim == 2);
    REQUIRE(ds.instances.size() == 2);
    const GraphInstance& a = ds.instances[0];
    CHECK(a.id == 7);
    CHECK(a.split == Split::kTrain);
    CHECK(a.env == 1);
    CHECK(a.label == 2);
    CHECK(a.noisy);
    CHECK(a.nodes(1, 1) == 3.25);
    CHECK(a.edges == std::vector<Edge>{{0, 1}});
    const GraphInstance& b = ds.instances[1];
    CHECK(b.split == Split::kTest);
    CHECK(b.num_nodes() == 1);
    CHECK(b.edges.empty());
  }
  SUBCASE("malformed records name their line") {
    const std::string header =
        R"({"format":"robust-shift-dataset","version":1,"num_classes":2,"feature_dim":1})";
    auto line_of = [](const std::string& text) -> std::size_t {
      std::istringstream in(text);
      try {
        read_dataset(in);
      } catch (const ParseError& e) {
        return e.line();
      }
      return 0;
    };
    const std::string good =
        R"({"id":0,"split":"val","env":0,"label":1,"noisy":false,"nodes":[[1]],"edges":[]})";
    CHECK(line_of(header + "\n" + good + "\n{broken\n") == 3);
    CHECK(line_of(header + "\n" + R"({"id":0,"split":"val","env":0,"label":5,"noisy":false,"nodes":[[1]],"edges":[]})") == 2);
    CHECK(line_of(header + "\n" + good + "\n" + R"({"id":1,"split":"val","env":0,"label":0,"noisy":false,"nodes":[[1,2]],"edges":[]})") == 3);
    CHECK(line_of(header + "\n" + R"({"id":0,"split":"dev","env":0,"label":0,"noisy":false,"nodes":[[1]],"edges":[]})") == 2);
    CHECK(line_of(good) == 1);
    CHECK(line_of(header + "\n" + good) == 0);
  }
}
