// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "robust_shift/graph.hpp"
#include "robust_shift/rng.hpp"

namespace robust_shift {

/// Synthetic benchmark knobs. Node features are [x_inv, x_spu] with
/// x_inv ~ N(mu_c, sigma^2 I) and x_spu ~ N(mu_{c'}^e, sigma^2 I), where
/// c' = c with probability beta and a uniformly drawn other class otherwise.
/// A fraction alpha of training labels is redrawn uniformly over all classes.
struct SynthConfig {
  int num_classes = 6;
  std::vector<int> train_counts = {3000, 3000, 300, 3000, 3000, 3000};
  int val_count = 1000;   // per class
  int test_count = 1000;  // per class
  int d_inv = 8;
  int d_spu = 8;
  double sigma = 48.0;
  double alpha = 0.0;
  double beta = 0.9;
  double class_spacing = 64.0;
  double spurious_spacing = 16.0;
  bool rotate_means = false;
  int num_train_envs = 2;  // env ids [0, n); the test env is id n
  int nodes_min = 4;
  int nodes_max = 8;
  double edge_prob = 0.3;
  std::uint64_t seed = 0;

  int feature_dim() const { return d_inv + d_spu; }
  int test_env() const { return num_train_envs; }
  int num_envs() const { return num_train_envs + 1; }
};

/// Throws ConfigError naming the first violated constraint.
void validate(const SynthConfig& config);

/// Means shared by every instance of one generated benchmark.
struct SynthMeans {
  std::vector<Vector> class_means;                 // [class]
  std::vector<std::vector<Vector>> spurious_means;  // [env][class]
};

/// C points in R^d with pairwise distance >= spacing. Axis-aligned mode
/// (d >= C, rotate false) returns spacing * e_c; rotate applies a random
/// orthogonal map; d < C falls back to rejection sampling.
std::vector<Vector> gen_class_means(int num_classes, int dim, double spacing, Rng& rng,
                                    bool rotate = false);

SynthMeans make_means(const SynthConfig& config);

GraphInstance sample_instance(int label, int env, const SynthConfig& config,
                              const SynthMeans& means, Rng& rng);

struct Dataset {
  int num_classes = 0;
  int feature_dim = 0;
  std::vector<GraphInstance> instances;

  std::vector<GraphInstance> split(Split which) const;
  std::vector<int> label_counts(Split which) const;
  bool operator==(const Dataset&) const = default;
};

/// Exact per-class counts; ids are sequential (train, then val, then test).
/// Each instance draws from its own child stream of config.seed. Label noise
/// is applied to the train split only.
Dataset generate_dataset(const SynthConfig& config);

/// JSONL: a header object, then one record per line with fields
/// id, split, env, label, noisy, nodes, edges in that order.
void write_dataset(const Dataset& dataset, std::ostream& out);
void save_dataset(const Dataset& dataset, const std::string& path);
Dataset read_dataset(std::istream& in);
Dataset load_dataset(const std::string& path);
std::string serialize(const Dataset& dataset);

}  // namespace robust_shift
