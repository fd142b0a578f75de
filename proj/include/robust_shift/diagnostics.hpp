// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "robust_shift/model.hpp"
#include "robust_shift/nnr.hpp"

namespace robust_shift {

/// max over test rows of the distance to the nearest train row.
double coverage_radius(const Matrix& train_embeddings, const Matrix& test_embeddings);

/// Fraction of rows whose true-class logit fails to beat every other logit
/// by more than gamma. Rows of `logits` are samples.
double margin_loss(const Matrix& logits, std::span<const int> labels, double gamma);
double margin_loss(const ModelState& model, std::span<const PreparedGraph> graphs,
                   double gamma);

struct NearSets {
  std::vector<std::vector<int>> members;  // per train row: test rows within gamma
  int min_size = 0;
  int max_size = 0;
  double mean_size = 0.0;
  int empty_count = 0;
  int covered_test = 0;            // test rows inside at least one set
  double mean_multiplicity = 0.0;  // sets per covered test row
};

NearSets near_sets(const Matrix& train_embeddings, const Matrix& test_embeddings,
                   double gamma);

struct ClassMeans {
  std::vector<Vector> means;
  std::vector<int> counts;  // 0 marks a class absent from the split
  bool present(int c) const { return counts[c] > 0; }
};

ClassMeans class_means(const Matrix& embeddings, std::span<const int> labels,
                       int num_classes);

/// sqrt of the mean squared per-coordinate deviation from the class mean.
double pooled_sigma(const Matrix& embeddings, std::span<const int> labels,
                    const ClassMeans& means);

struct PairTerms {
  int c = 0;
  int c_prime = 0;
  double term1 = 0.0;
  double term2 = 0.0;
  double term3 = 0.0;
  long count = 0;  // (i, j) pairs averaged
};

struct BoundTerms {
  double term1 = 0.0;
  double term2 = 0.0;
  double term3 = 0.0;
  std::vector<PairTerms> per_pair;
  std::vector<std::pair<int, int>> skipped_pairs;
};

/// Three-term decomposition of the environment-shift bound, averaged over
/// train samples i, test samples j, and classes c' != c with c = y_i:
///   T1 = (w_j g_j - w_i g_i) . (mu_c' - mu_c) / sigma^2
///   T2 = (w_j^2 f(mu^test) - w_i^2 f(mu^train)) / (2 sigma^2)
///   T3 = (w_j^2 - w_i^2) (|mu_c|^2 - |mu_c'|^2) / (2 sigma^2)
/// with f(mu) = |mu_c|^2 - |mu_c'|^2; mu without a split tag is the train
/// mean. Pairs with a class missing from either split are skipped.
BoundTerms bound_terms(const Matrix& train_embeddings, std::span<const int> train_labels,
                       const Matrix& test_embeddings, std::span<const double> train_weights,
                       std::span<const double> test_weights, const ClassMeans& train_means,
                       const ClassMeans& test_means, double sigma);

struct MarginPoint {
  double gamma = 0.0;
  double train = 0.0;
  double test = 0.0;
};

struct BoundReport {
  double gamma_emb = 0.0;
  std::vector<MarginPoint> margin_losses;
  double term1 = 0.0;
  double term2 = 0.0;
  double term3 = 0.0;
  std::vector<PairTerms> per_pair_terms;
  std::vector<std::pair<int, int>> skipped_pairs;
  double sigma_est = 0.0;
  double sigma_used = 0.0;
  ClassMeans train_class_means;
  ClassMeans test_class_means;
  NearSets near;
  double mean_train_weight = 0.0;
  double mean_test_weight = 0.0;
};

/// Read-only: evaluates the model on both splits and assembles the report.
/// sigma_override <= 0 selects the pooled estimate.
BoundReport diagnose(const ModelState& model, std::span<const PreparedGraph> train,
                     std::span<const PreparedGraph> test, int num_classes,
                     const NnrConfig& nnr, std::span<const double> margins,
                     double sigma_override = 0.0);

}  // namespace robust_shift
