// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#include "robust_shift/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "robust_shift/errors.hpp"

namespace robust_shift {
namespace {

std::vector<int> labels_of(std::span<const PreparedGraph> graphs) {
  std::vector<int> out;
  out.reserve(graphs.size());
  for (const auto& g : graphs) out.push_back(g.label);
  return out;
}

}  // namespace

double coverage_radius(const Matrix& train_embeddings, const Matrix& test_embeddings) {
  if (train_embeddings.rows() == 0 || test_embeddings.rows() == 0) {
    throw InvalidInput("coverage radius needs nonempty train and test sets");
  }
  if (train_embeddings.cols() != test_embeddings.cols()) throw ShapeError("embedding width mismatch");
  double radius = 0.0;
  for (Eigen::Index j = 0; j < test_embeddings.rows(); ++j) {
    const double nearest =
        (train_embeddings.rowwise() - test_embeddings.row(j)).rowwise().squaredNorm().minCoeff();
    radius = std::max(radius, nearest);
  }
  return std::sqrt(radius);
}

double margin_loss(const Matrix& logits, std::span<const int> labels, double gamma) {
  if (!(gamma >= 0.0)) throw DomainError("margin must be >= 0");
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) throw ShapeError("logit/label mismatch");
  if (logits.rows() == 0) return 0.0;
  long violations = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[i];
    double best_other = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      if (c != y) best_other = std::max(best_other, logits(i, c));
    }
    if (logits(i, y) <= gamma + best_other) ++violations;
  }
  return static_cast<double>(violations) / static_cast<double>(logits.rows());
}

double margin_loss(const ModelState& model, std::span<const PreparedGraph> graphs,
                   double gamma) {
  Matrix logits(static_cast<Eigen::Index>(graphs.size()), model.num_classes());
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    logits.row(static_cast<Eigen::Index>(i)) = forward(model, graphs[i]).transpose();
  }
  const auto labels = labels_of(graphs);
  return margin_loss(logits, labels, gamma);
}

NearSets near_sets(const Matrix& train_embeddings, const Matrix& test_embeddings,
                   double gamma) {
  if (!(gamma >= 0.0)) throw DomainError("near-set radius must be >= 0");
  if (train_embeddings.cols() != test_embeddings.cols() && train_embeddings.rows() > 0 &&
      test_embeddings.rows() > 0) {
    throw ShapeError("embedding width mismatch");
  }
  NearSets out;
  out.members.resize(train_embeddings.rows());
  std::vector<int> multiplicity(test_embeddings.rows(), 0);
  for (Eigen::Index i = 0; i < train_embeddings.rows(); ++i) {
    for (Eigen::Index j = 0; j < test_embeddings.rows(); ++j) {
      if ((train_embeddings.row(i) - test_embeddings.row(j)).norm() <= gamma) {
        out.members[i].push_back(static_cast<int>(j));
        ++multiplicity[j];
      }
    }
  }
  if (!out.members.empty()) {
    out.min_size = std::numeric_limits<int>::max();
    long total = 0;
    for (const auto& m : out.members) {
      const int s = static_cast<int>(m.size());
      out.min_size = std::min(out.min_size, s);
      out.max_size = std::max(out.max_size, s);
      total += s;
      if (s == 0) ++out.empty_count;
    }
    out.mean_size = static_cast<double>(total) / static_cast<double>(out.members.size());
    long covered_sum = 0;
    for (int m : multiplicity) {
      if (m > 0) {
        ++out.covered_test;
        covered_sum += m;
      }
    }
    out.mean_multiplicity =
        out.covered_test > 0 ? static_cast<double>(covered_sum) / out.covered_test : 0.0;
  }
  return out;
}

ClassMeans class_means(const Matrix& embeddings, std::span<const int> labels,
                       int num_classes) {
  if (static_cast<std::size_t>(embeddings.rows()) != labels.size()) {
    throw ShapeError("embedding/label count mismatch");
  }
  ClassMeans out;
  out.means.assign(num_classes, Vector::Zero(embeddings.cols()));
  out.counts.assign(num_classes, 0);
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= num_classes) throw DomainError("label outside class range");
    out.means[y] += embeddings.row(i).transpose();
    ++out.counts[y];
  }
  for (int c = 0; c < num_classes; ++c) {
    if (out.counts[c] > 0) out.means[c] /= out.counts[c];
  }
  return out;
}

double pooled_sigma(const Matrix& embeddings, std::span<const int> labels,
                    const ClassMeans& means) {
  if (embeddings.rows() == 0 || embeddings.cols() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    total += (embeddings.row(i).transpose() - means.means[labels[i]]).squaredNorm();
  }
  return std::sqrt(total / static_cast<double>(embeddings.rows() * embeddings.cols()));
}

BoundTerms bound_terms(const Matrix& train_embeddings, std::span<const int> train_labels,
                       const Matrix& test_embeddings, std::span<const double> train_weights,
                       std::span<const double> test_weights, const ClassMeans& train_means,
                       const ClassMeans& test_means, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("sigma must be > 0");
  const auto n_tr = train_embeddings.rows();
  const auto n_te = test_embeddings.rows();
  if (static_cast<std::size_t>(n_tr) != train_labels.size() ||
      static_cast<std::size_t>(n_tr) != train_weights.size() ||
      static_cast<std::size_t>(n_te) != test_weights.size()) {
    throw ShapeError("bound inputs have inconsistent lengths");
  }
  const int num_classes = static_cast<int>(train_means.means.size());
  if (static_cast<int>(test_means.means.size()) != num_classes) {
    throw ShapeError("class mean tables disagree on class count");
  }
  BoundTerms out;
  if (n_tr == 0 || n_te == 0) return out;

  const double inv_s2 = 1.0 / (sigma * sigma);
  std::vector<double> sq_train(num_classes), sq_test(num_classes);
  for (int c = 0; c < num_classes; ++c) {
    sq_train[c] = train_means.means[c].squaredNorm();
    sq_test[c] = test_means.means[c].squaredNorm();
  }
  auto valid = [&](int c, int cp) {
    return train_means.present(c) && train_means.present(cp) && test_means.present(c) &&
           test_means.present(cp);
  };
  for (int c = 0; c < num_classes; ++c) {
    for (int cp = 0; cp < num_classes; ++cp) {
      if (c != cp && !valid(c, cp)) out.skipped_pairs.emplace_back(c, cp);
    }
  }

  Vector mean_wg_test = Vector::Zero(test_embeddings.cols());
  double mean_w2_test = 0.0;
  for (Eigen::Index j = 0; j < n_te; ++j) {
    mean_wg_test += test_weights[j] * test_embeddings.row(j).transpose();
    mean_w2_test += test_weights[j] * test_weights[j];
  }
  mean_wg_test /= static_cast<double>(n_te);
  mean_w2_test /= static_cast<double>(n_te);

  std::vector<PairTerms> table(static_cast<std::size_t>(num_classes * num_classes));
  for (int c = 0; c < num_classes; ++c) {
    for (int cp = 0; cp < num_classes; ++cp) {
      table[c * num_classes + cp].c = c;
      table[c * num_classes + cp].c_prime = cp;
    }
  }
  double t1 = 0.0, t2 = 0.0, t3 = 0.0;
  long triples = 0;
  for (Eigen::Index i = 0; i < n_tr; ++i) {
    const int c = train_labels[i];
    const double wi = train_weights[i];
    const Vector wg_diff = mean_wg_test - wi * train_embeddings.row(i).transpose();
    for (int cp = 0; cp < num_classes; ++cp) {
      if (cp == c || !valid(c, cp)) continue;
      const double a =
          inv_s2 * wg_diff.dot(train_means.means[cp] - train_means.means[c]);
      const double b = 0.5 * inv_s2 *
                       (mean_w2_test * (sq_test[c] - sq_test[cp]) -
                        wi * wi * (sq_train[c] - sq_train[cp]));
      const double d = 0.5 * inv_s2 * (mean_w2_test - wi * wi) * (sq_train[c] - sq_train[cp]);
      PairTerms& cell = table[c * num_classes + cp];
      cell.term1 += a;
      cell.term2 += b;
      cell.term3 += d;
      cell.count += n_te;
      t1 += a;
      t2 += b;
      t3 += d;
      ++triples;
    }
  }
  if (triples > 0) {
    out.term1 = t1 / static_cast<double>(triples);
    out.term2 = t2 / static_cast<double>(triples);
    out.term3 = t3 / static_cast<double>(triples);
  }
  for (auto& cell : table) {
    if (cell.count == 0) continue;
    const double rows = static_cast<double>(cell.count / n_te);
    cell.term1 /= rows;
    cell.term2 /= rows;
    cell.term3 /= rows;
    out.per_pair.push_back(cell);
  }
  return out;
}

BoundReport diagnose(const ModelState& model, std::span<const PreparedGraph> train,
                     std::span<const PreparedGraph> test, int num_classes,
                     const NnrConfig& nnr, std::span<const double> margins,
                     double sigma_override) {
  if (train.empty() || test.empty()) throw InvalidInput("diagnostics need train and test samples");
  const Matrix train_emb = compute_embeddings(model, train);
  const Matrix test_emb = compute_embeddings(model, test);
  const auto train_labels = labels_of(train);
  const auto test_labels = labels_of(test);

  BoundReport report;
  report.gamma_emb = coverage_radius(train_emb, test_emb);
  for (double gamma : margins) {
    report.margin_losses.push_back(
        {gamma, margin_loss(model, train, gamma), margin_loss(model, test, gamma)});
  }
  report.train_class_means = class_means(train_emb, train_labels, num_classes);
  report.test_class_means = class_means(test_emb, test_labels, num_classes);
  report.sigma_est = pooled_sigma(train_emb, train_labels, report.train_class_means);
  report.sigma_used = sigma_override > 0.0 ? sigma_override : report.sigma_est;

  const Vector w_train = nnr_weights(train_emb, train_labels, nnr);
  const Vector w_test = nnr_weights_against(test_emb, test_labels, train_emb, train_labels, nnr);
  report.mean_train_weight = w_train.mean();
  report.mean_test_weight = w_test.mean();

  if (report.sigma_used > 0.0) {
    const std::vector<double> wt(w_train.data(), w_train.data() + w_train.size());
    const std::vector<double> we(w_test.data(), w_test.data() + w_test.size());
    BoundTerms terms = bound_terms(train_emb, train_labels, test_emb, wt, we,
                                   report.train_class_means, report.test_class_means,
                                   report.sigma_used);
    report.term1 = terms.term1;
    report.term2 = terms.term2;
    report.term3 = terms.term3;
    report.per_pair_terms = std::move(terms.per_pair);
    report.skipped_pairs = std::move(terms.skipped_pairs);
  }
  report.near = near_sets(train_emb, test_emb, report.gamma_emb);
  return report;
}

}  // namespace robust_shift
