// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#include "robust_shift/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "robust_shift/baselines.hpp"
#include "robust_shift/cmo.hpp"
#include "robust_shift/errors.hpp"
#include "robust_shift/nnr.hpp"
#include "robust_shift/rng.hpp"

namespace robust_shift {
namespace {

constexpr std::uint64_t kStreamShuffle = 0x73687566ULL;

struct BatchForward {
  std::vector<const PreparedGraph*> graphs;
  std::vector<ForwardTrace> traces;
  std::vector<double> losses;  // raw cross-entropy
  std::vector<int> labels;
  std::vector<double> sample_weights;
};

struct GroupSummary {
  Vector mean_loss;      // weighted by sample weights
  Vector mean_raw_loss;  // unweighted
  std::vector<int> counts;
  std::vector<bool> present;
  std::vector<Vector> mean_embedding;
};

GroupSummary summarize(const BatchForward& batch, int num_groups, int emb_dim) {
  GroupSummary s{Vector::Zero(num_groups), Vector::Zero(num_groups),
                 std::vector<int>(num_groups, 0), std::vector<bool>(num_groups, false),
                 std::vector<Vector>(num_groups, Vector::Zero(emb_dim))};
  for (std::size_t i = 0; i < batch.labels.size(); ++i) {
    const int g = batch.labels[i];
    s.mean_loss(g) += batch.sample_weights[i] * batch.losses[i];
    s.mean_raw_loss(g) += batch.losses[i];
    s.mean_embedding[g] += batch.traces[i].embedding;
    ++s.counts[g];
  }
  for (int g = 0; g < num_groups; ++g) {
    if (s.counts[g] == 0) continue;
    s.present[g] = true;
    s.mean_loss(g) /= s.counts[g];
    s.mean_raw_loss(g) /= s.counts[g];
    s.mean_embedding[g] /= s.counts[g];
  }
  return s;
}

std::vector<int> present_groups(const GroupSummary& s) {
  std::vector<int> out;
  for (std::size_t g = 0; g < s.present.size(); ++g) {
    if (s.present[g]) out.push_back(static_cast<int>(g));
  }
  return out;
}

ModelState gradient_from(const ModelState& model, const BatchForward& batch,
                         std::span<const double> coefficients) {
  ModelState grad = model.zeros_like();
  for (std::size_t i = 0; i < batch.graphs.size(); ++i) {
    accumulate_gradient(model, *batch.graphs[i], batch.traces[i], coefficients[i], grad);
  }
  return grad;
}

/// Per-sample coefficients for sample-level baselines restricted to `kept`.
template <typename Rule>
std::vector<double> on_subset(const std::vector<double>& losses,
                              const std::vector<std::size_t>& kept, Rule rule) {
  std::vector<double> sub;
  sub.reserve(kept.size());
  for (std::size_t i : kept) sub.push_back(losses[i]);
  const std::vector<double> sub_coef = rule(sub);
  std::vector<double> coef(losses.size(), 0.0);
  for (std::size_t k = 0; k < kept.size(); ++k) coef[kept[k]] = sub_coef[k];
  return coef;
}

std::vector<double> chisq_coefficients(const std::vector<double>& losses, double rho) {
  auto w = chisq_weights(losses, rho);
  const double n = static_cast<double>(losses.size());
  for (double& x : w) x /= n;
  return w;
}

}  // namespace

TrainData make_train_data(const Dataset& dataset) {
  TrainData data;
  data.num_classes = dataset.num_classes;
  data.input_dim = dataset.feature_dim;
  data.train = prepare_all(dataset.split(Split::kTrain));
  data.val = prepare_all(dataset.split(Split::kVal));
  return data;
}

Vector label_prior(std::span<const PreparedGraph> train, int num_classes) {
  Vector counts = Vector::Zero(num_classes);
  for (const auto& g : train) counts(g.label) += 1.0;
  counts = counts.cwiseMax(1.0);
  return counts / counts.sum();
}

int minority_class(std::span<const PreparedGraph> train, int num_classes) {
  std::vector<int> counts(num_classes, 0);
  for (const auto& g : train) ++counts[g.label];
  return static_cast<int>(std::min_element(counts.begin(), counts.end()) - counts.begin());
}

int predict(const ModelState& model, const PreparedGraph& graph) {
  const Vector logits = forward(model, graph);
  int best = 0;
  for (Eigen::Index c = 1; c < logits.size(); ++c) {
    if (logits(c) > logits(best)) best = static_cast<int>(c);
  }
  return best;
}

EvalResult evaluate_predictions(std::span<const int> predictions, std::span<const int> labels,
                                int num_classes) {
  if (predictions.size() != labels.size()) throw ShapeError("prediction/label mismatch");
  if (labels.empty()) throw InvalidInput("evaluation on an empty split");
  EvalResult out;
  out.class_counts.assign(num_classes, 0);
  std::vector<int> correct(num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ++out.class_counts[labels[i]];
    if (predictions[i] == labels[i]) ++correct[labels[i]];
  }
  out.per_class_accuracy.assign(num_classes, std::numeric_limits<double>::quiet_NaN());
  double total = 0.0;
  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (out.class_counts[c] == 0) {
      out.absent_classes.push_back(c);
      continue;
    }
    out.per_class_accuracy[c] = 100.0 * correct[c] / out.class_counts[c];
    total += out.per_class_accuracy[c];
    ++present;
  }
  out.overall_accuracy = total / present;
  return out;
}

EvalResult evaluate(const ModelState& model, std::span<const PreparedGraph> graphs,
                    int num_classes) {
  std::vector<int> predictions, labels;
  predictions.reserve(graphs.size());
  labels.reserve(graphs.size());
  for (const auto& g : graphs) {
    predictions.push_back(predict(model, g));
    labels.push_back(g.label);
  }
  return evaluate_predictions(predictions, labels, num_classes);
}

TrainResult train(const TrainConfig& config, const TrainData& data, std::uint64_t seed) {
  validate(config);
  if (data.train.empty()) throw InvalidInput("training split is empty");
  const int num_classes = data.num_classes;
  const Method method = config.method;
  const auto baseline = as_baseline(method);
  const BaselineSpec& spec = config.baseline;

  TrainResult result;
  result.initial_model =
      init_model(data.input_dim, config.embedding_dim, config.num_layers, num_classes, seed);
  ModelState model = result.initial_model;
  const int emb_dim = model.embedding_dim();

  const Vector prior = label_prior(data.train, num_classes);
  CmoConfig cmo_config = config.cmo;
  cmo_config.k = cmo_order(method);
  CmoState cmo = CmoState::initial(prior, cmo_config);
  ClassMeanStats stats(num_classes, emb_dim);
  GroupLossTracker tracker(num_classes, cmo_config.ema_decay);
  Vector group_q = Vector::Constant(num_classes, 1.0 / num_classes);  // group_dro

  std::vector<int> train_labels;
  for (const auto& g : data.train) train_labels.push_back(g.label);
  std::vector<double> nnr_w(data.train.size(), 1.0);

  Rng shuffle_rng(child_seed(seed, kStreamShuffle));
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);

  double best_val = -1.0;
  result.selected_model = model;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (uses_nnr(method) && refresh_schedule(epoch, config.nnr)) {
      const Matrix emb = compute_embeddings(model, data.train);
      const Vector w = nnr_weights(emb, train_labels, config.nnr);
      nnr_w.assign(w.data(), w.data() + w.size());
      result.nnr_weights = w;
    }
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    double grad_norm_sum = 0.0;
    int batches = 0;
    Vector epoch_loss = Vector::Zero(num_classes);
    std::vector<int> epoch_count(num_classes, 0);

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      BatchForward batch;
      for (std::size_t k = start; k < stop; ++k) {
        const PreparedGraph& g = data.train[order[k]];
        batch.graphs.push_back(&g);
        batch.traces.push_back(forward_trace(model, g));
        const Vector& logits = batch.traces.back().logits;
        const double loss = logits.allFinite() ? weighted_cross_entropy(logits, g.label)
                                               : std::numeric_limits<double>::quiet_NaN();
        if (!std::isfinite(loss)) {
          throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) +
                                 ", sample " + std::to_string(order[k]));
        }
        batch.losses.push_back(loss);
        batch.labels.push_back(g.label);
        batch.sample_weights.push_back(nnr_w[order[k]]);
      }
      const std::size_t n = batch.graphs.size();
      const GroupSummary groups = summarize(batch, num_classes, emb_dim);
      for (int g = 0; g < num_classes; ++g) {
        epoch_loss(g) += groups.mean_raw_loss(g) * groups.counts[g];
        epoch_count[g] += groups.counts[g];
      }

      std::vector<double> coef(n, 0.0);
      ModelState grad;
      bool have_grad = false;

      if (uses_cmo(method)) {
        coef = group_average_coefficients(batch.labels, batch.sample_weights, cmo.weights.q);
        for (int g = 0; g < num_classes; ++g) {
          stats.update(g, groups.mean_embedding[g], groups.counts[g], cmo_config.ema_decay);
        }
        const Vector resolved = tracker.resolve(groups.mean_loss, groups.present);
        // Simultaneous update: theta uses q^t, q uses losses at theta^t.
        grad = gradient_from(model, batch, coef);
        have_grad = true;
        cmo = cmo_update_q(cmo, resolved, stats);
      } else if (!baseline) {
        // erm / erm_nnr
        for (std::size_t i = 0; i < n; ++i) coef[i] = batch.sample_weights[i] / n;
      } else {
        switch (*baseline) {
          case BaselineMethod::kErm:
            std::fill(coef.begin(), coef.end(), 1.0 / n);
            break;
          case BaselineMethod::kCvar:
            coef = cvar_coefficients(batch.losses, spec.alpha_cvar);
            break;
          case BaselineMethod::kChisq:
            coef = chisq_coefficients(batch.losses, spec.rho_chisq);
            break;
          case BaselineMethod::kCvarDoro:
            coef = on_subset(batch.losses, doro_filter(batch.losses, spec.eps_doro),
                             [&](const std::vector<double>& l) {
                               return cvar_coefficients(l, spec.alpha_cvar);
                             });
            break;
          case BaselineMethod::kChisqDoro:
            coef = on_subset(batch.losses, doro_filter(batch.losses, spec.eps_doro),
                             [&](const std::vector<double>& l) {
                               return chisq_coefficients(l, spec.rho_chisq);
                             });
            break;
          case BaselineMethod::kCvarGroup: {
            const auto present = present_groups(groups);
            std::vector<double> losses;
            for (int g : present) losses.push_back(groups.mean_raw_loss(g));
            const auto group_coef = cvar_coefficients(losses, spec.alpha_cvar);
            for (std::size_t i = 0; i < n; ++i) {
              const auto pos = std::find(present.begin(), present.end(), batch.labels[i]) -
                               present.begin();
              coef[i] = group_coef[pos] / groups.counts[batch.labels[i]];
            }
            break;
          }
          case BaselineMethod::kGroupDro: {
            const Vector resolved = tracker.resolve(groups.mean_raw_loss, groups.present);
            group_q = group_dro_update(group_q, resolved, spec.eta_group);
            const std::vector<double> ones(n, 1.0);
            coef = group_average_coefficients(batch.labels, ones, group_q);
            break;
          }
          case BaselineMethod::kGradientDro: {
            const auto present = present_groups(groups);
            std::vector<ModelState> per_group(present.size(), model.zeros_like());
            for (std::size_t i = 0; i < n; ++i) {
              const auto pos = std::find(present.begin(), present.end(), batch.labels[i]) -
                               present.begin();
              accumulate_gradient(model, *batch.graphs[i], batch.traces[i],
                                  1.0 / groups.counts[batch.labels[i]], per_group[pos]);
            }
            std::vector<double> norms;
            for (const auto& g : per_group) norms.push_back(g.norm());
            const Vector q = gradient_dro_weights(norms);
            grad = model.zeros_like();
            for (std::size_t k = 0; k < present.size(); ++k) grad.add_scaled(per_group[k], q(k));
            have_grad = true;
            break;
          }
          case BaselineMethod::kVariantDro: {
            const auto present = present_groups(groups);
            std::vector<double> losses;
            for (int g : present) losses.push_back(groups.mean_raw_loss(g));
            const auto dl = variant_dro_gradient(losses, spec.lambda_var);
            for (std::size_t i = 0; i < n; ++i) {
              const auto pos = std::find(present.begin(), present.end(), batch.labels[i]) -
                               present.begin();
              coef[i] = dl[pos] / groups.counts[batch.labels[i]];
            }
            break;
          }
        }
      }
      if (!have_grad) grad = gradient_from(model, batch, coef);
      if (!grad.all_finite()) {
        throw TrainingDiverged("non-finite gradient at epoch " + std::to_string(epoch));
      }
      grad_norm_sum += grad.norm();
      ++batches;
      model.add_scaled(grad, -config.learning_rate);
    }

    // Per-epoch monitors.
    Vector q_now = prior;
    if (uses_cmo(method)) {
      q_now = cmo.weights.q;
    } else if (baseline == BaselineMethod::kGroupDro) {
      q_now = group_q;
    }
    double worst = -std::numeric_limits<double>::infinity();
    double weighted = 0.0;
    double mass = 0.0;
    for (int g = 0; g < num_classes; ++g) {
      if (epoch_count[g] == 0) continue;
      const double l = epoch_loss(g) / epoch_count[g];
      worst = std::max(worst, l);
      weighted += q_now(g) * l;
      mass += q_now(g);
    }
    result.trace.grad_norm.push_back(grad_norm_sum / std::max(batches, 1));
    result.trace.duality_gap_proxy.push_back(mass > 0.0 ? worst - weighted / mass : 0.0);
    if (uses_cmo(method) || baseline == BaselineMethod::kGroupDro) {
      result.q_trajectory.push_back(q_now);
    }

    if (config.selection == ModelSelection::kBestValidation && !data.val.empty()) {
      const double acc = evaluate(model, data.val, num_classes).overall_accuracy;
      result.val_accuracy.push_back(acc);
      if (acc >= best_val) {
        best_val = acc;
        result.selected_model = model;
        result.selected_epoch = epoch;
      }
    } else {
      result.selected_model = model;
      result.selected_epoch = epoch;
    }
  }
  result.final_model = model;
  if (uses_cmo(method)) {
    result.group_weights = cmo.weights.q;
  } else if (baseline == BaselineMethod::kGroupDro) {
    result.group_weights = group_q;
  }
  return result;
}

}  // namespace robust_shift
