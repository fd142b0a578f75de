// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <vector>

#include "robust_shift/config.hpp"
#include "robust_shift/errors.hpp"
#include "robust_shift/trainer.hpp"

using namespace robust_shift;

namespace {

TrainConfig tiny_config(Method method) {
  TrainConfig cfg = desk_preset();
  cfg.method = method;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.embedding_dim = 8;
  cfg.num_layers = 2;
  cfg.data.num_classes = 3;
  cfg.data.train_counts = {16, 16, 4};
  cfg.data.val_count = 6;
  cfg.data.test_count = 6;
  cfg.data.d_inv = 4;
  cfg.data.d_spu = 4;
  cfg.data.alpha = 0.1;
  cfg.data.seed = 5;
  cfg.nnr.refresh_every = 1;
  cfg.cmo.k = cmo_order(method);
  return cfg;
}

}  // namespace

TEST_CASE("evaluate_predictions") {
  SUBCASE("all correct") {
    const std::vector<int> y = {0, 1, 2, 1};
    const EvalResult r = evaluate_predictions(y, y, 3);
    for (double a : r.per_class_accuracy) CHECK(a == 100.0);
    CHECK(r.overall_accuracy == 100.0);
  }
  SUBCASE("constant predictor on a balanced split") {
    const std::vector<int> labels = {0, 0, 1, 1, 2, 2, 3, 3};
    const std::vector<int> preds(8, 1);
    const EvalResult r = evaluate_predictions(preds, labels, 4);
    CHECK(r.per_class_accuracy == std::vector<double>{0.0, 100.0, 0.0, 0.0});
    CHECK(r.overall_accuracy == doctest::Approx(25.0));
  }
  SUBCASE("ten labelled predictions by hand") {
    const std::vector<int> labels = {0, 0, 0, 0, 1, 1, 1, 2, 2, 2};
    const std::vector<int> preds = {0, 0, 1, 0, 1, 2, 1, 2, 0, 0};
    const EvalResult r = evaluate_predictions(preds, labels, 3);
    CHECK(r.per_class_accuracy[0] == doctest::Approx(75.0));
    CHECK(r.per_class_accuracy[1] == doctest::Approx(200.0 / 3.0));
    CHECK(r.per_class_accuracy[2] == doctest::Approx(100.0 / 3.0));
    CHECK(r.overall_accuracy == doctest::Approx((75.0 + 200.0 / 3.0 + 100.0 / 3.0) / 3.0));
    CHECK(r.class_counts == std::vector<int>{4, 3, 3});
  }
  SUBCASE("absent class is flagged and excluded") {
    const std::vector<int> labels = {0, 0, 2};
    const std::vector<int> preds = {0, 1, 2};
    const EvalResult r = evaluate_predictions(preds, labels, 3);
    CHECK(std::isnan(r.per_class_accuracy[1]));
    CHECK(r.absent_classes == std::vector<int>{1});
    CHECK(r.overall_accuracy == doctest::Approx(75.0));
  }
  SUBCASE("errors") {
    const std::vector<int> a = {0};
    const std::vector<int> none;
    CHECK_THROWS_AS(evaluate_predictions(a, none, 2), ShapeError);
    CHECK_THROWS_AS(evaluate_predictions(none, none, 2), InvalidInput);
  }
}

TEST_CASE("priors and minority class") {
  SynthConfig data = tiny_config(Method::kErm).data;
  const TrainData td = make_train_data(generate_dataset(data));
  CHECK(td.num_classes == 3);
  CHECK(td.input_dim == 8);
  CHECK(minority_class(td.train, 3) == 2);
  const Vector prior = label_prior(td.train, 3);
  CHECK(prior.sum() == doctest::Approx(1.0));
  CHECK(prior.minCoeff() > 0.0);
}

TEST_CASE("zero epochs returns the initial model") {
  TrainConfig cfg = tiny_config(Method::kErm);
  cfg.epochs = 0;
  const TrainData td = make_train_data(generate_dataset(cfg.data));
  const TrainResult r = train(cfg, td, 11);
  CHECK(r.selected_epoch == -1);
  CHECK(r.selected_model == r.initial_model);
  CHECK(r.final_model == r.initial_model);
  CHECK(r.initial_model == init_model(td.input_dim, cfg.embedding_dim, cfg.num_layers, 3, 11));
}

TEST_CASE("every method trains deterministically") {
  for (Method m : all_methods()) {
    CAPTURE(method_name(m));
    const TrainConfig cfg = tiny_config(m);
    const TrainData td = make_train_data(generate_dataset(cfg.data));
    const TrainResult a = train(cfg, td, 3);
    const TrainResult b = train(cfg, td, 3);
    CHECK(a.final_model == b.final_model);
    CHECK(a.selected_model == b.selected_model);
    CHECK(a.final_model.all_finite());
    CHECK(a.trace.grad_norm.size() == 3);
    CHECK(a.val_accuracy.size() == 3);
    CHECK(a.nnr_weights.has_value() == uses_nnr(m));
    if (uses_cmo(m)) {
      REQUIRE(a.group_weights.has_value());
      CHECK(a.group_weights->sum() == doctest::Approx(1.0));
      CHECK(a.q_trajectory.size() == 3);
    }
    CHECK_FALSE(a.final_model == a.initial_model);
  }
}

TEST_CASE("selection modes") {
  TrainConfig cfg = tiny_config(Method::kErm);
  cfg.selection = ModelSelection::kLastEpoch;
  const TrainData td = make_train_data(generate_dataset(cfg.data));
  const TrainResult last = train(cfg, td, 1);
  CHECK(last.selected_epoch == 2);
  CHECK(last.selected_model == last.final_model);

  cfg.selection = ModelSelection::kBestValidation;
  const TrainResult best = train(cfg, td, 1);
  REQUIRE(best.selected_epoch >= 0);
  for (double acc : best.val_accuracy) CHECK(acc <= best.val_accuracy[best.selected_epoch]);
}

TEST_CASE("divergence aborts the run") {
  TrainConfig cfg = tiny_config(Method::kErm);
  cfg.learning_rate = 1e200;
  const TrainData td = make_train_data(generate_dataset(cfg.data));
  CHECK_THROWS_AS(train(cfg, td, 1), TrainingDiverged);
}
