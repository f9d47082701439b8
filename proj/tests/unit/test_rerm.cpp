#include "doctest.h"

#include <cmath>

#include "bonsai/environments.hpp"
#include "bonsai/rerm.hpp"
#include "test_support.hpp"

using namespace bonsai;
using namespace bonsai::testing;

namespace {

Dataset make_dataset(const Matrix& x, const Vector& y) {
  Dataset d;
  d.x = x;
  d.y = y;
  d.env.assign(static_cast<std::size_t>(x.rows()), 0);
  return d;
}

// Linearly separable 2-d data: label = 1[x0 + 0.5 x1 > 0], with a margin.
Dataset separable(Index n, std::uint64_t seed) {
  Rng rng(seed);
  Matrix x(n, 2);
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    double a, b;
    do {
      a = rng.normal();
      b = rng.normal();
    } while (std::abs(a + 0.5 * b) < 0.3);
    x(i, 0) = a;
    x(i, 1) = b;
    y[i] = a + 0.5 * b > 0 ? 1.0 : 0.0;
  }
  return make_dataset(x, y);
}

double accuracy(const MlpNet& net, const Dataset& d) {
  const Vector z = mlp_predict(net, d.x).front().col(0);
  double ok = 0;
  for (Index i = 0; i < d.size(); ++i) ok += (z[i] >= 0) == (d.y[i] == 1.0);
  return ok / static_cast<double>(d.size());
}

}  // namespace

TEST_CASE("dro_gradient_step with one group is a plain ERM step") {
  Rng rng(1);
  const Dataset d = make_dataset(random_matrix(30, 4, rng), random_labels(30, rng));
  MlpNet a = MlpNet::xavier(MlpShape{4, {6}, 1, 1, Activation::kRelu}, 3);
  MlpNet b = a;
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  Optimizer opt;
  dro_gradient_step(a, d, whole_group(d), opt, cfg);

  const auto fr = mlp_forward(b, d.x);
  const auto lg = bce_with_logits(fr.logits[0].col(0), d.y);
  AdamState st;
  adam_step(b, mlp_backward(b, fr.cache, std::vector<Matrix>{lg.grad}), st, cfg);
  CHECK((a.params().flatten() - b.params().flatten()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("dro_gradient_step follows the worse group when the other has zero loss") {
  // Squared loss; group "zero" has label 0 and input 0, so its loss is 0 for
  // a bias-free start.
  Matrix x(4, 2);
  x << 0, 0, 0, 0, 1, 2, -1, 0.5;
  Vector y(4);
  y << 0, 0, 1, 1;
  const Dataset d = make_dataset(x, y);
  const std::vector<Group> groups{{"zero", {0, 1}}, {"hard", {2, 3}}};
  MlpNet a(MlpShape{2, {}, 1, 1, Activation::kRelu});
  a.mutable_params().heads[0].weight << 0.3, -0.2;
  MlpNet b = a;
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::kSgd;
  cfg.learning_rate = 0.1;
  Optimizer opt;
  const LossVector lv = dro_gradient_step(a, d, groups, opt, cfg, LossKind::kMse);
  CHECK(lv.values[0] == 0.0);
  CHECK(lv.argmax_index == 1);

  const Dataset hard = d.rows(groups[1].rows);
  const auto fr = mlp_forward(b, hard.x);
  const auto lg = squared_error(fr.logits[0], Matrix(hard.y));
  sgd_step(b, mlp_backward(b, fr.cache, std::vector<Matrix>{lg.grad}), 0.1);
  CHECK((a.params().flatten() - b.params().flatten()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("DRO steps on a convex linear probe keep the max group loss non-increasing") {
  Rng rng(2);
  const Dataset d = make_dataset(random_matrix(60, 3, rng), random_labels(60, rng));
  std::vector<Group> groups{{"g0", {}}, {"g1", {}}, {"g2", {}}};
  for (Index i = 0; i < 60; ++i) groups[static_cast<std::size_t>(i % 3)].rows.push_back(i);
  MlpNet net = MlpNet::xavier(MlpShape{3, {}, 1, 1, Activation::kRelu}, 5);
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::kSgd;
  cfg.learning_rate = 1e-3;
  Optimizer opt;
  double prev = dro_objective(group_losses(net, d, groups)).value;
  const double first = prev;
  for (int t = 0; t < 100; ++t) {
    dro_gradient_step(net, d, groups, opt, cfg);
    const double now = dro_objective(group_losses(net, d, groups)).value;
    CHECK(now <= prev + 1e-4);
    prev = now;
  }
  CHECK(prev < first);
}

TEST_CASE("rerm_train fits a separable single group") {
  const Dataset train = separable(200, 1), valid = separable(100, 2);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.max_epochs = 500;
  cfg.patience = 500;
  const auto res = rerm_train(train, valid, single_rerm_group(train, valid), MlpShape{2, {}, 1, 1, Activation::kRelu},
                              cfg);
  CHECK(accuracy(res.model, train) == 1.0);
  CHECK(dro_objective(group_losses(res.model, train, whole_group(train))).value < 0.05);
}

TEST_CASE("rerm_train on pooled TwoBits uses both bits") {
  TwoBitsSpec spec;
  spec.n_per_env = 5000;
  const auto set = make_twobits(spec);
  Dataset train, valid;
  environment_groups(set, Role::kTrain, train);
  environment_groups(set, Role::kValid, valid);
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.max_epochs = 300;
  cfg.patience = 50;
  const auto res = rerm_train(train, valid, single_rerm_group(train, valid), MlpShape{2, {}, 1, 1, Activation::kRelu},
                              cfg);
  const Vector w = res.model.params().heads[0].weight.row(0).transpose();
  const Vector u = w / w.norm();
  CHECK(std::abs(u[0]) > 0.1);
  CHECK(std::abs(u[1]) > 0.1);
  CHECK(u[0] > u[1]);
}

TEST_CASE("rerm_train contracts: determinism, best checkpoint, trace sanity") {
  Rng rng(3);
  const Dataset train = make_dataset(random_matrix(80, 3, rng), random_labels(80, rng));
  const Dataset valid = make_dataset(random_matrix(40, 3, rng), random_labels(40, rng));
  std::vector<RermGroup> groups{{"a", {}, {}}, {"b", {}, {}}};
  for (Index i = 0; i < 80; ++i) groups[static_cast<std::size_t>(i % 2)].train_rows.push_back(i);
  for (Index i = 0; i < 40; ++i) groups[static_cast<std::size_t>(i < 15)].valid_rows.push_back(i);
  TrainConfig cfg;
  cfg.learning_rate = 0.02;
  cfg.max_epochs = 120;
  cfg.patience = 15;
  const MlpShape shape{3, {8}, 1, 1, Activation::kRelu};
  const auto r1 = rerm_train(train, valid, groups, shape, cfg);
  const auto r2 = rerm_train(train, valid, groups, shape, cfg);
  CHECK(r1.report.to_json().dump() == r2.report.to_json().dump());
  CHECK(r1.model.params().flatten() == r2.model.params().flatten());

  const auto& rep = r1.report;
  CHECK(rep.train_history.size() == rep.valid_history.size());
  CHECK(rep.active_trace.size() == rep.train_history.size());
  CHECK(rep.epochs_run == static_cast<int>(rep.valid_history.size()));
  for (std::size_t e = 0; e < rep.train_history.size(); ++e) {
    const auto& lv = rep.train_history[e];
    const Index a = rep.active_trace[e];
    REQUIRE((a >= 0 && a < lv.size()));
    for (double v : lv.values) CHECK(lv.values[static_cast<std::size_t>(a)] >= v);
  }
  std::vector<Group> vg{{"a", groups[0].valid_rows}, {"b", groups[1].valid_rows}};
  const double final_valid = dro_objective(group_losses(r1.model, valid, vg)).value;
  CHECK(final_valid == rep.best_valid_dro);
  for (const auto& lv : rep.valid_history) CHECK(final_valid <= dro_objective(lv).value);
  CHECK(rep.epochs_run - rep.best_epoch <= cfg.patience);
}

TEST_CASE("rerm_train with one group matches an independent early-stopped ERM loop") {
  Rng rng(4);
  const Dataset train = make_dataset(random_matrix(50, 3, rng), random_labels(50, rng));
  const Dataset valid = make_dataset(random_matrix(30, 3, rng), random_labels(30, rng));
  TrainConfig cfg;
  cfg.learning_rate = 0.03;
  cfg.max_epochs = 200;
  cfg.patience = 10;
  const MlpNet init = MlpNet::xavier(MlpShape{3, {5}, 1, 1, Activation::kRelu}, 8);
  const auto res = rerm_train(train, valid, single_rerm_group(train, valid), init, cfg);

  MlpNet net = init;
  MlpNet best = init;
  AdamState st;
  double best_v = 1e300;
  int best_e = 0;
  for (int e = 1; e <= cfg.max_epochs; ++e) {
    const auto fr = mlp_forward(net, train.x);
    const auto lg = bce_with_logits(fr.logits[0].col(0), train.y);
    adam_step(net, mlp_backward(net, fr.cache, std::vector<Matrix>{lg.grad}), st, cfg);
    const double v = bce_with_logits(mlp_predict(net, valid.x).front().col(0), valid.y).value;
    if (v < best_v) {
      best_v = v;
      best_e = e;
      best = net;
    } else if (e - best_e >= cfg.patience) {
      break;
    }
  }
  CHECK(res.report.best_epoch == best_e);
  CHECK((res.model.params().flatten() - best.params().flatten()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rerm_train minibatch mode is deterministic and learns") {
  const Dataset train = separable(300, 5), valid = separable(100, 6);
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 32;
  cfg.max_epochs = 40;
  cfg.patience = 40;
  const MlpShape shape{2, {}, 1, 1, Activation::kRelu};
  const auto a = rerm_train(train, valid, single_rerm_group(train, valid), shape, cfg);
  const auto b = rerm_train(train, valid, single_rerm_group(train, valid), shape, cfg);
  CHECK(a.model.params().flatten() == b.model.params().flatten());
  CHECK(accuracy(a.model, valid) > 0.97);
}

TEST_CASE("rerm_train errors") {
  Matrix x = Matrix::Constant(4, 1, 1e200);
  const Dataset d = make_dataset(x, Vector::Zero(4));
  MlpNet net(MlpShape{1, {}, 1, 1, Activation::kRelu});
  net.mutable_params().heads[0].weight(0, 0) = 1e200;
  TrainConfig cfg;
  cfg.max_epochs = 3;
  CHECK_THROWS_AS(rerm_train(d, d, single_rerm_group(d, d), net, cfg, LossKind::kMse), NumericalError);

  std::vector<RermGroup> no_valid{{"g", {0, 1}, {}}};
  CHECK_THROWS_AS(rerm_train(d, d, no_valid, net, cfg), InvalidArgument);
}
