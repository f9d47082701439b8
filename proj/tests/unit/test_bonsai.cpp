#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "bonsai/bonsai.hpp"
#include "bonsai/environments.hpp"
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

// Linear net whose logit on row e_i is w_i.
MlpNet row_logits(std::initializer_list<double> w) {
  MlpNet net(MlpShape{static_cast<Index>(w.size()), {}, 1, 1, Activation::kRelu});
  Index i = 0;
  for (double v : w) net.mutable_params().heads[0].weight(0, i++) = v;
  return net;
}

Dataset pooled(const EnvironmentSet& set, Role role) {
  Dataset d;
  environment_groups(set, role, d);
  return d;
}

DiscoveryConfig linear_discovery(int rounds) {
  DiscoveryConfig cfg;
  cfg.rounds = rounds;
  cfg.hidden = {};
  cfg.epochs = {300};
  cfg.train.learning_rate = 0.05;
  cfg.train.patience = 300;
  return cfg;
}

}  // namespace

TEST_CASE("split_by_correctness") {
  const Dataset d = make_dataset(Matrix::Identity(4, 4), (Vector(4) << 1, 0, 1, 0).finished());
  const auto perfect = split_by_correctness(row_logits({2, -1, 0.5, -3}), d);
  CHECK(perfect.a == std::vector<Index>{0, 1, 2, 3});
  CHECK(perfect.b.empty());

  // logit 0 everywhere predicts class 1
  const auto flat = split_by_correctness(MlpNet(MlpShape{4, {}, 1, 1, Activation::kRelu}), d);
  CHECK(flat.a == std::vector<Index>{0, 2});
  CHECK(flat.b == std::vector<Index>{1, 3});

  const auto hand = split_by_correctness(row_logits({-1, -1, 1, 1}), d);
  CHECK(hand.a == std::vector<Index>{1, 2});
  CHECK(hand.b == std::vector<Index>{0, 3});
}

TEST_CASE("make_pseudo_labels") {
  const Dataset d = make_dataset(Matrix::Identity(5, 5), Vector::Ones(5));
  const MlpNet f1 = row_logits({-1, 1, 1, 1, -1});  // correct on {1, 2, 3}
  const MlpNet f2 = row_logits({-1, -1, 1, 1, 1});  // correct on {2, 3, 4}
  const std::vector<MlpNet> both{f1, f2};
  const auto ps = make_pseudo_labels(both, d);
  CHECK(ps.mask_a == std::vector<std::uint8_t>{0, 0, 1, 1, 0});
  CHECK(ps.labels[0] == (Vector(5) << 0, 1, 1, 1, 0).finished());
  CHECK(ps.logits[1] == (Vector(5) << -1, -1, 1, 1, 1).finished());

  const std::vector<MlpNet> twins{f1, f1};
  const auto pt = make_pseudo_labels(twins, d);
  CHECK(pt.labels[0] == pt.labels[1]);

  const std::vector<MlpNet> perfect{row_logits({1, 1, 1, 1, 1})};
  const auto pp = make_pseudo_labels(perfect, d);
  CHECK(pp.labels[0] == d.y);
  CHECK(pp.a_size() == 5);
}

TEST_CASE("discovery on TwoBits: pool structure and the second model leans on X2") {
  TwoBitsSpec spec;
  spec.n_per_env = 4000;
  spec.n_valid_per_env = 1000;
  const auto set = make_twobits(spec);
  const Dataset train = pooled(set, Role::kTrain), valid = pooled(set, Role::kValid);
  const auto res = discovery(train, valid, linear_discovery(2));
  REQUIRE(res.models.size() == 2);
  CHECK(res.pool.size() <= 4);

  // each (A_k, B_k) pair partitions D
  for (std::size_t k = 0; k < 2; ++k) {
    std::vector<int> seen(static_cast<std::size_t>(train.size()), 0);
    for (std::size_t g = 0; g < res.pool.size(); ++g) {
      if (res.pool.provenance[g] != "f" + std::to_string(k + 1)) continue;
      for (Index i : res.pool.groups[g].train_rows) ++seen[static_cast<std::size_t>(i)];
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  }

  auto ratio = [](const MlpNet& f) {
    const auto& w = f.params().heads[0].weight;
    return std::abs(w(0, 1)) / std::abs(w(0, 0));
  };
  CHECK(ratio(res.models[0]) > 0.1);
  CHECK(ratio(res.models[1]) > ratio(res.models[0]));

  // mask A from the pseudo-labels equals the intersection of the pool's A sets
  const auto ps = make_pseudo_labels(res.models, train);
  for (Index i = 0; i < train.size(); ++i) {
    const auto ii = static_cast<std::size_t>(i);
    CHECK(ps.mask_a[ii] == (res.correct_train[0][ii] && res.correct_train[1][ii]));
  }
}

TEST_CASE("discovery stops after a perfect first round") {
  Rng rng(3);
  Matrix x = random_matrix(300, 2, rng);
  Vector y(300);
  for (Index i = 0; i < 300; ++i) {
    x(i, 0) += x(i, 0) > 0 ? 1.0 : -1.0;  // margin
    y[i] = x(i, 0) > 0 ? 1.0 : 0.0;
  }
  const Dataset all = make_dataset(x, y);
  std::vector<Index> tr(200), va(100);
  std::iota(tr.begin(), tr.end(), Index{0});
  std::iota(va.begin(), va.end(), Index{200});
  const auto res = discovery(all.rows(tr), all.rows(va), linear_discovery(3));
  CHECK(res.stopped_early);
  CHECK(res.models.size() == 1);
  CHECK(res.rounds[0].b_train == 0);
  CHECK_FALSE(res.rounds[0].warnings.empty());
}

TEST_CASE("synthesis imitates duplicated teachers and agreement grows with epochs") {
  Rng rng(4);
  const Matrix x = random_matrix(400, 3, rng);
  const MlpNet teacher = MlpNet::xavier(MlpShape{3, {8}, 1, 1, Activation::kRelu}, 21);
  // true labels disagree with the teacher on some rows so that A != D
  const Vector z = mlp_predict(teacher, x).front().col(0);
  Vector y(400);
  for (Index i = 0; i < 400; ++i) y[i] = ((z[i] >= 0) != (i % 7 == 0)) ? 1.0 : 0.0;
  const Dataset d = make_dataset(x, y);
  const std::vector<MlpNet> teachers{teacher, teacher};
  const auto ps = make_pseudo_labels(teachers, d);
  REQUIRE(ps.a_size() > 0);
  REQUIRE(ps.a_size() < 400);

  SynthesisConfig cfg;
  cfg.hidden = {16};
  cfg.train.learning_rate = 0.01;
  auto agreement = [&](int epochs) {
    cfg.train.max_epochs = epochs;
    const auto rep = synthesis(x, ps, cfg);
    return rep.report["head_agreement"][0].get<double>();
  };
  const double early = agreement(20);
  const double late = agreement(3000);
  CHECK(late >= 0.99);
  CHECK(late >= early);

  cfg.train.max_epochs = 50;
  const auto r1 = synthesis(x, ps, cfg);
  const auto r2 = synthesis(x, ps, cfg);
  CHECK(r1.net.params().flatten() == r2.net.params().flatten());
  CHECK(r1.k == 2);
  CHECK(r1.features(x).cols() == 16);

  cfg.distill_weight = 0.5;
  const auto rd = synthesis(x, ps, cfg);
  CHECK(std::isfinite(rd.report["loss_history"].back().get<double>()));
}

TEST_CASE("default synthesis body is a non-identity MLP matching discovery") {
  const SynthesisConfig s;
  const DiscoveryConfig d;
  CHECK(s.hidden == std::vector<Index>{390, 390});
  CHECK(s.hidden == d.hidden);
  CHECK(s.tau == 10.0);
  CHECK(d.epochs == std::vector<int>{50, 500});
}

TEST_CASE("synthesis rejects degenerate masks") {
  PseudoLabelSet ps;
  ps.labels = {Vector::Ones(3)};
  ps.logits = {Vector::Ones(3)};
  ps.mask_a = {1, 1, 1};
  SynthesisConfig cfg;
  cfg.hidden = {2};
  cfg.train.max_epochs = 1;
  CHECK_THROWS_AS(synthesis(Matrix::Ones(3, 2), ps, cfg), InvalidArgument);
}

TEST_CASE("bonsai_run: K = 1 is the RERM model, runs are deterministic") {
  TwoBitsSpec spec;
  spec.n_per_env = 1000;
  spec.n_valid_per_env = 300;
  const auto set = make_twobits(spec);
  BonsaiConfig cfg;
  cfg.discovery = linear_discovery(1);
  const auto one = bonsai_run(set, cfg);
  CHECK(one.k == 1);
  TrainConfig tc = cfg.discovery.train;
  tc.max_epochs = 300;
  tc.seed = derive_seed(tc.seed, "discovery/round1");
  const Dataset train = pooled(set, Role::kTrain), valid = pooled(set, Role::kValid);
  const auto r = rerm_train(train, valid, single_rerm_group(train, valid), MlpShape{2, {}, 1, 1, Activation::kRelu}, tc);
  CHECK(one.net.params().flatten() == r.model.params().flatten());

  cfg.discovery = linear_discovery(2);
  cfg.discovery.hidden = {4};
  cfg.discovery.epochs = {40};
  cfg.synthesis.hidden = {4};
  cfg.synthesis.train.max_epochs = 30;
  const auto a = bonsai_run(set, cfg);
  const auto b = bonsai_run(set, cfg);
  CHECK(a.k == 2);
  CHECK(a.report.dump() == b.report.dump());
  CHECK(a.net.params().flatten() == b.net.params().flatten());
  CHECK(a.report["discovery"].size() == 2);
  CHECK(a.report["discovery"][0].contains("test_accuracy"));
}
