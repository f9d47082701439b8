#include "doctest.h"

#include <cmath>
#include <limits>

#include "bonsai/environments.hpp"
#include "bonsai/trainers.hpp"
#include "test_support.hpp"

using namespace bonsai;
using namespace bonsai::testing;

namespace {

EnvironmentSet small_twobits(std::uint64_t seed = 1) {
  TwoBitsSpec spec;
  spec.n_per_env = 600;
  spec.n_valid_per_env = 200;
  spec.seed = seed;
  return make_twobits(spec);
}

MethodConfig small_config(int epochs) {
  MethodConfig cfg;
  cfg.hidden = {8};
  cfg.train.learning_rate = 0.01;
  cfg.train.max_epochs = epochs;
  cfg.eval_every = 1;
  return cfg;
}

// Synthesis-like representation: random body with two heads.
RichRepresentation random_representation(Index dim, std::uint64_t seed) {
  RichRepresentation rep;
  rep.net = MlpNet::xavier(MlpShape{dim, {6}, 2, 1, Activation::kRelu}, seed);
  rep.k = 2;
  return rep;
}

}  // namespace

TEST_CASE("vREx with weight 0 follows the ERM trajectory exactly") {
  const EnvironmentSet set = small_twobits();
  const MethodConfig cfg = small_config(30);
  MethodSpec erm, vrex;
  vrex.method = MethodKind::kVrex;
  vrex.penalty_weight = 0.0;
  const MethodResult a = train_method(set, {}, erm, cfg);
  const MethodResult b = train_method(set, {}, vrex, cfg);
  CHECK(a.model.params().flatten() == b.model.params().flatten());
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].objective == b.history[i].objective);
}

TEST_CASE("vREx on two identical environments has a zero penalty throughout") {
  EnvironmentSet set = small_twobits();
  Environment copy = set.envs[0];
  copy.name = "train_copy";
  set.envs[1] = copy;
  MethodSpec spec;
  spec.method = MethodKind::kVrex;
  spec.penalty_weight = 1000.0;
  const MethodResult r = train_method(set, {}, spec, small_config(20));
  for (const auto& m : r.history) {
    CHECK(m.penalty == 0.0);
    CHECK(m.env_losses[0] == m.env_losses[1]);
  }
}

TEST_CASE("frozen mode leaves the body bit-identical and starts from the averaged head") {
  const EnvironmentSet set = small_twobits();
  const RichRepresentation rep = random_representation(2, 5);
  MethodSpec spec;
  spec.method = MethodKind::kVrex;
  spec.penalty_weight = 10.0;
  spec.frozen = true;
  MethodConfig cfg = small_config(25);
  std::vector<std::pair<Vector, Vector>> seen;
  const MethodResult r = train_method(set, {InitKind::kRepresentation, &rep}, spec, cfg, [&](const StepRecord& s) {
    if (s.step == 1) {
      const auto& h = s.net->params().heads[0];
      const auto& h0 = rep.net.params().heads[0];
      const auto& h1 = rep.net.params().heads[1];
      CHECK(h.weight.isApprox(0.5 * (h0.weight + h1.weight), 1e-15));
      CHECK(s.data->dim() == 6);
    }
  });
  REQUIRE(r.model.params().body.size() == rep.net.params().body.size());
  for (std::size_t l = 0; l < rep.net.params().body.size(); ++l) {
    CHECK(r.model.params().body[l].weight == rep.net.params().body[l].weight);
    CHECK(r.model.params().body[l].bias == rep.net.params().body[l].bias);
    CHECK(r.valid_model.params().body[l].weight == rep.net.params().body[l].weight);
  }
  CHECK(r.model.shape().head_count == 1);

  // unfrozen training moves the body
  spec.frozen = false;
  const MethodResult u = train_method(set, {InitKind::kRepresentation, &rep}, spec, cfg);
  CHECK_FALSE(u.model.params().body[0].weight == rep.net.params().body[0].weight);
}

TEST_CASE("GroupDRO applies a simplex combination of the environment gradients") {
  const EnvironmentSet set = small_twobits();
  MethodSpec spec;
  spec.method = MethodKind::kGroupDro;
  spec.groupdro_step = 0.5;  // large, so the weights move visibly
  std::vector<double> p{0.5, 0.5};
  double worst = 0.0;
  int steps = 0;
  train_method(set, {}, spec, small_config(40), [&](const StepRecord& s) {
    // independent weight recursion
    double z = 0.0;
    for (std::size_t e = 0; e < p.size(); ++e) z += (p[e] *= std::exp(0.5 * s.losses.values[e]));
    for (double& v : p) v /= z;
    double sum = 0.0;
    for (std::size_t e = 0; e < p.size(); ++e) {
      CHECK(s.coefficients[e] >= 0.0);
      CHECK(s.coefficients[e] == doctest::Approx(p[e]).epsilon(1e-12));
      sum += s.coefficients[e];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    // per-environment gradients, one backward pass each
    const ForwardResult fr = mlp_forward(*s.net, s.data->x);
    Vector combined = Vector::Zero(static_cast<Index>(s.applied->size()));
    for (std::size_t e = 0; e < s.groups.size(); ++e) {
      Matrix dl = Matrix::Zero(s.data->size(), 1);
      const double ne = static_cast<double>(s.groups[e].rows.size());
      for (Index i : s.groups[e].rows) dl(i, 0) = (sigmoid(fr.logits[0](i, 0)) - s.data->y[i]) / ne;
      combined += s.coefficients[e] * mlp_backward(*s.net, fr.cache, std::vector<Matrix>{dl}).flatten();
    }
    worst = std::max(worst, (combined - s.applied->flatten()).cwiseAbs().maxCoeff());
    ++steps;
  });
  CHECK(steps == 40);
  CHECK(worst < 1e-10);
  CHECK(std::abs(p[0] - 0.5) > 1e-3);
}

TEST_CASE("DRO steps on the worst environment only") {
  const EnvironmentSet set = small_twobits();
  MethodSpec spec;
  spec.method = MethodKind::kDro;
  train_method(set, {}, spec, small_config(10), [&](const StepRecord& s) {
    const auto at = static_cast<std::size_t>(s.losses.argmax_index);
    for (std::size_t e = 0; e < s.coefficients.size(); ++e) CHECK(s.coefficients[e] == (e == at ? 1.0 : 0.0));
  });
}

TEST_CASE("pretraining runs ERM before the penalty is switched on") {
  const EnvironmentSet set = small_twobits();
  MethodSpec spec;
  spec.method = MethodKind::kVrex;
  spec.penalty_weight = 100.0;
  spec.pretrain_epochs = 5;
  int calls = 0;
  const MethodResult r = train_method(set, {InitKind::kErm, nullptr}, spec, small_config(7), [&](const StepRecord& s) {
    ++calls;
    const bool plain = s.coefficients[0] == 0.5 && s.coefficients[1] == 0.5;
    if (s.step <= 5) CHECK(plain);
  });
  CHECK(calls == 12);
  CHECK(r.history.size() == 7);
  CHECK(r.history.front().epoch == 1);

  MethodSpec no_pretrain = spec;
  no_pretrain.pretrain_epochs = 0;
  CHECK_THROWS_AS(train_method(set, {InitKind::kErm, nullptr}, no_pretrain, small_config(2)), InvalidArgument);
  MethodSpec frozen;
  frozen.frozen = true;
  CHECK_THROWS_AS(train_method(set, {}, frozen, small_config(2)), InvalidArgument);
}

TEST_CASE("evaluation schedule and selection") {
  const EnvironmentSet set = small_twobits();
  MethodConfig cfg = small_config(45);
  cfg.eval_every = 20;
  const MethodResult r = train_method(set, {}, MethodSpec{}, cfg);
  REQUIRE(r.history.size() == 3);
  CHECK(r.history[0].epoch == 20);
  CHECK(r.history[1].epoch == 40);
  CHECK(r.history[2].epoch == 45);
  double best_valid = 0.0, best_test = 0.0;
  for (const auto& m : r.history) {
    best_valid = std::max(best_valid, m.valid_accuracy);
    best_test = std::max(best_test, m.test_accuracy);
    CHECK(m.test_accuracies.size() == 1);
  }
  CHECK(r.selected_valid.valid_accuracy == best_valid);
  CHECK(r.selected_test.test_accuracy == best_test);
  CHECK(r.to_json()["history"].size() == 3);
}

TEST_CASE("linear ERM on TwoBits settles on the pooled Bayes rule") {
  const EnvironmentSet set = small_twobits();
  MethodConfig cfg = small_config(300);
  cfg.hidden = {};
  cfg.train.learning_rate = 0.05;
  const MethodResult r = train_method(set, {}, MethodSpec{}, cfg);
  // pooled over the training environments, sign(X1) is the Bayes rule
  CHECK(r.history.back().train_accuracy > 0.85);
  CHECK(std::abs(r.history.back().test_accuracy - 0.9) < 0.05);
}

TEST_CASE("non-finite objectives abort") {
  EnvironmentSet set = small_twobits();
  set.envs[0].data.x(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(train_method(set, {}, MethodSpec{}, small_config(3)), NumericalError);
}

TEST_CASE("penalty_sweep") {
  const EnvironmentSet set = small_twobits();
  MethodSpec spec;
  spec.method = MethodKind::kVrex;
  const std::vector<double> one{10.0};
  const SweepTable t1 = penalty_sweep(set, {}, spec, one, small_config(5));
  CHECK(t1.rows.size() == 1);
  CHECK(t1.by_valid == 0);
  const std::vector<double> three{0.0, 10.0, 100.0};
  const SweepTable t3 = penalty_sweep(set, {}, spec, three, small_config(5));
  REQUIRE(t3.rows.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(t3.rows[i].weight == three[i]);
  const auto j = t3.to_json();
  CHECK(j["selection"]["valid"]["rule"].is_string());
  CHECK(j["selection"]["test_peek"]["rule"].is_string());
  CHECK_THROWS_AS(penalty_sweep(set, {}, spec, std::span<const double>{}, small_config(5)), InvalidArgument);
  CHECK(default_vrex_grid() == std::vector<double>{1000, 5000, 10000, 50000, 100000});
}

TEST_CASE("Taylor check: quadratic loss recovers g'Hg / 2") {
  Rng rng(7);
  Dataset d;
  d.x = random_matrix(50, 3, rng);
  d.y = random_matrix(50, 1, rng).col(0);
  d.env.assign(50, 0);
  const MlpNet net = MlpNet::xavier(MlpShape{3, {}, 1, 1, Activation::kRelu}, 3);
  // analytic gradient and Hessian of mean (z - y)^2 in (w, b)
  Matrix xa(50, 4);
  xa << d.x, Matrix::Ones(50, 1);
  Vector theta(4);
  theta << net.params().heads[0].weight.row(0).transpose(), net.params().heads[0].bias;
  const Vector g = 2.0 / 50.0 * xa.transpose() * (xa * theta - d.y);
  const Matrix h = 2.0 / 50.0 * xa.transpose() * xa;
  const double expected = 0.5 * g.dot(h * g);
  const std::vector<double> alphas{0.1, 0.05, 0.025, 0.0125};
  for (const auto& row : taylor_interaction_check(net, d, d, alphas, LossKind::kMse)) {
    CHECK(std::abs(row.ratio - expected) < 0.1 * expected);
    CHECK(row.ratio == doctest::Approx(expected).epsilon(1e-6));
  }

  // a net that fits env_i exactly has g_i = 0
  Dataset fit = d;
  fit.y = mlp_predict(net, d.x).front().col(0);
  for (const auto& row : taylor_interaction_check(net, fit, d, alphas, LossKind::kMse)) CHECK(row.residual == 0.0);

  CHECK_THROWS_AS(taylor_interaction_check(net, d, d, std::vector<double>{0.1, 0.2}), InvalidArgument);
}

TEST_CASE("Taylor check: halving alpha divides the remainder by about four on smooth nets") {
  Rng rng(8);
  Dataset a, b;
  a.x = random_matrix(80, 4, rng);
  a.y = random_labels(80, rng);
  b.x = random_matrix(80, 4, rng);
  b.y = random_labels(80, rng);
  const MlpNet net = MlpNet::xavier(MlpShape{4, {16, 16}, 1, 1, Activation::kSoftplus}, 9);
  const std::vector<double> alphas{0.08, 0.04, 0.02, 0.01, 0.005};
  const auto rows = taylor_interaction_check(net, a, b, alphas);
  double lo = rows[0].ratio, hi = rows[0].ratio;
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const double shrink = rows[k - 1].residual / rows[k].residual;
    CHECK(shrink >= 3.0);
    CHECK(shrink <= 5.0);
    lo = std::min(lo, rows[k].ratio);
    hi = std::max(hi, rows[k].ratio);
  }
  CHECK(hi / lo <= 2.0);
}
