#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bonsai/environments.hpp"
#include "bonsai/probe.hpp"
#include "test_support.hpp"

using namespace bonsai;
using namespace bonsai::testing;

namespace {

// Ridge-logistic objective written out directly; w holds the weights then
// the bias.
double direct_cost(const Matrix& x, const Vector& y, const Vector& w, double ridge, bool intercept) {
  double s = 0.0;
  for (Index i = 0; i < x.rows(); ++i) {
    double z = intercept ? w[x.cols()] : 0.0;
    for (Index j = 0; j < x.cols(); ++j) z += x(i, j) * w[j];
    s += std::log(1.0 + std::exp(z)) - y[i] * z;
  }
  return s / static_cast<double>(x.rows()) + 0.5 * ridge * w.squaredNorm();
}

GroupedFeatures random_groups(Index groups, Index dim, Index rows, Rng& rng) {
  GroupedFeatures gf;
  for (Index g = 0; g < groups; ++g) {
    Matrix x = random_matrix(rows, dim, rng);
    x.array() += 0.5 * rng.normal();  // groups differ in location
    gf.y.push_back(logistic_labels(x, rng, 1.5));
    gf.x.push_back(std::move(x));
  }
  return gf;
}

// Keeps the labels of `gf` and replaces the features by x -> x M.
GroupedFeatures remap(const GroupedFeatures& gf, const Matrix& m) {
  GroupedFeatures out;
  out.y = gf.y;
  for (const auto& x : gf.x) out.x.push_back(x * m);
  return out;
}

}  // namespace

TEST_CASE("optimal_linear_probe matches a dense grid search") {
  Rng rng(11);
  const Matrix x = random_matrix(30, 2, rng);
  const Vector y = logistic_labels(x, rng, 1.0);
  const ProbeOptions opts;
  const ProbeResult r = optimal_linear_probe(x, y, opts);
  CHECK(r.converged);
  CHECK(r.grad_norm < 1e-8);

  double best = std::numeric_limits<double>::infinity();
  Vector w(3);
  const double h = 0.02;
  for (int a = -150; a <= 150; ++a) {
    for (int b = -150; b <= 150; ++b) {
      for (int c = -150; c <= 150; ++c) {
        w << a * h, b * h, c * h;
        best = std::min(best, direct_cost(x, y, w, opts.ridge, true));
      }
    }
  }
  CHECK(r.optimal_cost <= best + 1e-12);
  CHECK(best - r.optimal_cost < 1e-3);
  Vector theta(3);
  theta << r.weights, r.bias;
  CHECK(direct_cost(x, y, theta, opts.ridge, true) == doctest::Approx(r.optimal_cost).epsilon(1e-12));
}

TEST_CASE("probe degenerate cases") {
  Rng rng(12);
  const Matrix x = random_matrix(40, 3, rng);
  const Vector ones = Vector::Ones(40);
  double last = 0.0;
  for (double ridge : {1e-6, 1e-4, 1e-2, 1.0}) {
    ProbeOptions o;
    o.ridge = ridge;
    const double c = optimal_linear_probe(x, ones, o).optimal_cost;
    CHECK(c <= std::log(2.0));
    CHECK(c > last);  // monotone in the ridge
    last = c;
  }

  Matrix two(2, 1);
  two << 1.0, -1.0;
  ProbeOptions tiny;
  tiny.ridge = 1e-8;
  CHECK(optimal_linear_probe(two, (Vector(2) << 1, 0).finished(), tiny).optimal_cost < 1e-3);

  ProbeOptions capped;
  capped.max_iterations = 1;
  CHECK_THROWS_AS(optimal_linear_probe(x, logistic_labels(x, rng), capped), NumericalError);
  ProbeOptions bad;
  bad.ridge = 0.0;
  CHECK_THROWS_AS(optimal_linear_probe(x, ones, bad), InvalidArgument);
}

TEST_CASE("concat_probe: padding, redundancy and monotonicity") {
  Rng rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    const Matrix a = random_matrix(60, 3, rng), b = random_matrix(60, 2, rng);
    const Vector y = logistic_labels(a, rng, 1.0);
    const double ca = optimal_linear_probe(a, y).optimal_cost;
    const double cb = optimal_linear_probe(b, y).optimal_cost;
    const Matrix ab[] = {a, b};
    CHECK(concat_probe(ab, y).optimal_cost <= std::min(ca, cb) + 1e-6);

    const Matrix padded[] = {a, Matrix::Zero(60, 4)};
    CHECK(concat_probe(padded, y).optimal_cost == doctest::Approx(ca).epsilon(1e-10));
    // duplicating columns lets (w/2, w/2) halve the ridge cost of the weights;
    // the data term cannot drop below its unregularized value
    const Matrix twice[] = {a, a};
    const ProbeResult pa = optimal_linear_probe(a, y);
    const double caa = concat_probe(twice, y).optimal_cost;
    CHECK(ca - caa >= 0.25 * 1e-6 * pa.weights.squaredNorm() - 1e-12);
    CHECK(ca - caa <= 0.5 * 1e-6 * (pa.weights.squaredNorm() + pa.bias * pa.bias) + 1e-12);
  }
}

TEST_CASE("info_relation") {
  Rng rng(14);
  const Matrix phi = random_matrix(200, 3, rng);
  const Vector y = logistic_labels(phi, rng, 2.0);
  CHECK(info_relation(phi, phi, y).kind == InfoRelationKind::kEquivalent);

  Matrix mix = random_matrix(3, 3, rng);
  mix.diagonal().array() += 3.0;  // well conditioned
  CHECK(info_relation(phi, phi * mix, y).kind == InfoRelationKind::kEquivalent);

  Matrix reveal(200, 1);
  reveal.col(0) = 2.0 * y.array() - 1.0;
  const Matrix noise = random_matrix(200, 2, rng);
  const InfoRelation r = info_relation(reveal, noise, y);
  CHECK(r.kind == InfoRelationKind::kPhi1AddsInfo);
  CHECK(info_relation(noise, reveal, y).kind == InfoRelationKind::kPhi2ContainsAll);
  CHECK(std::abs(r.c12 - r.c1) <= r.tolerance);
  CHECK(r.c2 - r.c12 > r.tolerance);

  // two halves of the signal: each adds information to the other
  const Matrix left = phi.leftCols(1), right = phi.rightCols(2);
  const Vector ys = logistic_labels(phi, rng, 3.0);
  const InfoRelation both = info_relation(left, right, ys);
  if (both.c1 - both.c12 > 1e-4 && both.c2 - both.c12 > 1e-4) CHECK(both.kind == InfoRelationKind::kIncomparable);
  CHECK(both.to_json()["relation"].is_string());
}

TEST_CASE("project_simplex") {
  const std::vector<double> in{0.5, 0.2, -0.3};
  const auto p = project_simplex(in);
  CHECK(p[0] == doctest::Approx(0.65));
  CHECK(p[1] == doctest::Approx(0.35));
  CHECK(p[2] == 0.0);
  const std::vector<double> inside{0.25, 0.75};
  CHECK(project_simplex(inside) == inside);
}

TEST_CASE("minimax_check: identical groups") {
  Rng rng(15);
  const Matrix x = random_matrix(50, 2, rng);
  const Vector y = logistic_labels(x, rng);
  GroupedFeatures gf{{x, x, x}, {y, y, y}};
  const MinimaxResult r = minimax_check(gf);
  const double single = optimal_linear_probe(x, y).optimal_cost;
  CHECK(r.r_rw == doctest::Approx(single).epsilon(1e-9));
  CHECK(r.r_dro == doctest::Approx(single).epsilon(1e-6));
  for (double l : r.lambda) CHECK(l == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("minimax_check: two groups in one dimension against a (w, lambda) grid") {
  Rng rng(16);
  GroupedFeatures gf;
  for (int g = 0; g < 2; ++g) {
    Matrix x = random_matrix(25, 1, rng);
    Vector y(25);
    // opposite preferred signs in the two groups
    for (Index i = 0; i < 25; ++i) y[i] = rng.bernoulli(1.0 / (1.0 + std::exp((g == 0 ? -2.0 : 1.0) * x(i, 0)))) ? 1 : 0;
    gf.x.push_back(x);
    gf.y.push_back(y);
  }
  MinimaxOptions opts;
  opts.probe.intercept = false;
  const MinimaxResult r = minimax_check(gf, opts);

  std::vector<double> c1, c2;
  for (int k = -50000; k <= 50000; ++k) {
    const Vector w = Vector::Constant(1, k * 1e-4);
    c1.push_back(direct_cost(gf.x[0], gf.y[0], w, opts.probe.ridge, false));
    c2.push_back(direct_cost(gf.x[1], gf.y[1], w, opts.probe.ridge, false));
  }
  double dro = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < c1.size(); ++k) dro = std::min(dro, std::max(c1[k], c2[k]));
  double rw = -std::numeric_limits<double>::infinity();
  for (int l = 0; l <= 1000; ++l) {
    const double lam = l * 1e-3;
    double inner = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < c1.size(); ++k) inner = std::min(inner, lam * c1[k] + (1 - lam) * c2[k]);
    rw = std::max(rw, inner);
  }
  CHECK(std::abs(r.r_dro - dro) < 1e-3);
  CHECK(std::abs(r.r_rw - rw) < 1e-3);
  CHECK(std::abs(r.r_rw - r.r_dro) < 1e-3);
}

TEST_CASE("minimax_check: random instances, equality and mixture dominance") {
  Rng rng(17);
  for (int trial = 0; trial < 8; ++trial) {
    const GroupedFeatures gf = random_groups(2 + trial % 4, 1 + trial, 30, rng);
    const MinimaxResult r = minimax_check(gf);
    CHECK(r.r_rw <= r.r_dro + 1e-9);
    CHECK(r.r_dro - r.r_rw < 1e-3);
    double s = 0.0;
    for (double l : r.lambda) s += l;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    for (int a = 0; a <= 10; ++a) {
      std::vector<double> lam(r.costs_at_dro.size(), 0.0);
      lam[0] = a / 10.0;
      lam[1] = 1.0 - lam[0];
      double mix = 0.0;
      for (std::size_t g = 0; g < lam.size(); ++g) mix += lam[g] * r.costs_at_dro[g];
      CHECK(mix <= r.r_dro + 1e-15);
    }
  }
  CHECK_THROWS_AS(minimax_check(GroupedFeatures{{Matrix::Ones(3, 1)}, {Vector::Ones(3)}}), InvalidArgument);
}

TEST_CASE("mixture_min is the exact inner problem") {
  Rng rng(18);
  const GroupedFeatures gf = random_groups(3, 2, 40, rng);
  const std::vector<double> lam{0.2, 0.5, 0.3};
  std::vector<double> costs;
  Vector w;
  const double v = mixture_min(gf, lam, ProbeOptions{}, &costs, &w);
  CHECK(costs == group_probe_costs(gf, w, ProbeOptions{}));
  // pooled probe with rows weighted by lambda_g / n_g equals the mixture
  double direct = 0.0;
  for (std::size_t g = 0; g < 3; ++g) direct += lam[g] * direct_cost(gf.x[g], gf.y[g], w, 1e-6, true);
  CHECK(v == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("finite_family_maxmin") {
  Rng rng(19);
  const GroupedFeatures base = random_groups(3, 3, 30, rng);
  const GroupedFeatures one[] = {base};
  const FamilyMaxMin single = finite_family_maxmin(one);
  CHECK(single.chain_ok);
  CHECK(single.r_dro - single.r_rw < 1e-3);
  CHECK(single.maxmin - single.r_rw < 1e-3);

  for (int trial = 0; trial < 3; ++trial) {
    const GroupedFeatures b = random_groups(3, 3, 30, rng);
    const GroupedFeatures fam[] = {b, remap(b, random_matrix(3, 2, rng)), remap(b, random_matrix(3, 1, rng))};
    const FamilyMaxMin f = finite_family_maxmin(fam);
    CHECK(f.chain_ok);
    CHECK(f.r_dro == *std::min_element(f.per_map_dro.begin(), f.per_map_dro.end()));
  }

  // Each map reads the signal of one group only: every map has a bad group,
  // while mixtures can average the two, so the first inequality is strict.
  GroupedFeatures g1, g2;
  for (int g = 0; g < 2; ++g) {
    const Matrix x = random_matrix(60, 2, rng);
    Vector y(60);
    for (Index i = 0; i < 60; ++i) y[i] = x(i, g) > 0 ? 1.0 : 0.0;
    g1.x.push_back(x.col(0));
    g2.x.push_back(x.col(1));
    g1.y.push_back(y);
    g2.y.push_back(y);
  }
  const GroupedFeatures split[] = {g1, g2};
  const FamilyMaxMin s = finite_family_maxmin(split);
  CHECK(s.chain_ok);
  CHECK(s.r_dro - s.maxmin > 0.05);

  CHECK_THROWS_AS(finite_family_maxmin(std::span<const GroupedFeatures>{}), InvalidArgument);
}

TEST_CASE("finite family on TwoBits: the joint map attains the max-min") {
  TwoBitsSpec spec;
  spec.n_per_env = 400;
  spec.n_valid_per_env = 10;
  const EnvironmentSet set = make_twobits(spec);
  GroupedFeatures shape, color, both;
  for (const Environment* e : set.with_role(Role::kTrain)) {
    shape.x.push_back(e->data.x.col(0));
    color.x.push_back(e->data.x.col(1));
    both.x.push_back(e->data.x);
    for (GroupedFeatures* gf : {&shape, &color, &both}) gf->y.push_back(e->data.y);
  }
  const GroupedFeatures fam[] = {color, shape, both};
  const FamilyMaxMin f = finite_family_maxmin(fam, 2);
  CHECK(f.chain_ok);
  // the joint map is the best map for every lambda, so the chain collapses
  CHECK(f.r_dro == doctest::Approx(f.per_map_dro[2]));
  CHECK(f.r_dro - f.maxmin < 1e-3);
}

TEST_CASE("ensemble_check") {
  Rng rng(20);
  const Matrix phi = random_matrix(150, 3, rng);
  const Vector y = logistic_labels(phi, rng, 1.5);
  const std::vector<double> grid{0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0};
  const EnsembleCheck same = ensemble_check(phi, phi, y, grid);
  for (double c : same.costs) CHECK(c == doctest::Approx(same.probe1.data_cost).epsilon(1e-12));

  Matrix mix = random_matrix(3, 3, rng);
  mix.diagonal().array() += 3.0;
  const EnsembleCheck remix = ensemble_check(phi, phi * mix, y, grid);
  const auto [lo, hi] = std::minmax_element(remix.costs.begin(), remix.costs.end());
  CHECK(*hi - *lo < 1e-6);
  CHECK(remix.to_json()["costs"].size() == grid.size());
}
