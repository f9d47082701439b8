// Shared helpers for the unit and acceptance tests.

#ifndef BONSAI_TEST_SUPPORT_HPP_
#define BONSAI_TEST_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>

#include "bonsai/common.hpp"
#include "bonsai/losses.hpp"
#include "bonsai/mlp.hpp"
#include "bonsai/rng.hpp"

namespace bonsai::testing {

inline Matrix random_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

inline Vector random_labels(Index n, Rng& rng) {
  Vector y(n);
  for (Index i = 0; i < n; ++i) y[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
  return y;
}

/// Labels drawn from a logistic model on `x` with random coefficients of
/// size `scale`; small scales keep the classes overlapping.
inline Vector logistic_labels(const Matrix& x, Rng& rng, double scale = 1.0) {
  Vector beta(x.cols());
  for (Index j = 0; j < beta.size(); ++j) beta[j] = scale * rng.normal();
  const Vector z = x * beta;
  Vector y(x.rows());
  for (Index i = 0; i < y.size(); ++i) y[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-z[i]))) ? 1.0 : 0.0;
  return y;
}

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
inline double max_relative_error(const Vector& a, const Vector& b, double floor = 1e-6) {
  double worst = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

/// Naive triple-loop affine map: out = x W^T + b.
inline Matrix naive_affine(const Matrix& x, const Matrix& w, const Vector& b) {
  Matrix out(x.rows(), w.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index o = 0; o < w.rows(); ++o) {
      double s = b[o];
      for (Index j = 0; j < x.cols(); ++j) s += x(i, j) * w(o, j);
      out(i, o) = s;
    }
  }
  return out;
}

enum class TestLoss { kBce, kSoftmaxCe, kMse };

/// Scalar loss on head logits plus its logit gradients. Targets are derived
/// deterministically from `seed` so the same closure can be re-evaluated.
struct LossSetup {
  TestLoss kind;
  Vector binary_labels;
  std::vector<int> classes;
  Matrix targets;

  double evaluate(const std::vector<Matrix>& logits, std::vector<Matrix>* grads) const {
    double total = 0.0;
    if (grads) grads->clear();
    for (const auto& z : logits) {
      LossGrad lg;
      switch (kind) {
        case TestLoss::kBce:
          lg = bce_with_logits(z.col(0), binary_labels);
          break;
        case TestLoss::kSoftmaxCe:
          lg = softmax_cross_entropy(z, classes);
          break;
        case TestLoss::kMse:
          lg = squared_error(z, targets);
          break;
      }
      total += lg.value;
      if (grads) grads->push_back(lg.grad);
    }
    return total;
  }
};

inline LossSetup make_loss_setup(TestLoss kind, Index n, Index head_dim, Rng& rng) {
  LossSetup s{kind, {}, {}, {}};
  s.binary_labels = random_labels(n, rng);
  for (Index i = 0; i < n; ++i) s.classes.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(head_dim))));
  s.targets = random_matrix(n, head_dim, rng);
  return s;
}

/// Analytic (backprop) and finite-difference gradients of `setup` at `net`.
inline std::pair<Vector, Vector> gradient_pair(const MlpNet& net, const Matrix& x, const LossSetup& setup,
                                               double eps = 1e-5) {
  const ForwardResult fr = mlp_forward(net, x);
  std::vector<Matrix> dl;
  setup.evaluate(fr.logits, &dl);
  const Vector analytic = mlp_backward(net, fr.cache, dl).flatten();
  MlpNet probe = net;
  auto loss = [&](const Vector& p) {
    probe.mutable_params().assign(p);
    return setup.evaluate(mlp_predict(probe, x), nullptr);
  };
  const Vector numeric = finite_diff_grad(loss, net.params().flatten(), eps);
  return {analytic, numeric};
}

}  // namespace bonsai::testing

#endif  // BONSAI_TEST_SUPPORT_HPP_
