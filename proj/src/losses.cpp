// bonsai/losses.cpp

// Copyright 2026  The bonsai-forge authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "bonsai/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bonsai {

namespace {

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

// Row-wise log-softmax of `z`.
Matrix log_softmax(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    const double lse = m + std::log((z.row(i).array() - m).exp().sum());
    out.row(i) = z.row(i).array() - lse;
  }
  return out;
}

}  // namespace

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

LossGrad bce_with_logits(const Vector& logits, const Vector& labels) {
  require(logits.size() == labels.size(), "bce_with_logits: length mismatch");
  require(logits.size() > 0, "bce_with_logits: empty input");
  const Index n = logits.size();
  LossGrad r;
  r.grad.resize(n, 1);
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double z = logits[i];
    const double y = labels[i];
    require(y == 0.0 || y == 1.0, "bce_with_logits: labels must be binary");
    total += softplus(z) - y * z;
    r.grad(i, 0) = (sigmoid(z) - y) / static_cast<double>(n);
  }
  r.value = total / static_cast<double>(n);
  return r;
}

LossGrad softmax_cross_entropy(const Matrix& logits, std::span<const int> classes) {
  require(static_cast<Index>(classes.size()) == logits.rows(), "softmax_cross_entropy: length mismatch");
  require(logits.rows() > 0, "softmax_cross_entropy: empty input");
  const Index n = logits.rows();
  const Matrix logp = log_softmax(logits);
  LossGrad r;
  r.grad = logp.array().exp() / static_cast<double>(n);
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const int c = classes[static_cast<std::size_t>(i)];
    require(c >= 0 && c < logits.cols(), "softmax_cross_entropy: class out of range");
    total -= logp(i, c);
    r.grad(i, c) -= 1.0 / static_cast<double>(n);
  }
  r.value = total / static_cast<double>(n);
  return r;
}

LossGrad squared_error(const Matrix& pred, const Matrix& target) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(), "squared_error: shape mismatch");
  require(pred.rows() > 0, "squared_error: empty input");
  const double n = static_cast<double>(pred.rows());
  const Matrix diff = pred - target;
  return {diff.squaredNorm() / n, 2.0 * diff / n};
}

std::string to_string(LossKind k) { return k == LossKind::kBce ? "bce" : "mse"; }

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "bce") return LossKind::kBce;
  if (s == "mse") return LossKind::kMse;
  throw InvalidArgument("unknown loss '" + s + "'");
}

void pointwise_loss(LossKind kind, const Vector& logits, const Vector& labels, Vector* value,
                    Vector* deriv) {
  require(logits.size() == labels.size(), "pointwise_loss: length mismatch");
  const Index n = logits.size();
  if (value) value->resize(n);
  if (deriv) deriv->resize(n);
  for (Index i = 0; i < n; ++i) {
    const double z = logits[i];
    const double y = labels[i];
    if (kind == LossKind::kBce) {
      if (value) (*value)[i] = softplus(z) - y * z;
      if (deriv) (*deriv)[i] = sigmoid(z) - y;
    } else {
      if (value) (*value)[i] = (z - y) * (z - y);
      if (deriv) (*deriv)[i] = 2.0 * (z - y);
    }
  }
}

LossVector LossVector::make(std::vector<double> values, std::vector<std::string> ids) {
  require(values.size() == ids.size(), "LossVector: values and ids differ in length");
  LossVector lv;
  lv.values = std::move(values);
  lv.group_ids = std::move(ids);
  for (std::size_t i = 0; i < lv.values.size(); ++i) {
    if (!std::isfinite(lv.values[i])) {
      throw NumericalError("LossVector: non-finite loss for group '" + lv.group_ids[i] + "'");
    }
    if (lv.values[i] > lv.values[static_cast<std::size_t>(lv.argmax_index)]) {
      lv.argmax_index = static_cast<Index>(i);
    }
  }
  return lv;
}

MixtureWeights MixtureWeights::uniform(Index n) {
  require(n >= 1, "MixtureWeights::uniform: need at least one group");
  return {std::vector<double>(static_cast<std::size_t>(n), 1.0 / static_cast<double>(n))};
}

MixtureWeights MixtureWeights::one_hot(Index n, Index at) {
  require(at >= 0 && at < n, "MixtureWeights::one_hot: index out of range");
  MixtureWeights w{std::vector<double>(static_cast<std::size_t>(n), 0.0)};
  w.lambda[static_cast<std::size_t>(at)] = 1.0;
  return w;
}

void MixtureWeights::validate() const {
  require(!lambda.empty(), "MixtureWeights: empty");
  double sum = 0.0;
  for (double l : lambda) {
    require(l >= 0.0, "MixtureWeights: negative weight");
    sum += l;
  }
  require(std::abs(sum - 1.0) <= 1e-12, "MixtureWeights: weights do not sum to 1");
}

std::vector<double> group_means(const Vector& per_example, std::span<const Group> groups) {
  std::vector<double> out;
  out.reserve(groups.size());
  for (const auto& g : groups) {
    if (g.rows.empty()) throw InvalidArgument("group '" + g.name + "' is empty");
    double s = 0.0;
    for (Index i : g.rows) s += per_example[i];
    out.push_back(s / static_cast<double>(g.rows.size()));
  }
  return out;
}

Vector group_logit_grad(std::span<const Group> groups, std::span<const double> coef,
                        const Vector& deriv) {
  require(groups.size() == coef.size(), "group_logit_grad: one coefficient per group");
  Vector g = Vector::Zero(deriv.size());
  for (std::size_t k = 0; k < groups.size(); ++k) {
    if (coef[k] == 0.0) continue;
    if (groups[k].rows.empty()) throw InvalidArgument("group '" + groups[k].name + "' is empty");
    const double scale = coef[k] / static_cast<double>(groups[k].rows.size());
    for (Index i : groups[k].rows) g[i] += scale * deriv[i];
  }
  return g;
}

LossVector group_losses(const MlpNet& net, const Dataset& data, std::span<const Group> groups,
                        LossKind kind) {
  const Matrix logits = mlp_predict(net, data.x).front();
  Vector per;
  pointwise_loss(kind, logits.col(0), data.y, &per, nullptr);
  std::vector<std::string> ids;
  for (const auto& g : groups) ids.push_back(g.name);
  return LossVector::make(group_means(per, groups), std::move(ids));
}

LossVector group_losses(const MlpNet& net, const EnvironmentSet& envs, LossKind kind) {
  std::vector<double> values;
  std::vector<std::string> ids;
  for (const auto& e : envs.envs) {
    if (e.data.size() == 0) throw InvalidArgument("group '" + e.name + "' is empty");
    const Matrix logits = mlp_predict(net, e.data.x).front();
    Vector per;
    pointwise_loss(kind, logits.col(0), e.data.y, &per, nullptr);
    values.push_back(per.mean());
    ids.push_back(e.name);
  }
  return LossVector::make(std::move(values), std::move(ids));
}

DroValue dro_objective(const LossVector& lv) {
  require(lv.size() > 0, "dro_objective: empty loss vector");
  return {lv.values[static_cast<std::size_t>(lv.argmax_index)], lv.argmax_index};
}

double mixture_objective(const LossVector& lv, const MixtureWeights& w) {
  require(static_cast<Index>(w.lambda.size()) == lv.size(), "mixture_objective: length mismatch");
  w.validate();
  double s = 0.0;
  for (std::size_t i = 0; i < lv.values.size(); ++i) s += w.lambda[i] * lv.values[i];
  return s;
}

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double vrex_objective(const LossVector& lv, double penalty_weight) {
  require(lv.size() >= 1, "vrex_objective: need at least one group");
  require(penalty_weight >= 0.0, "vrex_objective: penalty_weight must be >= 0");
  const double m = mean_of(lv.values);
  double var = 0.0;
  for (double c : lv.values) var += (c - m) * (c - m);
  var /= static_cast<double>(lv.values.size());
  return m + penalty_weight * var;
}

std::vector<double> vrex_coefficients(const LossVector& lv, double penalty_weight) {
  require(lv.size() >= 1, "vrex_coefficients: need at least one group");
  const double m = mean_of(lv.values);
  const double e = static_cast<double>(lv.values.size());
  std::vector<double> c;
  for (double v : lv.values) c.push_back(1.0 / e + penalty_weight * 2.0 * (v - m) / e);
  return c;
}

double groupdro_objective(const LossVector& lv, const MixtureWeights& p) {
  return mixture_objective(lv, p);
}

MixtureWeights groupdro_weight_update(const MixtureWeights& p, const LossVector& lv, double step) {
  require(step > 0.0, "groupdro_weight_update: step must be > 0");
  require(static_cast<Index>(p.lambda.size()) == lv.size(), "groupdro_weight_update: length mismatch");
  p.validate();
  // Shift by the max exponent so large losses cannot overflow.
  double shift = -INFINITY;
  for (std::size_t i = 0; i < p.lambda.size(); ++i) {
    if (p.lambda[i] > 0) shift = std::max(shift, step * lv.values[i]);
  }
  MixtureWeights out{std::vector<double>(p.lambda.size(), 0.0)};
  double z = 0.0;
  for (std::size_t i = 0; i < p.lambda.size(); ++i) {
    out.lambda[i] = p.lambda[i] * std::exp(step * lv.values[i] - shift);
    z += out.lambda[i];
  }
  for (double& l : out.lambda) l /= z;
  // Renormalize once more so the sum is exactly representable as 1 within 1e-12.
  const double s = std::accumulate(out.lambda.begin(), out.lambda.end(), 0.0);
  for (double& l : out.lambda) l /= s;
  return out;
}

LossGrad distill_kl(const Matrix& student_logits, const Matrix& teacher_logits, double tau) {
  require(tau > 0.0, "distill_kl: temperature must be > 0");
  require(student_logits.rows() == teacher_logits.rows() && student_logits.cols() == teacher_logits.cols(),
          "distill_kl: shape mismatch");
  require(student_logits.rows() > 0, "distill_kl: empty input");
  const Index n = student_logits.rows();
  const double dn = static_cast<double>(n);
  LossGrad r;
  r.grad.resize(n, student_logits.cols());
  double total = 0.0;
  if (student_logits.cols() == 1) {
    for (Index i = 0; i < n; ++i) {
      const double t = teacher_logits(i, 0) / tau;
      const double s = student_logits(i, 0) / tau;
      const double p = sigmoid(t);
      const double q = sigmoid(s);
      // log sigmoid(a) = -softplus(-a); log(1 - sigmoid(a)) = -softplus(a)
      const double kl = p * (softplus(s) - softplus(t) + t - s) + (1.0 - p) * (softplus(s) - softplus(t));
      total += kl;
      r.grad(i, 0) = tau * (q - p) / dn;
    }
  } else {
    const Matrix logp = log_softmax(teacher_logits / tau);
    const Matrix logq = log_softmax(student_logits / tau);
    const Matrix p = logp.array().exp();
    const Matrix q = logq.array().exp();
    total = (p.array() * (logp - logq).array()).sum();
    r.grad = tau * (q - p) / dn;
  }
  r.value = tau * tau * std::max(0.0, total) / dn;
  return r;
}

SynthesisLoss synthesis_loss(std::span<const Matrix> head_logits, const PseudoLabelSet& pseudo) {
  pseudo.validate();
  require(static_cast<Index>(head_logits.size()) == pseudo.count(),
          "synthesis_loss: head count does not match pseudo-label count");
  const Index n = pseudo.size();
  const Index na = pseudo.a_size();
  if (na == 0) throw InvalidArgument("synthesis_loss: A is empty; balancing undefined");
  if (na == n) throw InvalidArgument("synthesis_loss: A covers all of D; balancing undefined");
  // Each subset is averaged separately: weight 1/|A| inside A, 1/|D\A| outside.
  Vector weight(n);
  for (Index i = 0; i < n; ++i) {
    weight[i] = pseudo.mask_a[static_cast<std::size_t>(i)] ? 1.0 / static_cast<double>(na)
                                                           : 1.0 / static_cast<double>(n - na);
  }
  SynthesisLoss out;
  for (std::size_t k = 0; k < head_logits.size(); ++k) {
    require(head_logits[k].rows() == n && head_logits[k].cols() == 1, "synthesis_loss: head logits must be n x 1");
    Vector value;
    Vector deriv;
    pointwise_loss(LossKind::kBce, head_logits[k].col(0), pseudo.labels[k], &value, &deriv);
    out.value += value.dot(weight);
    out.grads.emplace_back(deriv.cwiseProduct(weight));
  }
  return out;
}

Index PseudoLabelSet::a_size() const {
  return static_cast<Index>(std::count(mask_a.begin(), mask_a.end(), std::uint8_t{1}));
}

void PseudoLabelSet::validate() const {
  require(!labels.empty(), "PseudoLabelSet: no label vectors");
  require(labels.size() == logits.size(), "PseudoLabelSet: labels and logits differ in count");
  for (std::size_t k = 0; k < labels.size(); ++k) {
    require(labels[k].size() == size() && logits[k].size() == size(),
            "PseudoLabelSet: vector length does not match |D|");
  }
}

}  // namespace bonsai
