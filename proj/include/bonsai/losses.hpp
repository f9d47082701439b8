// bonsai/losses.hpp

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

// Scalar objectives. Every function that returns a gradient returns it with
// respect to the logits it was given; mlp_backward turns that into parameter
// gradients.

#ifndef BONSAI_LOSSES_HPP_
#define BONSAI_LOSSES_HPP_

#include <span>
#include <string>
#include <vector>

#include "bonsai/data.hpp"
#include "bonsai/mlp.hpp"
#include "bonsai/pseudo_labels.hpp"

namespace bonsai {

struct LossGrad {
  double value = 0.0;
  Matrix grad;
};

/// Mean of log(1 + e^z) - y z, stabilized; gradient (sigmoid(z) - y) / n.
LossGrad bce_with_logits(const Vector& logits, const Vector& labels);

/// Mean softmax cross-entropy over rows; `classes[i]` indexes the column.
LossGrad softmax_cross_entropy(const Matrix& logits, std::span<const int> classes);

/// Mean over rows of the squared Euclidean error.
LossGrad squared_error(const Matrix& pred, const Matrix& target);

double sigmoid(double z);

enum class LossKind { kBce, kMse };

std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

/// Per-example loss and its derivative w.r.t. a single output logit.
void pointwise_loss(LossKind kind, const Vector& logits, const Vector& labels, Vector* value,
                    Vector* deriv);

/// Per-group mean losses C_i with the argmax under the smallest-index tie rule.
struct LossVector {
  std::vector<double> values;
  std::vector<std::string> group_ids;
  Index argmax_index = 0;

  static LossVector make(std::vector<double> values, std::vector<std::string> ids);
  Index size() const { return static_cast<Index>(values.size()); }
};

/// Nonnegative weights summing to one.
struct MixtureWeights {
  std::vector<double> lambda;

  static MixtureWeights uniform(Index n);
  static MixtureWeights one_hot(Index n, Index at);
  /// Throws unless entries are >= 0 and sum to 1 within 1e-12.
  void validate() const;
};

/// Means of `per_example` over each group; throws naming an empty group.
std::vector<double> group_means(const Vector& per_example, std::span<const Group> groups);

/// Gradient w.r.t. per-example logits of sum_g coef[g] * C_g, where
/// C_g = mean over group g of the pointwise loss with derivative `deriv`.
Vector group_logit_grad(std::span<const Group> groups, std::span<const double> coef,
                        const Vector& deriv);

/// C_i(net) for every group of `data`, using head 0.
LossVector group_losses(const MlpNet& net, const Dataset& data, std::span<const Group> groups,
                        LossKind kind = LossKind::kBce);

/// One group per environment of the set (all roles).
LossVector group_losses(const MlpNet& net, const EnvironmentSet& envs,
                        LossKind kind = LossKind::kBce);

struct DroValue {
  double value = 0.0;
  Index active_group = 0;
};

/// max_i C_i and its argmax.
DroValue dro_objective(const LossVector& lv);

/// sum_i lambda_i C_i.
double mixture_objective(const LossVector& lv, const MixtureWeights& w);

/// mean(C) + penalty_weight * population variance(C).
double vrex_objective(const LossVector& lv, double penalty_weight);

/// d vrex_objective / d C_e = 1/E + penalty_weight * 2 (C_e - mean) / E.
std::vector<double> vrex_coefficients(const LossVector& lv, double penalty_weight);

/// sum_e p_e C_e, with p treated as constants.
double groupdro_objective(const LossVector& lv, const MixtureWeights& p);

/// Exponentiated-gradient step on the simplex: p_e <- p_e exp(step C_e) / Z.
MixtureWeights groupdro_weight_update(const MixtureWeights& p, const LossVector& lv, double step);

/// tau^2 KL(softmax_tau(teacher) || softmax_tau(student)), mean over rows.
/// Single-column logits are read as the two-class pair (z, 0).
LossGrad distill_kl(const Matrix& student_logits, const Matrix& teacher_logits, double tau);

struct SynthesisLoss {
  double value = 0.0;
  std::vector<Matrix> grads;  // one per head
};

/// sum_k [ mean over A of BCE(head_k, y^k) + mean over D\A of BCE(head_k, y^k) ].
SynthesisLoss synthesis_loss(std::span<const Matrix> head_logits, const PseudoLabelSet& pseudo);

}  // namespace bonsai

#endif  // BONSAI_LOSSES_HPP_
