// bonsai/probe.hpp

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

// Linear probes over fixed features and the relations they induce between
// representations: optimal probe costs, information ordering, the minimax
// equality between worst-group and pessimal-mixture costs, and the max-min
// chain over a finite family of feature maps.
//
// Every cost here is the ridge-regularized logistic objective
//   C(w, b) = mean_i log(1 + exp(-s_i (x_i.w + b))) + ridge / 2 (|w|^2 + b^2),
// so that the minimizer is unique. Group costs C_i carry the same ridge term,
// which makes sum_i lambda_i C_i the ridge objective of the lambda-mixture.

#ifndef BONSAI_PROBE_HPP_
#define BONSAI_PROBE_HPP_

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bonsai/common.hpp"

namespace bonsai {

struct ProbeOptions {
  double ridge = 1e-6;
  bool intercept = true;  // the bias is penalized like the weights
  double tolerance = 1e-8;  // on the gradient norm
  int max_iterations = 200;

  void validate() const;
};

struct ProbeResult {
  double optimal_cost = 0.0;  // regularized objective at the minimizer
  double data_cost = 0.0;     // mean logistic loss alone
  Vector weights;
  double bias = 0.0;
  bool converged = false;
  double grad_norm = 0.0;
  int iterations = 0;

  Vector logits(const Matrix& features) const;
  nlohmann::json to_json() const;
};

/// Damped Newton on the ridge-logistic objective. Throws NumericalError with
/// the last gradient norm if the tolerance is not met within the iteration cap.
ProbeResult optimal_linear_probe(const Matrix& features, const Vector& labels, const ProbeOptions& opts = {});

/// Probe on the column-wise concatenation of `blocks`.
ProbeResult concat_probe(std::span<const Matrix> blocks, const Vector& labels, const ProbeOptions& opts = {});

/// Mean logistic loss of `logits` against {0,1} labels.
double mean_logistic_loss(const Vector& logits, const Vector& labels);

enum class InfoRelationKind {
  kPhi1AddsInfo,     // C*(1 u 2) = C*(1) < C*(2)
  kPhi2ContainsAll,  // C*(1 u 2) = C*(2) < C*(1)
  kEquivalent,       // all three equal
  kIncomparable,     // each adds information to the other
};

std::string to_string(InfoRelationKind k);

struct InfoRelation {
  InfoRelationKind kind = InfoRelationKind::kIncomparable;
  double c1 = 0.0, c2 = 0.0, c12 = 0.0;
  double tolerance = 0.0;

  nlohmann::json to_json() const;
};

/// Classifies the pair by its three probe costs; two costs are equal when
/// they differ by at most `tol`.
InfoRelation info_relation(const Matrix& phi1, const Matrix& phi2, const Vector& labels, double tol = 1e-4,
                           const ProbeOptions& opts = {});

/// Per-group features and labels of one feature map.
struct GroupedFeatures {
  std::vector<Matrix> x;
  std::vector<Vector> y;

  std::size_t groups() const { return x.size(); }
  Index dim() const { return x.empty() ? 0 : x.front().cols(); }
  void validate() const;
};

struct MinimaxOptions {
  ProbeOptions probe;
  double step = 0.1;  // projected ascent on lambda
  int ascent_iterations = 2000;
  // Temperatures of the smoothed max used to approach min_w max_i C_i.
  std::vector<double> temperatures{1, 10, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8};

  void validate() const;
};

struct MinimaxResult {
  double r_rw = 0.0;   // max_lambda min_w sum_i lambda_i C_i(w), best ascent iterate
  double r_dro = 0.0;  // max_i C_i at the computed worst-group minimizer
  std::vector<double> lambda;       // lambda*
  Vector w_dro;                     // weights then bias (if any)
  Vector w_rw;                      // inner minimizer at lambda*
  std::vector<double> costs_at_dro;  // C_i(w_dro)
  std::vector<double> ascent_trace;  // min_w mixture cost per ascent iteration

  nlohmann::json to_json() const;
};

/// Computes both sides of the worst-group / pessimal-mixture equality for a
/// linear probe. R_rw uses projected gradient ascent on the simplex with an
/// exact (Newton) inner minimization; R_dro minimizes a log-sum-exp smoothing
/// of max_i C_i with increasing temperature and reports the exact max at the
/// final point, which is an upper bound on the true value.
MinimaxResult minimax_check(const GroupedFeatures& groups, const MinimaxOptions& opts = {});

/// Exact inner problem min_w sum_i lambda_i C_i(w); returns the value and the
/// per-group costs at the minimizer through `costs`.
double mixture_min(const GroupedFeatures& groups, std::span<const double> lambda, const ProbeOptions& opts,
                   std::vector<double>* costs = nullptr, Vector* w = nullptr);

/// C_i(w) for every group.
std::vector<double> group_probe_costs(const GroupedFeatures& groups, const Vector& w, const ProbeOptions& opts);

struct FamilyMaxMin {
  double r_dro = 0.0;   // min over maps of min_w max_i C_i
  double maxmin = 0.0;  // max_lambda min over maps and w of the mixture
  double r_rw = 0.0;    // min over maps and w of the lambda*-mixture
  bool chain_ok = false;
  double tolerance = 0.0;
  std::vector<double> per_map_dro;
  std::vector<double> lambda_base;    // lambda* of the base map
  std::vector<double> lambda_maxmin;  // maximizer found for the max-min

  nlohmann::json to_json() const;
};

/// The chain R'_dro >= max-min >= R'_rw over a finite family of feature
/// maps, all evaluated by enumeration over the family. lambda* comes from
/// minimax_check on family[base].
FamilyMaxMin finite_family_maxmin(std::span<const GroupedFeatures> family, std::size_t base = 0,
                                  const MinimaxOptions& opts = {}, double tol = 1e-9);

struct EnsembleCheck {
  ProbeResult probe1, probe2;
  std::vector<double> lambdas;
  std::vector<double> costs;  // mean logistic loss of lambda f1 + (1 - lambda) f2

  nlohmann::json to_json() const;
};

EnsembleCheck ensemble_check(const Matrix& phi1, const Matrix& phi2, const Vector& labels,
                             std::span<const double> lambdas, const ProbeOptions& opts = {});

/// Euclidean projection onto the probability simplex.
std::vector<double> project_simplex(std::span<const double> v);

}  // namespace bonsai

#endif  // BONSAI_PROBE_HPP_
