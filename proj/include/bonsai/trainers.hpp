// bonsai/trainers.hpp

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

// Downstream training on environment sets: ERM, vREx, GroupDRO and DRO,
// from a random, ERM-pretrained or rich-representation initialization, with
// an optional frozen body ("-cf": only the linear head is trained). Also the
// second-order check of the cross-environment Taylor expansion.

#ifndef BONSAI_TRAINERS_HPP_
#define BONSAI_TRAINERS_HPP_

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bonsai/bonsai.hpp"
#include "bonsai/data.hpp"
#include "bonsai/losses.hpp"
#include "bonsai/mlp.hpp"
#include "bonsai/optim.hpp"

namespace bonsai {

enum class MethodKind { kErm, kVrex, kGroupDro, kDro };

std::string to_string(MethodKind k);
MethodKind method_from_string(const std::string& s);

struct MethodSpec {
  MethodKind method = MethodKind::kErm;
  double penalty_weight = 0.0;  // vREx kappa
  double groupdro_step = 0.01;
  bool frozen = false;
  int pretrain_epochs = 0;  // plain ERM epochs before the method's objective is switched on
  std::vector<double> sweep;  // penalty weights for penalty_sweep

  void validate() const;
};

enum class InitKind { kRandom, kErm, kRepresentation };

std::string to_string(InitKind k);
InitKind init_from_string(const std::string& s);

/// kErm is a random start followed by MethodSpec::pretrain_epochs of ERM.
/// kRepresentation starts from a synthesis network whose heads are replaced
/// by their average.
struct MethodInit {
  InitKind kind = InitKind::kRandom;
  const RichRepresentation* representation = nullptr;
};

struct MethodConfig {
  std::vector<Index> hidden{390, 390};  // used by random and ERM starts
  Activation activation = Activation::kRelu;
  TrainConfig train;  // max_epochs counts method epochs, after pretraining
  int eval_every = 20;
  LossKind loss = LossKind::kBce;
  // Divide the vREx objective by kappa when kappa > 1, as the reference
  // penalty implementations do, so that the weight decay keeps its scale.
  bool rescale_penalty = true;

  void validate() const;
};

struct EpochMetrics {
  int epoch = 0;  // method epoch, 1-based
  double objective = 0.0;
  double penalty = 0.0;  // variance of the environment losses
  std::vector<double> env_losses;
  double train_accuracy = 0.0;
  double valid_accuracy = 0.0;
  double test_accuracy = 0.0;  // mean over test environments
  std::vector<double> test_accuracies;

  nlohmann::json to_json() const;
};

/// Handed to an observer before each optimizer step.
struct StepRecord {
  int step = 0;
  const MlpNet* net = nullptr;   // parameters the gradient was taken at
  const Dataset* data = nullptr;  // rows the net reads (features when frozen)
  std::span<const Group> groups;
  LossVector losses;
  std::vector<double> coefficients;  // d objective / d C_e
  const Gradients* applied = nullptr;
};

using StepObserver = std::function<void(const StepRecord&)>;

struct MethodResult {
  MlpNet model;  // after the last epoch
  std::vector<EpochMetrics> history;
  EpochMetrics selected_valid;  // best validation accuracy, earliest on ties
  EpochMetrics selected_test;   // best test accuracy ("test-peek")
  MlpNet valid_model;
  MlpNet test_model;

  nlohmann::json to_json() const;
};

/// Optimizes the mean environment loss plus the method's term over the
/// training environments, evaluating every cfg.eval_every method epochs and
/// at the last one. Throws NumericalError on a non-finite objective.
MethodResult train_method(const EnvironmentSet& envs, const MethodInit& init, const MethodSpec& spec,
                          const MethodConfig& cfg, const StepObserver& observer = {});

struct SweepRow {
  double weight = 0.0;
  MethodResult result;
};

struct SweepTable {
  std::vector<SweepRow> rows;
  std::size_t by_valid = 0;  // row whose valid-selected epoch has the best validation accuracy
  std::size_t by_test = 0;   // row whose test-peek epoch has the best test accuracy

  nlohmann::json to_json() const;
};

/// One train_method run per entry of `weights`.
SweepTable penalty_sweep(const EnvironmentSet& envs, const MethodInit& init, const MethodSpec& spec,
                         std::span<const double> weights, const MethodConfig& cfg);

/// 10000 x {0.1, 0.5, 1, 5, 10}.
std::vector<double> default_vrex_grid();

struct TaylorRow {
  double alpha = 0.0;
  double residual = 0.0;  // |L_j(theta - alpha g_i) - L_j(theta) + alpha <g_i, g_j>|
  double ratio = 0.0;     // residual / alpha^2
};

/// Second-order remainder of the first-order expansion of L_j after a step on
/// L_i, for each alpha (> 0, decreasing). Losses are means over head 0.
std::vector<TaylorRow> taylor_interaction_check(const MlpNet& net, const Dataset& env_i, const Dataset& env_j,
                                                std::span<const double> alphas, LossKind kind = LossKind::kBce);

}  // namespace bonsai

#endif  // BONSAI_TRAINERS_HPP_
