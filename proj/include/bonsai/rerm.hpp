// bonsai/rerm.hpp

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

// Robust empirical risk minimization: gradient steps on the worst group's
// loss, with the returned model chosen by the worst validation group loss.

#ifndef BONSAI_RERM_HPP_
#define BONSAI_RERM_HPP_

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bonsai/data.hpp"
#include "bonsai/losses.hpp"
#include "bonsai/mlp.hpp"
#include "bonsai/optim.hpp"

namespace bonsai {

/// A group with rows in both the training and the validation dataset.
struct RermGroup {
  std::string name;
  std::vector<Index> train_rows;
  std::vector<Index> valid_rows;
};

struct RermReport {
  int best_epoch = 0;  // 1-based; the returned parameters are those after this epoch
  double best_valid_dro = 0.0;
  int epochs_run = 0;
  std::vector<LossVector> train_history;  // before each epoch's update (last step in minibatch mode)
  std::vector<LossVector> valid_history;  // after each epoch
  std::vector<Index> active_trace;
  std::string checkpoint;  // set by callers that persist the model

  nlohmann::json to_json() const;
};

struct RermResult {
  MlpNet model;
  RermReport report;
};

/// Evaluates every group's mean loss on `data`, backpropagates the loss of
/// the worst group only and applies one optimizer step. Returns the loss
/// vector measured before the step.
LossVector dro_gradient_step(MlpNet& net, const Dataset& data, std::span<const Group> groups, Optimizer& opt,
                             const TrainConfig& cfg, LossKind kind = LossKind::kBce);

/// Runs DRO epochs from `init` until cfg.max_epochs or until cfg.patience
/// epochs pass without a strict improvement of the validation max-group loss,
/// then restores the best epoch's parameters.
RermResult rerm_train(const Dataset& train, const Dataset& valid, std::span<const RermGroup> groups, MlpNet init,
                      const TrainConfig& cfg, LossKind kind = LossKind::kBce);

/// Same, from a Xavier initialization seeded by cfg.seed.
RermResult rerm_train(const Dataset& train, const Dataset& valid, std::span<const RermGroup> groups,
                      const MlpShape& shape, const TrainConfig& cfg, LossKind kind = LossKind::kBce);

/// Train and valid groups for a single group covering both datasets.
std::vector<RermGroup> single_rerm_group(const Dataset& train, const Dataset& valid, const std::string& name = "D");

}  // namespace bonsai

#endif  // BONSAI_RERM_HPP_
