// bonsai/optim.hpp

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

#ifndef BONSAI_OPTIM_HPP_
#define BONSAI_OPTIM_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bonsai/mlp.hpp"

namespace bonsai {

enum class OptimizerKind { kAdam, kSgd };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double learning_rate = 5e-4;
  double l2_weight_decay = 0.0;
  int max_epochs = 100;
  /// 0 means full batch.
  Index batch_size = 0;
  /// Early stopping: epochs without validation improvement before stopping.
  int patience = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AdamState {
  std::vector<Vector> first_moment;
  std::vector<Vector> second_moment;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

enum class UpdateScope { kAll, kHeadsOnly };

/// One Adam step on flat parameter blocks. The L2 term `l2 * param` is added
/// to the gradient before the moment updates.
void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, AdamState& state,
               const TrainConfig& cfg);

void adam_step(MlpNet& net, const Gradients& grads, AdamState& state, const TrainConfig& cfg,
               UpdateScope scope = UpdateScope::kAll);

/// params <- params - lr * grads.
void sgd_step(std::span<const std::span<double>> params,
              std::span<const std::span<const double>> grads, double lr);

void sgd_step(MlpNet& net, const Gradients& grads, double lr,
              UpdateScope scope = UpdateScope::kAll);

/// The optimizer selected by TrainConfig::optimizer, with its state. For SGD
/// the L2 term is added to the gradient the same way as for Adam.
struct Optimizer {
  AdamState adam;

  void step(MlpNet& net, const Gradients& grads, const TrainConfig& cfg,
            UpdateScope scope = UpdateScope::kAll);
};

}  // namespace bonsai

#endif  // BONSAI_OPTIM_HPP_
