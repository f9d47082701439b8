// bonsai/bonsai.hpp

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

// Rich feature construction: discovery rounds that grow a pool of groups by
// splitting the data on each model's mistakes, then a synthesis round that
// distills every discovery model into one feature extractor with one linear
// head per model.

#ifndef BONSAI_BONSAI_HPP_
#define BONSAI_BONSAI_HPP_

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bonsai/data.hpp"
#include "bonsai/mlp.hpp"
#include "bonsai/optim.hpp"
#include "bonsai/pseudo_labels.hpp"
#include "bonsai/rerm.hpp"

namespace bonsai {

/// Correct (A) and incorrect (B) rows of a dataset under a model; a logit
/// >= 0 predicts class 1.
struct CorrectnessSplit {
  std::vector<Index> a;
  std::vector<Index> b;
};

CorrectnessSplit split_by_correctness(const MlpNet& f, const Dataset& d);

/// Named groups over the base training and validation datasets.
struct GroupPool {
  std::vector<RermGroup> groups;
  std::vector<std::string> provenance;  // model that produced each group

  std::size_t size() const { return groups.size(); }
};

struct DiscoveryConfig {
  int rounds = 2;                      // K
  std::vector<int> epochs{50, 500};    // per round; the last entry repeats
  std::vector<Index> hidden{390, 390};
  Activation activation = Activation::kRelu;
  TrainConfig train;                   // max_epochs is overridden per round
  LossKind loss = LossKind::kBce;

  void validate() const;
  int epochs_for(int round) const;  // round is 1-based
};

struct DiscoveryRound {
  int round = 0;
  RermReport rerm;
  Index a_train = 0, b_train = 0, a_valid = 0, b_valid = 0;
  double train_accuracy = 0.0, valid_accuracy = 0.0;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

struct DiscoveryResult {
  std::vector<MlpNet> models;
  GroupPool pool;
  // Per round: correctness mask over the training rows (the A_k sets).
  std::vector<std::vector<std::uint8_t>> correct_train;
  std::vector<DiscoveryRound> rounds;
  bool stopped_early = false;  // round 1 was perfect on train and valid
};

DiscoveryResult discovery(const Dataset& train, const Dataset& valid, const DiscoveryConfig& cfg);

/// Hard predictions and logits of every model on `d`, and A: the rows every
/// model classifies correctly.
PseudoLabelSet make_pseudo_labels(std::span<const MlpNet> models, const Dataset& d);

struct SynthesisConfig {
  std::vector<Index> hidden{390, 390};
  Activation activation = Activation::kRelu;
  TrainConfig train;
  double distill_weight = 0.0;  // weight of the KL term on teacher logits; 0 disables it
  double tau = 10.0;

  void validate() const;
};

/// Trained feature extractor with K linear heads.
struct RichRepresentation {
  MlpNet net;
  int k = 0;
  nlohmann::json report;

  /// Phi(x), the input of the heads.
  Matrix features(const Matrix& x) const;
};

/// Trains a fresh network with one head per pseudo-label vector on the
/// synthesis loss (plus the optional distillation term). Only the inputs and
/// the pseudo-labels are visible here; true labels never reach this function.
RichRepresentation synthesis(const Matrix& x, const PseudoLabelSet& pseudo, const SynthesisConfig& cfg);

struct BonsaiConfig {
  DiscoveryConfig discovery;
  SynthesisConfig synthesis;
};

/// Discovery on the pooled training environments (validated on the pooled
/// validation environments), then synthesis on the pooled training inputs.
/// The report carries per-round train / valid / test accuracies.
RichRepresentation bonsai_run(const EnvironmentSet& set, const BonsaiConfig& cfg);

/// Accuracy of head `head` with a logit >= 0 threshold.
double binary_accuracy(const MlpNet& net, const Dataset& d, int head = 0);

}  // namespace bonsai

#endif  // BONSAI_BONSAI_HPP_
