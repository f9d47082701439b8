// bonsai/bonsai.cpp

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

#include "bonsai/bonsai.hpp"

#include <algorithm>
#include <cmath>

#include "bonsai/losses.hpp"
#include "bonsai/rng.hpp"

namespace bonsai {

double binary_accuracy(const MlpNet& net, const Dataset& d, int head) {
  require(d.size() > 0, "binary_accuracy: empty dataset");
  const auto logits = mlp_predict(net, d.x);
  require(head >= 0 && head < static_cast<int>(logits.size()), "binary_accuracy: head out of range");
  const Matrix& z = logits[static_cast<std::size_t>(head)];
  Index ok = 0;
  for (Index i = 0; i < d.size(); ++i) ok += (z(i, 0) >= 0.0) == (d.y[i] == 1.0);
  return static_cast<double>(ok) / static_cast<double>(d.size());
}

CorrectnessSplit split_by_correctness(const MlpNet& f, const Dataset& d) {
  const Matrix z = mlp_predict(f, d.x).front();
  CorrectnessSplit s;
  for (Index i = 0; i < d.size(); ++i) {
    const bool predicted_one = z(i, 0) >= 0.0;
    (predicted_one == (d.y[i] == 1.0) ? s.a : s.b).push_back(i);
  }
  return s;
}

void DiscoveryConfig::validate() const {
  require(rounds >= 1, "discovery: rounds must be >= 1");
  require(!epochs.empty(), "discovery: epochs list is empty");
  for (int e : epochs) require(e >= 1, "discovery: round epochs must be >= 1");
  train.validate();
}

int DiscoveryConfig::epochs_for(int round) const {
  const std::size_t i = std::min(static_cast<std::size_t>(round - 1), epochs.size() - 1);
  return epochs[i];
}

nlohmann::json DiscoveryRound::to_json() const {
  return {{"round", round},
          {"rerm", rerm.to_json()},
          {"a_train", a_train},
          {"b_train", b_train},
          {"a_valid", a_valid},
          {"b_valid", b_valid},
          {"train_accuracy", train_accuracy},
          {"valid_accuracy", valid_accuracy},
          {"warnings", warnings}};
}

DiscoveryResult discovery(const Dataset& train, const Dataset& valid, const DiscoveryConfig& cfg) {
  cfg.validate();
  require(train.size() > 0 && valid.size() > 0, "discovery: training and validation data are required");
  const MlpShape shape{train.dim(), cfg.hidden, 1, 1, cfg.activation};
  DiscoveryResult out;
  for (int k = 1; k <= cfg.rounds; ++k) {
    TrainConfig tc = cfg.train;
    tc.max_epochs = cfg.epochs_for(k);
    tc.seed = derive_seed(cfg.train.seed, "discovery/round" + std::to_string(k));
    std::vector<RermGroup> groups = k == 1 ? single_rerm_group(train, valid) : out.pool.groups;
    if (groups.empty()) throw InvalidArgument("discovery: the group pool is empty at round " + std::to_string(k));
    RermResult r = rerm_train(train, valid, groups, shape, tc, cfg.loss);

    DiscoveryRound info;
    info.round = k;
    const CorrectnessSplit st = split_by_correctness(r.model, train);
    const CorrectnessSplit sv = split_by_correctness(r.model, valid);
    info.a_train = static_cast<Index>(st.a.size());
    info.b_train = static_cast<Index>(st.b.size());
    info.a_valid = static_cast<Index>(sv.a.size());
    info.b_valid = static_cast<Index>(sv.b.size());
    info.train_accuracy = static_cast<double>(info.a_train) / static_cast<double>(train.size());
    info.valid_accuracy = static_cast<double>(info.a_valid) / static_cast<double>(valid.size());

    std::vector<std::uint8_t> mask(static_cast<std::size_t>(train.size()), 0);
    for (Index i : st.a) mask[static_cast<std::size_t>(i)] = 1;
    out.correct_train.push_back(std::move(mask));

    const std::string model_name = "f" + std::to_string(k);
    auto add = [&](const std::string& name, const std::vector<Index>& tr, const std::vector<Index>& va) {
      if (tr.empty() || va.empty()) {
        info.warnings.push_back("group " + name + " is empty on the " + (tr.empty() ? "training" : "validation") +
                                " side and was left out of the pool");
        return;
      }
      out.pool.groups.push_back({name, tr, va});
      out.pool.provenance.push_back(model_name);
    };
    add("A" + std::to_string(k), st.a, sv.a);
    add("B" + std::to_string(k), st.b, sv.b);
    info.rerm = std::move(r.report);
    out.rounds.push_back(std::move(info));
    out.models.push_back(std::move(r.model));

    if (k == 1 && st.b.empty() && sv.b.empty()) {
      // A perfect first model leaves nothing to discover.
      out.stopped_early = true;
      break;
    }
  }
  return out;
}

PseudoLabelSet make_pseudo_labels(std::span<const MlpNet> models, const Dataset& d) {
  require(!models.empty(), "make_pseudo_labels: no models");
  PseudoLabelSet ps;
  ps.mask_a.assign(static_cast<std::size_t>(d.size()), 1);
  for (const MlpNet& f : models) {
    const Vector z = mlp_predict(f, d.x).front().col(0);
    Vector y(d.size());
    for (Index i = 0; i < d.size(); ++i) {
      y[i] = z[i] >= 0.0 ? 1.0 : 0.0;
      if (y[i] != d.y[i]) ps.mask_a[static_cast<std::size_t>(i)] = 0;
    }
    ps.labels.push_back(std::move(y));
    ps.logits.push_back(z);
  }
  return ps;
}

void SynthesisConfig::validate() const {
  train.validate();
  require(train.max_epochs >= 1, "synthesis: max_epochs must be >= 1");
  require(train.batch_size == 0, "synthesis: only full-batch training is supported");
  require(distill_weight >= 0.0, "synthesis: distill_weight must be >= 0");
  require(tau > 0.0, "synthesis: tau must be > 0");
}

Matrix RichRepresentation::features(const Matrix& x) const { return mlp_features(net, x); }

RichRepresentation synthesis(const Matrix& x, const PseudoLabelSet& pseudo, const SynthesisConfig& cfg) {
  cfg.validate();
  pseudo.validate();
  require(x.rows() == pseudo.size(), "synthesis: input rows do not match the pseudo-labels");
  const Index k = pseudo.count();
  const MlpShape shape{x.cols(), cfg.hidden, k, 1, cfg.activation};
  MlpNet net = MlpNet::xavier(shape, derive_seed(cfg.train.seed, "synthesis/init"));
  Optimizer opt;
  std::vector<double> history;
  for (int epoch = 0; epoch < cfg.train.max_epochs; ++epoch) {
    const ForwardResult fr = mlp_forward(net, x);
    SynthesisLoss sl = synthesis_loss(fr.logits, pseudo);
    double value = sl.value;
    if (cfg.distill_weight > 0.0) {
      for (Index h = 0; h < k; ++h) {
        const auto hs = static_cast<std::size_t>(h);
        const LossGrad kl = distill_kl(fr.logits[hs], Matrix(pseudo.logits[hs]), cfg.tau);
        value += cfg.distill_weight * kl.value;
        sl.grads[hs] += cfg.distill_weight * kl.grad;
      }
    }
    if (!std::isfinite(value)) throw NumericalError("synthesis: non-finite loss at epoch " + std::to_string(epoch + 1));
    history.push_back(value);
    opt.step(net, mlp_backward(net, fr.cache, sl.grads), cfg.train);
  }

  RichRepresentation rep;
  rep.k = static_cast<int>(k);
  const auto logits = mlp_predict(net, x);
  std::vector<double> agreement;
  for (Index h = 0; h < k; ++h) {
    const Matrix& z = logits[static_cast<std::size_t>(h)];
    const Vector& y = pseudo.labels[static_cast<std::size_t>(h)];
    Index ok = 0;
    for (Index i = 0; i < z.rows(); ++i) ok += (z(i, 0) >= 0.0) == (y[i] == 1.0);
    agreement.push_back(static_cast<double>(ok) / static_cast<double>(z.rows()));
  }
  rep.report = {{"epochs", cfg.train.max_epochs},
                {"a_size", pseudo.a_size()},
                {"d_size", pseudo.size()},
                {"loss_history", history},
                {"head_agreement", agreement}};
  rep.net = std::move(net);
  return rep;
}

RichRepresentation bonsai_run(const EnvironmentSet& set, const BonsaiConfig& cfg) {
  Dataset train, valid;
  environment_groups(set, Role::kTrain, train);
  environment_groups(set, Role::kValid, valid);
  DiscoveryResult disc = discovery(train, valid, cfg.discovery);

  nlohmann::json rounds = nlohmann::json::array();
  for (std::size_t r = 0; r < disc.rounds.size(); ++r) {
    nlohmann::json j = disc.rounds[r].to_json();
    for (const Environment* e : set.with_role(Role::kTest)) {
      j["test_accuracy"][e->name] = binary_accuracy(disc.models[r], e->data);
    }
    rounds.push_back(std::move(j));
  }

  RichRepresentation rep;
  if (disc.models.size() == 1) {
    rep.net = disc.models.front();
    rep.k = 1;
    rep.report["synthesis"] = nullptr;
  } else {
    const PseudoLabelSet pseudo = make_pseudo_labels(disc.models, train);
    rep = synthesis(train.x, pseudo, cfg.synthesis);
    nlohmann::json syn = rep.report;
    rep.report = nlohmann::json::object();
    rep.report["synthesis"] = std::move(syn);
  }
  rep.report["discovery"] = std::move(rounds);
  rep.report["stopped_early"] = disc.stopped_early;
  rep.report["pool"] = nlohmann::json::array();
  for (std::size_t g = 0; g < disc.pool.size(); ++g) {
    rep.report["pool"].push_back({{"name", disc.pool.groups[g].name},
                                  {"train_rows", disc.pool.groups[g].train_rows.size()},
                                  {"valid_rows", disc.pool.groups[g].valid_rows.size()},
                                  {"model", disc.pool.provenance[g]}});
  }
  return rep;
}

}  // namespace bonsai
