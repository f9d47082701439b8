// bonsai/rerm.cpp

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

#include "bonsai/rerm.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "bonsai/rng.hpp"

namespace bonsai {

namespace {

nlohmann::json history_json(const std::vector<LossVector>& h) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& lv : h) j.push_back(lv.values);
  return j;
}

LossVector checked_loss_vector(std::vector<double> values, std::span<const Group> groups, const char* where) {
  std::vector<std::string> ids;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    if (!std::isfinite(values[k])) {
      throw NumericalError(std::string(where) + ": non-finite loss on group '" + groups[k].name + "'");
    }
    ids.push_back(groups[k].name);
  }
  return LossVector::make(std::move(values), std::move(ids));
}

}  // namespace

nlohmann::json RermReport::to_json() const {
  nlohmann::json j;
  j["best_epoch"] = best_epoch;
  j["best_valid_dro"] = best_valid_dro;
  j["epochs_run"] = epochs_run;
  j["group_ids"] = train_history.empty() ? nlohmann::json::array() : nlohmann::json(train_history.front().group_ids);
  j["train_history"] = history_json(train_history);
  j["valid_history"] = history_json(valid_history);
  j["active_trace"] = active_trace;
  if (!checkpoint.empty()) j["checkpoint"] = checkpoint;
  return j;
}

LossVector dro_gradient_step(MlpNet& net, const Dataset& data, std::span<const Group> groups, Optimizer& opt,
                             const TrainConfig& cfg, LossKind kind) {
  require(!groups.empty(), "dro_gradient_step: no groups");
  const ForwardResult fr = mlp_forward(net, data.x);
  Vector per, deriv;
  pointwise_loss(kind, fr.logits[0].col(0), data.y, &per, &deriv);
  LossVector lv = checked_loss_vector(group_means(per, groups), groups, "dro_gradient_step");
  std::vector<double> coef(groups.size(), 0.0);
  coef[static_cast<std::size_t>(lv.argmax_index)] = 1.0;
  const Vector g = group_logit_grad(groups, coef, deriv);
  const Gradients grads = mlp_backward(net, fr.cache, std::vector<Matrix>{Matrix(g)});
  opt.step(net, grads, cfg);
  return lv;
}

std::vector<RermGroup> single_rerm_group(const Dataset& train, const Dataset& valid, const std::string& name) {
  RermGroup g{name, std::vector<Index>(static_cast<std::size_t>(train.size())),
              std::vector<Index>(static_cast<std::size_t>(valid.size()))};
  std::iota(g.train_rows.begin(), g.train_rows.end(), Index{0});
  std::iota(g.valid_rows.begin(), g.valid_rows.end(), Index{0});
  return {std::move(g)};
}

RermResult rerm_train(const Dataset& train, const Dataset& valid, std::span<const RermGroup> groups, MlpNet net,
                      const TrainConfig& cfg, LossKind kind) {
  cfg.validate();
  require(cfg.max_epochs >= 1, "rerm_train: max_epochs must be >= 1");
  require(!groups.empty(), "rerm_train: no groups");
  std::vector<Group> tg, vg;
  for (const auto& g : groups) {
    if (g.train_rows.empty()) throw InvalidArgument("rerm_train: group '" + g.name + "' has no training rows");
    if (g.valid_rows.empty()) throw InvalidArgument("rerm_train: group '" + g.name + "' has no validation rows");
    tg.push_back({g.name, g.train_rows});
    vg.push_back({g.name, g.valid_rows});
  }

  // Minibatch mode needs group membership per training row.
  std::vector<std::vector<std::uint8_t>> member;
  if (cfg.batch_size > 0) {
    member.assign(tg.size(), std::vector<std::uint8_t>(static_cast<std::size_t>(train.size()), 0));
    for (std::size_t k = 0; k < tg.size(); ++k) {
      for (Index i : tg[k].rows) member[k][static_cast<std::size_t>(i)] = 1;
    }
  }
  Rng batch_rng(derive_seed(cfg.seed, "rerm/batches"));

  RermResult out;
  RermReport& rep = out.report;
  Optimizer opt;
  Params best = net.params();
  rep.best_valid_dro = std::numeric_limits<double>::infinity();
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (cfg.batch_size == 0) {
      rep.train_history.push_back(dro_gradient_step(net, train, tg, opt, cfg, kind));
    } else {
      std::vector<Index> order(static_cast<std::size_t>(train.size()));
      std::iota(order.begin(), order.end(), Index{0});
      batch_rng.shuffle(order);
      LossVector last;
      for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size));
        const std::span<const Index> rows(order.data() + at, end - at);
        std::vector<Group> local;
        for (std::size_t k = 0; k < tg.size(); ++k) {
          Group g{tg[k].name, {}};
          for (std::size_t r = 0; r < rows.size(); ++r) {
            if (member[k][static_cast<std::size_t>(rows[r])]) g.rows.push_back(static_cast<Index>(r));
          }
          if (!g.rows.empty()) local.push_back(std::move(g));
        }
        if (local.empty()) continue;
        last = dro_gradient_step(net, train.rows(rows), local, opt, cfg, kind);
      }
      rep.train_history.push_back(std::move(last));
    }
    rep.active_trace.push_back(rep.train_history.back().argmax_index);

    const ForwardResult fv = mlp_forward(net, valid.x);
    Vector per;
    pointwise_loss(kind, fv.logits[0].col(0), valid.y, &per, nullptr);
    rep.valid_history.push_back(checked_loss_vector(group_means(per, vg), vg, "rerm_train (validation)"));
    rep.epochs_run = epoch;
    const double v = dro_objective(rep.valid_history.back()).value;
    if (v < rep.best_valid_dro) {
      rep.best_valid_dro = v;
      rep.best_epoch = epoch;
      best = net.params();
    } else if (epoch - rep.best_epoch >= cfg.patience) {
      break;
    }
  }
  net.mutable_params() = best;
  out.model = std::move(net);
  return out;
}

RermResult rerm_train(const Dataset& train, const Dataset& valid, std::span<const RermGroup> groups,
                      const MlpShape& shape, const TrainConfig& cfg, LossKind kind) {
  return rerm_train(train, valid, groups, MlpNet::xavier(shape, derive_seed(cfg.seed, "rerm/init")), cfg, kind);
}

}  // namespace bonsai
