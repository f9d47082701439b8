// bonsai/optim.cpp

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

#include "bonsai/optim.hpp"

#include <cmath>

namespace bonsai {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::kSgd ? "sgd" : "adam"; }

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::kAdam;
  if (s == "sgd") return OptimizerKind::kSgd;
  throw InvalidArgument("unknown optimizer '" + s + "'");
}

void TrainConfig::validate() const {
  require(learning_rate > 0.0, "learning_rate must be > 0");
  require(l2_weight_decay >= 0.0, "l2_weight_decay must be >= 0");
  require(max_epochs >= 0, "max_epochs must be >= 0");
  require(batch_size >= 0, "batch_size must be >= 0");
  require(patience >= 1, "patience must be >= 1");
}

void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, AdamState& state,
               const TrainConfig& cfg) {
  require(params.size() == grads.size(), "adam_step: block count mismatch");
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.push_back(Vector::Zero(static_cast<Index>(p.size())));
      state.second_moment.push_back(Vector::Zero(static_cast<Index>(p.size())));
    }
  }
  require(state.first_moment.size() == params.size(), "adam_step: state has wrong block count");
  ++state.step;
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const double lr = cfg.learning_rate;
  const double wd = cfg.l2_weight_decay;
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto p = params[b];
    auto g = grads[b];
    Vector& m = state.first_moment[b];
    Vector& v = state.second_moment[b];
    require(p.size() == g.size() && static_cast<Index>(p.size()) == m.size(),
            "adam_step: block shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] + wd * p[i];
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.epsilon);
    }
  }
}

namespace {

// Blocks of the layers selected by `scope`.
template <class P, class Span>
std::vector<Span> scoped_blocks(P& params, UpdateScope scope) {
  auto all = params.blocks();
  if (scope == UpdateScope::kAll) return {all.begin(), all.end()};
  const std::size_t skip = 2 * params.body.size();
  return {all.begin() + static_cast<std::ptrdiff_t>(skip), all.end()};
}

}  // namespace

void adam_step(MlpNet& net, const Gradients& grads, AdamState& state, const TrainConfig& cfg,
               UpdateScope scope) {
  auto p = scoped_blocks<Params, std::span<double>>(net.mutable_params(), scope);
  auto g = scoped_blocks<const Params, std::span<const double>>(grads, scope);
  adam_step(p, g, state, cfg);
}

void sgd_step(std::span<const std::span<double>> params,
              std::span<const std::span<const double>> grads, double lr) {
  require(lr > 0.0, "sgd_step: lr must be > 0");
  require(params.size() == grads.size(), "sgd_step: block count mismatch");
  for (std::size_t b = 0; b < params.size(); ++b) {
    require(params[b].size() == grads[b].size(), "sgd_step: block shape mismatch");
    for (std::size_t i = 0; i < params[b].size(); ++i) params[b][i] -= lr * grads[b][i];
  }
}

void sgd_step(MlpNet& net, const Gradients& grads, double lr, UpdateScope scope) {
  auto p = scoped_blocks<Params, std::span<double>>(net.mutable_params(), scope);
  auto g = scoped_blocks<const Params, std::span<const double>>(grads, scope);
  sgd_step(p, g, lr);
}

void Optimizer::step(MlpNet& net, const Gradients& grads, const TrainConfig& cfg, UpdateScope scope) {
  if (cfg.optimizer == OptimizerKind::kAdam) {
    adam_step(net, grads, adam, cfg, scope);
    return;
  }
  if (cfg.l2_weight_decay == 0.0) {
    sgd_step(net, grads, cfg.learning_rate, scope);
    return;
  }
  Gradients g = grads;
  const Params& p = net.params();
  for (std::size_t l = 0; l < g.body.size(); ++l) {
    g.body[l].weight += cfg.l2_weight_decay * p.body[l].weight;
    g.body[l].bias += cfg.l2_weight_decay * p.body[l].bias;
  }
  for (std::size_t h = 0; h < g.heads.size(); ++h) {
    g.heads[h].weight += cfg.l2_weight_decay * p.heads[h].weight;
    g.heads[h].bias += cfg.l2_weight_decay * p.heads[h].bias;
  }
  sgd_step(net, g, cfg.learning_rate, scope);
}

}  // namespace bonsai
