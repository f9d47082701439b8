// bonsai/trainers.cpp

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

#include "bonsai/trainers.hpp"

#include <cmath>
#include <sstream>

#include "bonsai/rng.hpp"

namespace bonsai {

namespace {

LayerParams average_head(const MlpNet& net) {
  const auto& heads = net.params().heads;
  LayerParams avg{Matrix::Zero(heads.front().weight.rows(), heads.front().weight.cols()),
                  Vector::Zero(heads.front().bias.size())};
  for (const auto& h : heads) {
    avg.weight += h.weight;
    avg.bias += h.bias;
  }
  avg.weight /= static_cast<double>(heads.size());
  avg.bias /= static_cast<double>(heads.size());
  return avg;
}

double population_variance(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

// Mean pointwise loss of head 0 and, if asked, its flat parameter gradient.
double mean_loss(const MlpNet& net, const Dataset& d, LossKind kind, Vector* grad) {
  const ForwardResult fr = mlp_forward(net, d.x);
  Vector per, deriv;
  pointwise_loss(kind, fr.logits[0].col(0), d.y, &per, grad ? &deriv : nullptr);
  const double n = static_cast<double>(d.size());
  if (grad) {
    const Matrix dl = deriv / n;
    *grad = mlp_backward(net, fr.cache, std::vector<Matrix>{dl}).flatten();
  }
  return per.sum() / n;
}

}  // namespace

std::string to_string(MethodKind k) {
  switch (k) {
    case MethodKind::kErm: return "erm";
    case MethodKind::kVrex: return "vrex";
    case MethodKind::kGroupDro: return "groupdro";
    case MethodKind::kDro: return "dro";
  }
  return "?";
}

MethodKind method_from_string(const std::string& s) {
  if (s == "erm") return MethodKind::kErm;
  if (s == "vrex") return MethodKind::kVrex;
  if (s == "groupdro") return MethodKind::kGroupDro;
  if (s == "dro") return MethodKind::kDro;
  throw InvalidArgument("unknown method '" + s + "' (expected erm, vrex, groupdro or dro)");
}

std::string to_string(InitKind k) {
  switch (k) {
    case InitKind::kRandom: return "rand";
    case InitKind::kErm: return "erm";
    case InitKind::kRepresentation: return "bonsai";
  }
  return "?";
}

InitKind init_from_string(const std::string& s) {
  if (s == "rand" || s == "random") return InitKind::kRandom;
  if (s == "erm") return InitKind::kErm;
  if (s == "bonsai" || s == "representation") return InitKind::kRepresentation;
  throw InvalidArgument("unknown init '" + s + "' (expected rand, erm or bonsai)");
}

void MethodSpec::validate() const {
  require(penalty_weight >= 0.0, "method: penalty_weight must be >= 0");
  require(groupdro_step > 0.0, "method: groupdro_step must be > 0");
  require(pretrain_epochs >= 0, "method: pretrain_epochs must be >= 0");
  for (double w : sweep) require(w >= 0.0, "method: sweep weights must be >= 0");
}

void MethodConfig::validate() const {
  train.validate();
  require(train.max_epochs >= 1, "method: max_epochs must be >= 1");
  require(train.batch_size == 0, "method: only full-batch training is supported");
  require(eval_every >= 1, "method: eval_every must be >= 1");
}

nlohmann::json EpochMetrics::to_json() const {
  return {{"epoch", epoch},
          {"objective", objective},
          {"penalty", penalty},
          {"env_losses", env_losses},
          {"train_accuracy", train_accuracy},
          {"valid_accuracy", valid_accuracy},
          {"test_accuracy", test_accuracy},
          {"test_accuracies", test_accuracies}};
}

nlohmann::json MethodResult::to_json() const {
  nlohmann::json h = nlohmann::json::array();
  for (const auto& m : history) h.push_back(m.to_json());
  return {{"history", h}, {"selected_valid", selected_valid.to_json()}, {"selected_test_peek", selected_test.to_json()}};
}

MethodResult train_method(const EnvironmentSet& envs, const MethodInit& init, const MethodSpec& spec,
                          const MethodConfig& cfg, const StepObserver& observer) {
  spec.validate();
  cfg.validate();
  Dataset train, valid;
  const std::vector<Group> groups = environment_groups(envs, Role::kTrain, train);
  environment_groups(envs, Role::kValid, valid);
  const auto tests = envs.with_role(Role::kTest);
  require(!groups.empty(), "train_method: no training environments");
  require(valid.size() > 0, "train_method: no validation environments");
  require(!tests.empty(), "train_method: no test environments");

  MlpNet net;
  switch (init.kind) {
    case InitKind::kRandom:
    case InitKind::kErm:
      require(!spec.frozen, "train_method: frozen training requires a representation");
      require(init.kind == InitKind::kRandom || spec.pretrain_epochs > 0,
              "train_method: ERM initialization needs pretrain_epochs > 0");
      net = MlpNet::xavier(MlpShape{train.dim(), cfg.hidden, 1, 1, cfg.activation},
                           derive_seed(cfg.train.seed, "method/init"));
      break;
    case InitKind::kRepresentation:
      require(init.representation != nullptr, "train_method: representation init without a representation");
      require(init.representation->net.shape().input_dim == train.dim(),
              "train_method: representation input dimension differs from the data");
      net = init.representation->net.with_heads({average_head(init.representation->net)});
      break;
  }

  // Frozen mode trains a linear model on precomputed features.
  Dataset tr = train, va = valid;
  std::vector<Dataset> te;
  for (const Environment* e : tests) te.push_back(e->data);
  MlpNet work = net;
  if (spec.frozen) {
    tr.x = mlp_features(net, train.x);
    va.x = mlp_features(net, valid.x);
    for (auto& d : te) d.x = mlp_features(net, d.x);
    work = MlpNet(MlpShape{tr.dim(), {}, 1, 1, cfg.activation}).with_heads(net.params().heads);
  }

  const std::size_t ne = groups.size();
  std::vector<std::string> ids;
  for (const auto& g : groups) ids.push_back(g.name);
  Optimizer opt;
  MixtureWeights p = MixtureWeights::uniform(static_cast<Index>(ne));
  MethodResult out;
  Params best_valid, best_test;
  bool have_eval = false;
  const int total = spec.pretrain_epochs + cfg.train.max_epochs;
  for (int epoch = 1; epoch <= total; ++epoch) {
    const bool method_on = epoch > spec.pretrain_epochs;
    const ForwardResult fr = mlp_forward(work, tr.x);
    Vector per, deriv;
    pointwise_loss(cfg.loss, fr.logits[0].col(0), tr.y, &per, &deriv);
    LossVector lv = LossVector::make(group_means(per, groups), ids);
    const double penalty = population_variance(lv.values);

    std::vector<double> coef(ne, 1.0 / static_cast<double>(ne));
    double objective = 0.0;
    for (double c : lv.values) objective += c / static_cast<double>(ne);
    if (method_on) {
      switch (spec.method) {
        case MethodKind::kErm:
          break;
        case MethodKind::kVrex:
          objective = vrex_objective(lv, spec.penalty_weight);
          coef = vrex_coefficients(lv, spec.penalty_weight);
          if (cfg.rescale_penalty && spec.penalty_weight > 1.0) {
            for (double& c : coef) c /= spec.penalty_weight;
          }
          break;
        case MethodKind::kGroupDro:
          p = groupdro_weight_update(p, lv, spec.groupdro_step);
          objective = groupdro_objective(lv, p);
          coef = p.lambda;
          break;
        case MethodKind::kDro: {
          const DroValue d = dro_objective(lv);
          objective = d.value;
          coef.assign(ne, 0.0);
          coef[static_cast<std::size_t>(d.active_group)] = 1.0;
          break;
        }
      }
    }
    if (!std::isfinite(objective)) {
      std::ostringstream os;
      os << "train_method: non-finite " << to_string(spec.method) << " objective at epoch " << epoch
         << "; environment losses:";
      for (double c : lv.values) os << ' ' << c;
      throw NumericalError(os.str());
    }

    const Vector g = group_logit_grad(groups, coef, deriv);
    const Gradients grads = mlp_backward(work, fr.cache, std::vector<Matrix>{Matrix(g)});
    if (observer) {
      StepRecord rec;
      rec.step = epoch;
      rec.net = &work;
      rec.data = &tr;
      rec.groups = groups;
      rec.losses = lv;
      rec.coefficients = coef;
      rec.applied = &grads;
      observer(rec);
    }
    opt.step(work, grads, cfg.train);

    const int method_epoch = epoch - spec.pretrain_epochs;
    if (!method_on || (method_epoch % cfg.eval_every != 0 && epoch != total)) continue;
    EpochMetrics m;
    m.epoch = method_epoch;
    m.objective = objective;
    m.penalty = penalty;
    m.env_losses = lv.values;
    m.train_accuracy = binary_accuracy(work, tr);
    m.valid_accuracy = binary_accuracy(work, va);
    for (const auto& d : te) {
      m.test_accuracies.push_back(binary_accuracy(work, d));
      m.test_accuracy += m.test_accuracies.back() / static_cast<double>(te.size());
    }
    if (!have_eval || m.valid_accuracy > out.selected_valid.valid_accuracy) {
      out.selected_valid = m;
      best_valid = work.params();
    }
    if (!have_eval || m.test_accuracy > out.selected_test.test_accuracy) {
      out.selected_test = m;
      best_test = work.params();
    }
    have_eval = true;
    out.history.push_back(std::move(m));
  }

  auto assemble = [&](const Params& head_or_all) {
    if (!spec.frozen) {
      MlpNet n = work;
      n.mutable_params() = head_or_all;
      return n;
    }
    return net.with_heads(head_or_all.heads);
  };
  out.model = assemble(work.params());
  out.valid_model = assemble(best_valid);
  out.test_model = assemble(best_test);
  return out;
}

std::vector<double> default_vrex_grid() {
  std::vector<double> g;
  for (double f : {0.1, 0.5, 1.0, 5.0, 10.0}) g.push_back(10000.0 * f);
  return g;
}

nlohmann::json SweepTable::to_json() const {
  nlohmann::json r = nlohmann::json::array();
  for (const auto& row : rows) {
    r.push_back({{"weight", row.weight},
                 {"selected_valid", row.result.selected_valid.to_json()},
                 {"selected_test_peek", row.result.selected_test.to_json()}});
  }
  return {{"rows", r},
          {"selection",
           {{"valid", {{"rule", "max validation accuracy over weights and evaluated epochs"}, {"row", by_valid}}},
            {"test_peek", {{"rule", "max test accuracy over weights and evaluated epochs"}, {"row", by_test}}}}}};
}

SweepTable penalty_sweep(const EnvironmentSet& envs, const MethodInit& init, const MethodSpec& spec,
                         std::span<const double> weights, const MethodConfig& cfg) {
  require(!weights.empty(), "penalty_sweep: empty weight list");
  SweepTable t;
  for (double w : weights) {
    MethodSpec s = spec;
    s.penalty_weight = w;
    t.rows.push_back({w, train_method(envs, init, s, cfg)});
  }
  for (std::size_t i = 1; i < t.rows.size(); ++i) {
    if (t.rows[i].result.selected_valid.valid_accuracy > t.rows[t.by_valid].result.selected_valid.valid_accuracy) {
      t.by_valid = i;
    }
    if (t.rows[i].result.selected_test.test_accuracy > t.rows[t.by_test].result.selected_test.test_accuracy) {
      t.by_test = i;
    }
  }
  return t;
}

std::vector<TaylorRow> taylor_interaction_check(const MlpNet& net, const Dataset& env_i, const Dataset& env_j,
                                                std::span<const double> alphas, LossKind kind) {
  require(!alphas.empty(), "taylor_interaction_check: no step sizes");
  for (std::size_t k = 0; k < alphas.size(); ++k) {
    require(alphas[k] > 0.0, "taylor_interaction_check: step sizes must be > 0");
    require(k == 0 || alphas[k] < alphas[k - 1], "taylor_interaction_check: step sizes must decrease");
  }
  Vector gi, gj;
  mean_loss(net, env_i, kind, &gi);
  const double lj = mean_loss(net, env_j, kind, &gj);
  const double inner = gi.dot(gj);
  const Vector theta = net.params().flatten();
  MlpNet moved = net;
  std::vector<TaylorRow> rows;
  for (double a : alphas) {
    moved.mutable_params().assign(theta - a * gi);
    TaylorRow r;
    r.alpha = a;
    r.residual = std::abs(mean_loss(moved, env_j, kind, nullptr) - lj + a * inner);
    r.ratio = r.residual / (a * a);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace bonsai
