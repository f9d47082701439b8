// bonsai/config.cpp

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

#include "bonsai/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace bonsai {

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::kTwoBits: return "twobits";
    case ExperimentKind::kColoredMnist: return "colored-mnist";
    case ExperimentKind::kInverse: return "inverse";
    case ExperimentKind::kOracle: return "oracle";
    case ExperimentKind::kDisentangle: return "disentangle";
    case ExperimentKind::kProbeSuite: return "probe-suite";
    case ExperimentKind::kMinimaxSuite: return "minimax-suite";
  }
  return "?";
}

ExperimentKind experiment_from_string(const std::string& s) {
  for (auto k : {ExperimentKind::kTwoBits, ExperimentKind::kColoredMnist, ExperimentKind::kInverse,
                 ExperimentKind::kOracle, ExperimentKind::kDisentangle, ExperimentKind::kProbeSuite,
                 ExperimentKind::kMinimaxSuite}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown experiment kind '" + s + "'");
}

std::string to_string(Selection s) { return s == Selection::kValid ? "valid" : "test-peek"; }

std::string MethodEntry::init_label() const {
  std::string s = to_string(init);
  if (spec.frozen) s += "-cf";
  return s;
}

std::vector<double> MethodEntry::weights() const {
  if (!spec.sweep.empty()) return spec.sweep;
  return {spec.penalty_weight};
}

namespace {

bool mnist_kind(ExperimentKind k) {
  return k == ExperimentKind::kColoredMnist || k == ExperimentKind::kInverse || k == ExperimentKind::kOracle;
}

bool trains_methods(ExperimentKind k) { return k == ExperimentKind::kTwoBits || mnist_kind(k); }

// ---------------------------------------------------------------------------
// Reading

int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

void expect_map(const YAML::Node& n, const std::string& path) {
  if (!n.IsMap()) throw ConfigError("'" + path + "' must be a mapping", line_of(n));
}

void check_keys(const YAML::Node& n, const std::string& path, std::initializer_list<const char*> allowed) {
  expect_map(n, path);
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError("unknown key '" + (path.empty() ? key : path + "." + key) + "'", line_of(kv.first));
    }
  }
}

template <class T>
T convert(const YAML::Node& n, const std::string& path, const char* type) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("'" + path + "' must be " + type, line_of(n));
  }
}

template <class T>
const char* type_name() {
  if constexpr (std::is_same_v<T, bool>) return "a boolean";
  else if constexpr (std::is_same_v<T, std::string>) return "a string";
  else if constexpr (std::is_floating_point_v<T>) return "a number";
  else return "an integer";
}

template <class T>
void read(const YAML::Node& parent, const std::string& path, const char* key, T& out) {
  const YAML::Node n = parent[key];
  if (!n) return;
  const std::string full = path.empty() ? key : path + "." + key;
  if (!n.IsScalar()) throw ConfigError("'" + full + "' must be " + type_name<T>(), line_of(n));
  if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool> && std::is_unsigned_v<T>) {
    const auto v = convert<long long>(n, full, "a non-negative integer");
    if (v < 0) throw ConfigError("'" + full + "' must be a non-negative integer", line_of(n));
    out = static_cast<T>(v);
  } else {
    out = convert<T>(n, full, type_name<T>());
  }
}

template <class T>
void read_list(const YAML::Node& parent, const std::string& path, const char* key, std::vector<T>& out) {
  const YAML::Node n = parent[key];
  if (!n) return;
  const std::string full = path.empty() ? key : path + "." + key;
  if (!n.IsSequence()) throw ConfigError("'" + full + "' must be a list", line_of(n));
  out.clear();
  for (const auto& item : n) {
    if (!item.IsScalar()) throw ConfigError("'" + full + "' entries must be " + type_name<T>(), line_of(item));
    if constexpr (std::is_unsigned_v<T>) {
      const auto v = convert<long long>(item, full, "a list of non-negative integers");
      if (v < 0) throw ConfigError("'" + full + "' entries must be non-negative", line_of(item));
      out.push_back(static_cast<T>(v));
    } else {
      out.push_back(convert<T>(item, full, type_name<T>()));
    }
  }
}

void read_pairs(const YAML::Node& parent, const std::string& path, const char* key,
                std::vector<std::pair<double, double>>& out) {
  const YAML::Node n = parent[key];
  if (!n) return;
  const std::string full = path + "." + key;
  if (!n.IsSequence()) throw ConfigError("'" + full + "' must be a list of [a, b] pairs", line_of(n));
  out.clear();
  for (const auto& item : n) {
    if (!item.IsSequence() || item.size() != 2) {
      throw ConfigError("'" + full + "' entries must be [a, b] pairs", line_of(item));
    }
    out.emplace_back(convert<double>(item[0], full, "a number"), convert<double>(item[1], full, "a number"));
  }
}

template <class Fn>
auto enum_value(const YAML::Node& parent, const std::string& path, const char* key, Fn parse)
    -> std::optional<decltype(parse(std::string()))> {
  const YAML::Node n = parent[key];
  if (!n) return std::nullopt;
  const std::string full = path.empty() ? key : path + "." + key;
  const auto s = convert<std::string>(n, full, "a string");
  try {
    return parse(s);
  } catch (const Error& e) {
    throw ConfigError("'" + full + "': " + e.what(), line_of(n));
  }
}

void read_data(const YAML::Node& d, ExperimentConfig& cfg) {
  const std::string p = "data";
  switch (cfg.kind) {
    case ExperimentKind::kTwoBits:
    case ExperimentKind::kProbeSuite:
      check_keys(d, p, {"train_params", "test_params", "n_per_env", "n_valid_per_env"});
      read_pairs(d, p, "train_params", cfg.twobits.train_params);
      read_pairs(d, p, "test_params", cfg.twobits.test_params);
      read(d, p, "n_per_env", cfg.twobits.n_per_env);
      read(d, p, "n_valid_per_env", cfg.twobits.n_valid_per_env);
      break;
    case ExperimentKind::kColoredMnist:
    case ExperimentKind::kInverse:
    case ExperimentKind::kOracle:
      check_keys(d, p, {"train_params", "test_color_flip", "label_noise_test", "n_per_env", "n_valid_per_env",
                        "n_test", "mnist_dir"});
      read_pairs(d, p, "train_params", cfg.mnist.train_params);
      read(d, p, "test_color_flip", cfg.mnist.test_color_flip);
      read(d, p, "label_noise_test", cfg.mnist.label_noise_test);
      read(d, p, "n_per_env", cfg.mnist.n_per_env);
      read(d, p, "n_valid_per_env", cfg.mnist.n_valid_per_env);
      read(d, p, "n_test", cfg.mnist.n_test);
      read(d, p, "mnist_dir", cfg.mnist_dir);
      break;
    case ExperimentKind::kDisentangle: {
      check_keys(d, p, {"n", "sigma", "epsilon", "tasks", "train_sizes", "repeats", "test_size", "c_grid",
                        "penalties"});
      read(d, p, "n", cfg.disentangle.n);
      read(d, p, "sigma", cfg.disentangle.sigma);
      read(d, p, "epsilon", cfg.disentangle.epsilon);
      read(d, p, "tasks", cfg.disentangle.tasks);
      read_list(d, p, "train_sizes", cfg.disentangle.train_sizes);
      read(d, p, "repeats", cfg.complexity.repeats);
      read(d, p, "test_size", cfg.complexity.test_size);
      read_list(d, p, "c_grid", cfg.complexity.c_grid);
      std::vector<std::string> pens;
      read_list(d, p, "penalties", pens);
      if (d["penalties"]) {
        cfg.complexity.penalties.clear();
        for (const auto& s : pens) {
          try {
            cfg.complexity.penalties.push_back(penalty_from_string(s));
          } catch (const Error& e) {
            throw ConfigError(std::string("'data.penalties': ") + e.what(), line_of(d["penalties"]));
          }
        }
      }
      break;
    }
    case ExperimentKind::kMinimaxSuite:
      check_keys(d, p, {"instances", "max_groups", "max_dim", "rows_per_group"});
      read(d, p, "instances", cfg.minimax.instances);
      read(d, p, "max_groups", cfg.minimax.max_groups);
      read(d, p, "max_dim", cfg.minimax.max_dim);
      read(d, p, "rows_per_group", cfg.minimax.rows_per_group);
      break;
  }
}

MethodEntry read_method(const YAML::Node& m, const std::string& p) {
  check_keys(m, p, {"method", "init", "frozen", "penalty_weight", "sweep", "pretrain_epochs", "groupdro_step"});
  if (!m["method"]) throw ConfigError("'" + p + ".method' is required", line_of(m));
  MethodEntry e;
  e.spec.method = *enum_value(m, p, "method", method_from_string);
  if (auto v = enum_value(m, p, "init", init_from_string)) e.init = *v;
  read(m, p, "frozen", e.spec.frozen);
  read(m, p, "penalty_weight", e.spec.penalty_weight);
  read_list(m, p, "sweep", e.spec.sweep);
  read(m, p, "pretrain_epochs", e.spec.pretrain_epochs);
  read(m, p, "groupdro_step", e.spec.groupdro_step);
  return e;
}

ExperimentConfig from_yaml(const YAML::Node& root) {
  if (!root || root.IsNull()) throw ConfigError("empty config");
  check_keys(root, "", {"kind", "name", "output_dir", "seeds", "selection", "data", "net", "train", "bonsai",
                        "methods"});
  ExperimentConfig cfg;
  if (!root["kind"]) throw ConfigError("'kind' is required", line_of(root));
  cfg.kind = *enum_value(root, "", "kind", experiment_from_string);
  if (cfg.kind == ExperimentKind::kInverse) cfg.mnist = inverse_colored_mnist_defaults();
  read(root, "", "name", cfg.name);
  read(root, "", "output_dir", cfg.output_dir);
  read_list(root, "", "seeds", cfg.seeds);
  if (auto v = enum_value(root, "", "selection", [](const std::string& s) {
        if (s == "valid") return Selection::kValid;
        if (s == "test-peek") return Selection::kTestPeek;
        throw ConfigError("unknown selection '" + s + "' (expected valid or test-peek)");
      })) {
    cfg.selection = *v;
  }
  if (root["data"]) read_data(root["data"], cfg);

  if (const YAML::Node n = root["net"]) {
    check_keys(n, "net", {"hidden", "activation"});
    read_list(n, "net", "hidden", cfg.method.hidden);
    if (auto v = enum_value(n, "net", "activation", activation_from_string)) cfg.method.activation = *v;
  }
  if (const YAML::Node t = root["train"]) {
    check_keys(t, "train", {"optimizer", "learning_rate", "l2_weight_decay", "epochs", "eval_every", "rescale_penalty"});
    if (auto v = enum_value(t, "train", "optimizer", optimizer_from_string)) cfg.method.train.optimizer = *v;
    read(t, "train", "learning_rate", cfg.method.train.learning_rate);
    read(t, "train", "l2_weight_decay", cfg.method.train.l2_weight_decay);
    read(t, "train", "epochs", cfg.method.train.max_epochs);
    read(t, "train", "eval_every", cfg.method.eval_every);
    read(t, "train", "rescale_penalty", cfg.method.rescale_penalty);
  }
  if (const YAML::Node b = root["bonsai"]) {
    const std::string p = "bonsai";
    check_keys(b, p, {"rounds", "discovery_epochs", "discovery_learning_rate", "discovery_l2", "patience",
                      "synthesis_epochs", "synthesis_learning_rate", "synthesis_l2", "distill_weight", "tau"});
    read(b, p, "rounds", cfg.bonsai.discovery.rounds);
    read_list(b, p, "discovery_epochs", cfg.bonsai.discovery.epochs);
    read(b, p, "discovery_learning_rate", cfg.bonsai.discovery.train.learning_rate);
    read(b, p, "discovery_l2", cfg.bonsai.discovery.train.l2_weight_decay);
    read(b, p, "patience", cfg.bonsai.discovery.train.patience);
    read(b, p, "synthesis_epochs", cfg.bonsai.synthesis.train.max_epochs);
    read(b, p, "synthesis_learning_rate", cfg.bonsai.synthesis.train.learning_rate);
    read(b, p, "synthesis_l2", cfg.bonsai.synthesis.train.l2_weight_decay);
    read(b, p, "distill_weight", cfg.bonsai.synthesis.distill_weight);
    read(b, p, "tau", cfg.bonsai.synthesis.tau);
  }
  if (const YAML::Node ms = root["methods"]) {
    if (!ms.IsSequence()) throw ConfigError("'methods' must be a list", line_of(ms));
    for (std::size_t i = 0; i < ms.size(); ++i) {
      cfg.methods.push_back(read_method(ms[i], "methods[" + std::to_string(i) + "]"));
    }
  }
  cfg.bonsai.discovery.hidden = cfg.method.hidden;
  cfg.bonsai.discovery.activation = cfg.method.activation;
  cfg.bonsai.synthesis.hidden = cfg.method.hidden;
  cfg.bonsai.synthesis.activation = cfg.method.activation;
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Writing

// Shortest decimal that reads back to the same double.
std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, r.ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

void emit_numbers(YAML::Emitter& out, const std::vector<double>& v) {
  out << YAML::Flow << YAML::BeginSeq;
  for (double x : v) out << num(x);
  out << YAML::EndSeq;
}

template <class T>
void emit_ints(YAML::Emitter& out, const std::vector<T>& v) {
  out << YAML::Flow << YAML::BeginSeq;
  for (auto x : v) out << x;
  out << YAML::EndSeq;
}

void emit_pairs(YAML::Emitter& out, const std::vector<std::pair<double, double>>& v) {
  out << YAML::Flow << YAML::BeginSeq;
  for (const auto& [a, b] : v) out << YAML::Flow << YAML::BeginSeq << num(a) << num(b) << YAML::EndSeq;
  out << YAML::EndSeq;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (name.empty() || name.find('/') != std::string::npos) throw ConfigError("'name' must be a plain file name");
  if (output_dir.empty()) throw ConfigError("'output_dir' must not be empty");
  if (seeds.empty()) throw ConfigError("'seeds' must list at least one seed");
  std::set<std::uint64_t> seen(seeds.begin(), seeds.end());
  if (seen.size() != seeds.size()) throw ConfigError("'seeds' has duplicates");
  try {
    switch (kind) {
      case ExperimentKind::kTwoBits:
      case ExperimentKind::kProbeSuite: twobits.validate(); break;
      case ExperimentKind::kColoredMnist:
      case ExperimentKind::kInverse:
      case ExperimentKind::kOracle: mnist.validate(); break;
      case ExperimentKind::kDisentangle:
        disentangle.validate();
        complexity.validate();
        break;
      case ExperimentKind::kMinimaxSuite:
        if (minimax.instances < 1 || minimax.max_groups < 2 || minimax.max_dim < 1 || minimax.rows_per_group < 2) {
          throw ConfigError("data: minimax-suite needs instances >= 1, max_groups >= 2, max_dim >= 1, "
                            "rows_per_group >= 2");
        }
        break;
    }
    if (trains_methods(kind)) {
      method.validate();
      if (methods.empty()) throw ConfigError("'methods' must list at least one method for kind " + to_string(kind));
      for (std::size_t i = 0; i < methods.size(); ++i) {
        const auto& m = methods[i];
        const std::string at = "methods[" + std::to_string(i) + "]: ";
        m.spec.validate();
        if (m.spec.frozen && m.init != InitKind::kRepresentation) {
          throw ConfigError(at + "frozen training needs init: bonsai");
        }
        if (m.init == InitKind::kErm && m.spec.pretrain_epochs < 1) {
          throw ConfigError(at + "init: erm needs pretrain_epochs >= 1");
        }
        for (std::size_t j = 0; j < i; ++j) {
          if (methods[j].spec.method == m.spec.method && methods[j].init_label() == m.init_label()) {
            throw ConfigError(at + "repeats " + to_string(m.spec.method) + " / " + m.init_label() +
                              "; list several penalty weights under 'sweep' instead");
          }
        }
      }
      if (needs_representation()) bonsai.discovery.validate(), bonsai.synthesis.validate();
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

bool ExperimentConfig::needs_representation() const {
  return std::any_of(methods.begin(), methods.end(),
                     [](const MethodEntry& m) { return m.init == InitKind::kRepresentation; });
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_string(ss.str(), path);
}

ExperimentConfig parse_config_string(const std::string& text, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(source + ": " + e.msg, e.mark.line >= 0 ? e.mark.line + 1 : 0);
  }
  try {
    return from_yaml(root);
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + std::string(e.what()));
  }
}

std::string emit_config(const ExperimentConfig& cfg) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << to_string(cfg.kind);
  out << YAML::Key << "name" << YAML::Value << cfg.name;
  out << YAML::Key << "output_dir" << YAML::Value << cfg.output_dir;
  out << YAML::Key << "seeds" << YAML::Value;
  emit_ints(out, cfg.seeds);
  out << YAML::Key << "selection" << YAML::Value << to_string(cfg.selection);

  out << YAML::Key << "data" << YAML::Value << YAML::BeginMap;
  switch (cfg.kind) {
    case ExperimentKind::kTwoBits:
    case ExperimentKind::kProbeSuite:
      out << YAML::Key << "train_params" << YAML::Value;
      emit_pairs(out, cfg.twobits.train_params);
      out << YAML::Key << "test_params" << YAML::Value;
      emit_pairs(out, cfg.twobits.test_params);
      out << YAML::Key << "n_per_env" << YAML::Value << cfg.twobits.n_per_env;
      out << YAML::Key << "n_valid_per_env" << YAML::Value << cfg.twobits.n_valid_per_env;
      break;
    case ExperimentKind::kColoredMnist:
    case ExperimentKind::kInverse:
    case ExperimentKind::kOracle:
      out << YAML::Key << "train_params" << YAML::Value;
      emit_pairs(out, cfg.mnist.train_params);
      out << YAML::Key << "test_color_flip" << YAML::Value << num(cfg.mnist.test_color_flip);
      out << YAML::Key << "label_noise_test" << YAML::Value << num(cfg.mnist.label_noise_test);
      out << YAML::Key << "n_per_env" << YAML::Value << cfg.mnist.n_per_env;
      out << YAML::Key << "n_valid_per_env" << YAML::Value << cfg.mnist.n_valid_per_env;
      out << YAML::Key << "n_test" << YAML::Value << cfg.mnist.n_test;
      out << YAML::Key << "mnist_dir" << YAML::Value << YAML::DoubleQuoted << cfg.mnist_dir;
      break;
    case ExperimentKind::kDisentangle: {
      out << YAML::Key << "n" << YAML::Value << cfg.disentangle.n;
      out << YAML::Key << "sigma" << YAML::Value << num(cfg.disentangle.sigma);
      out << YAML::Key << "epsilon" << YAML::Value << num(cfg.disentangle.epsilon);
      out << YAML::Key << "tasks" << YAML::Value << cfg.disentangle.tasks;
      out << YAML::Key << "train_sizes" << YAML::Value;
      emit_ints(out, cfg.disentangle.train_sizes);
      out << YAML::Key << "repeats" << YAML::Value << cfg.complexity.repeats;
      out << YAML::Key << "test_size" << YAML::Value << cfg.complexity.test_size;
      out << YAML::Key << "c_grid" << YAML::Value;
      emit_numbers(out, cfg.complexity.c_grid);
      std::vector<std::string> pens;
      for (auto p : cfg.complexity.penalties) pens.push_back(to_string(p));
      out << YAML::Key << "penalties" << YAML::Value << YAML::Flow << pens;
      break;
    }
    case ExperimentKind::kMinimaxSuite:
      out << YAML::Key << "instances" << YAML::Value << cfg.minimax.instances;
      out << YAML::Key << "max_groups" << YAML::Value << cfg.minimax.max_groups;
      out << YAML::Key << "max_dim" << YAML::Value << cfg.minimax.max_dim;
      out << YAML::Key << "rows_per_group" << YAML::Value << cfg.minimax.rows_per_group;
      break;
  }
  out << YAML::EndMap;

  out << YAML::Key << "net" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "hidden" << YAML::Value;
  emit_ints(out, cfg.method.hidden);
  out << YAML::Key << "activation" << YAML::Value << to_string(cfg.method.activation);
  out << YAML::EndMap;

  const TrainConfig& t = cfg.method.train;
  out << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "optimizer" << YAML::Value << to_string(t.optimizer);
  out << YAML::Key << "learning_rate" << YAML::Value << num(t.learning_rate);
  out << YAML::Key << "l2_weight_decay" << YAML::Value << num(t.l2_weight_decay);
  out << YAML::Key << "epochs" << YAML::Value << t.max_epochs;
  out << YAML::Key << "eval_every" << YAML::Value << cfg.method.eval_every;
  out << YAML::Key << "rescale_penalty" << YAML::Value << cfg.method.rescale_penalty;
  out << YAML::EndMap;

  const BonsaiConfig& b = cfg.bonsai;
  out << YAML::Key << "bonsai" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "rounds" << YAML::Value << b.discovery.rounds;
  out << YAML::Key << "discovery_epochs" << YAML::Value;
  emit_ints(out, b.discovery.epochs);
  out << YAML::Key << "discovery_learning_rate" << YAML::Value << num(b.discovery.train.learning_rate);
  out << YAML::Key << "discovery_l2" << YAML::Value << num(b.discovery.train.l2_weight_decay);
  out << YAML::Key << "patience" << YAML::Value << b.discovery.train.patience;
  out << YAML::Key << "synthesis_epochs" << YAML::Value << b.synthesis.train.max_epochs;
  out << YAML::Key << "synthesis_learning_rate" << YAML::Value << num(b.synthesis.train.learning_rate);
  out << YAML::Key << "synthesis_l2" << YAML::Value << num(b.synthesis.train.l2_weight_decay);
  out << YAML::Key << "distill_weight" << YAML::Value << num(b.synthesis.distill_weight);
  out << YAML::Key << "tau" << YAML::Value << num(b.synthesis.tau);
  out << YAML::EndMap;

  out << YAML::Key << "methods" << YAML::Value;
  if (cfg.methods.empty()) out << YAML::Flow;
  out << YAML::BeginSeq;
  for (const auto& m : cfg.methods) {
    out << YAML::BeginMap;
    out << YAML::Key << "method" << YAML::Value << to_string(m.spec.method);
    out << YAML::Key << "init" << YAML::Value << to_string(m.init);
    out << YAML::Key << "frozen" << YAML::Value << m.spec.frozen;
    out << YAML::Key << "penalty_weight" << YAML::Value << num(m.spec.penalty_weight);
    out << YAML::Key << "sweep" << YAML::Value;
    emit_numbers(out, m.spec.sweep);
    out << YAML::Key << "pretrain_epochs" << YAML::Value << m.spec.pretrain_epochs;
    out << YAML::Key << "groupdro_step" << YAML::Value << num(m.spec.groupdro_step);
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) { return emit_config(a) == emit_config(b); }

ExperimentConfig twobits_smoke_config() {
  ExperimentConfig cfg;
  cfg.kind = ExperimentKind::kTwoBits;
  cfg.name = "twobits-smoke";
  cfg.twobits.n_per_env = 2000;
  cfg.twobits.n_valid_per_env = 500;
  cfg.method.hidden = {16};
  cfg.method.train.learning_rate = 0.01;
  cfg.method.train.max_epochs = 100;
  MethodEntry erm;
  MethodEntry vrex;
  vrex.spec.method = MethodKind::kVrex;
  vrex.spec.penalty_weight = 100.0;
  MethodEntry gdro;
  gdro.spec.method = MethodKind::kGroupDro;
  cfg.methods = {erm, vrex, gdro};
  cfg.bonsai.discovery.hidden = cfg.method.hidden;
  cfg.bonsai.synthesis.hidden = cfg.method.hidden;
  return cfg;
}

}  // namespace bonsai
