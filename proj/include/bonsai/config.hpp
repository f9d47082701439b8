// bonsai/config.hpp

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

// Experiment configuration files (YAML).
//
// A config names the experiment kind, the generator parameters for that kind,
// the network and training settings, the methods to run and the seeds. Every
// key is checked: unknown keys and wrong types are reported with their line.
// emit_config writes the canonical form, which parses back to an equal config.

#ifndef BONSAI_CONFIG_HPP_
#define BONSAI_CONFIG_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "bonsai/bonsai.hpp"
#include "bonsai/disentangle.hpp"
#include "bonsai/environments.hpp"
#include "bonsai/trainers.hpp"

namespace bonsai {

/// Bad or inconsistent configuration. `line` is 1-based, 0 when unknown.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

enum class ExperimentKind { kTwoBits, kColoredMnist, kInverse, kOracle, kDisentangle, kProbeSuite, kMinimaxSuite };

std::string to_string(ExperimentKind k);
ExperimentKind experiment_from_string(const std::string& s);

/// Which epoch (and penalty weight) a reported accuracy comes from.
enum class Selection { kValid, kTestPeek };

std::string to_string(Selection s);

/// One row of the methods table: a method with its initialization, and either
/// a fixed penalty weight or a sweep over several.
struct MethodEntry {
  MethodSpec spec;
  InitKind init = InitKind::kRandom;

  /// "rand", "erm", "bonsai" or "bonsai-cf".
  std::string init_label() const;
  std::vector<double> weights() const;  // spec.sweep, or {spec.penalty_weight}
};

struct MinimaxSuiteConfig {
  int instances = 50;
  int max_groups = 5;
  Index max_dim = 10;
  Index rows_per_group = 40;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kTwoBits;
  std::string name = "run";
  std::string output_dir = "runs";
  std::vector<std::uint64_t> seeds{0};
  Selection selection = Selection::kTestPeek;

  // generator parameters; only the one matching `kind` is read and emitted
  TwoBitsSpec twobits;
  ColoredMnistSpec mnist;     // colored-mnist, inverse and oracle
  std::string mnist_dir;      // empty: default_mnist_dir()
  DisentangleSpec disentangle;
  ComplexitySweepOptions complexity;
  MinimaxSuiteConfig minimax;

  MethodConfig method;  // net architecture and method training
  BonsaiConfig bonsai;  // used when an entry starts from a representation
  std::vector<MethodEntry> methods;

  /// Cross-field checks; throws ConfigError.
  void validate() const;
  bool needs_representation() const;
};

ExperimentConfig parse_config(const std::string& path);
/// `source` names the text in error messages.
ExperimentConfig parse_config_string(const std::string& text, const std::string& source = "<config>");

/// Canonical YAML: fixed key order, every field written.
std::string emit_config(const ExperimentConfig& cfg);

/// Canonical forms compare equal.
bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

/// The config of a small TwoBits run (ERM and vREx from scratch, GroupDRO),
/// sized to finish in seconds.
ExperimentConfig twobits_smoke_config();

}  // namespace bonsai

#endif  // BONSAI_CONFIG_HPP_
