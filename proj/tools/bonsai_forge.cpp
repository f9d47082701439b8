// tools/bonsai_forge.cpp

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

// bonsai-forge command line.
//
//   bonsai_forge run experiment.yaml
//   bonsai_forge train --kind twobits --method vrex --weight 100
//   bonsai_forge report runs/a runs/b --out tables
//
// Exit status: 0 success, 2 bad configuration or arguments, 3 runtime error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "bonsai/checkpoint.hpp"
#include "bonsai/config.hpp"
#include "bonsai/rerm.hpp"
#include "bonsai/rng.hpp"
#include "bonsai/workbench.hpp"

using namespace bonsai;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 1;
};

struct Source {
  std::string config_path;
  std::string kind;
};

void add_source(CLI::App* cmd, Source& src) {
  cmd->add_option("--config", src.config_path, "experiment config (YAML)")->check(CLI::ExistingFile);
  cmd->add_option("--kind", src.kind, "experiment kind when no config is given");
}

ExperimentConfig load(const Source& src, const Globals& g) {
  ExperimentConfig cfg;
  if (!src.config_path.empty()) {
    cfg = parse_config(src.config_path);
  } else {
    cfg = twobits_smoke_config();
    if (!src.kind.empty()) cfg.kind = experiment_from_string(src.kind);
    if (cfg.kind == ExperimentKind::kInverse) cfg.mnist = inverse_colored_mnist_defaults();
  }
  if (!src.config_path.empty() && !src.kind.empty() && experiment_from_string(src.kind) != cfg.kind) {
    throw ConfigError("--kind " + src.kind + " contradicts the config's kind " + to_string(cfg.kind));
  }
  if (g.seed) cfg.seeds = {*g.seed};
  if (!g.out.empty()) cfg.output_dir = g.out;
  return cfg;
}

void print_summary(const RunSummary& s, const ExperimentConfig& cfg) {
  std::cout << "run directory: " << s.dir << "\n";
  if (cfg.kind == ExperimentKind::kTwoBits || cfg.kind == ExperimentKind::kColoredMnist ||
      cfg.kind == ExperimentKind::kInverse || cfg.kind == ExperimentKind::kOracle) {
    std::cout << report_runs({s.dir}).to_text();
  } else {
    for (const auto& r : s.rows) {
      if (r.seed == "mean") std::cout << r.method << ' ' << r.init << ' ' << r.weight << ' ' << r.metric << ' '
                                      << format_number(r.value) << '\n';
    }
  }
}

std::vector<double> parse_weights(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--weights: '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw ConfigError("--weights: empty list");
  return out;
}

// Groups over pooled train / valid data, one per training environment when
// every training environment has a validation partner, otherwise one group.
std::vector<RermGroup> rerm_groups(const EnvironmentSet& envs, Dataset& train, Dataset& valid) {
  const auto tg = environment_groups(envs, Role::kTrain, train);
  const auto vg = environment_groups(envs, Role::kValid, valid);
  if (tg.size() != vg.size()) return single_rerm_group(train, valid);
  std::vector<RermGroup> out;
  for (std::size_t i = 0; i < tg.size(); ++i) out.push_back({tg[i].name, tg[i].rows, vg[i].rows});
  return out;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"bonsai-forge: rich representations and invariant training"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "run this single seed");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--threads", g.threads, "parallel seeds")->check(CLI::PositiveNumber);

  // run
  std::string run_path;
  auto* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("config", run_path, "experiment config (YAML)")->required()->check(CLI::ExistingFile);

  // gen-data
  Source gen_src;
  std::string gen_file;
  Index gen_task = 0, gen_samples = 1000;
  bool gen_entangled = false;
  auto* gen = app.add_subcommand("gen-data", "write a generated dataset as CSV (x0..,y,env)");
  add_source(gen, gen_src);
  gen->add_option("--file", gen_file, "output CSV (default: stdout)");
  gen->add_option("--task", gen_task, "disentangle: task index");
  gen->add_option("--samples", gen_samples, "disentangle: sample count");
  gen->add_flag("--entangled", gen_entangled, "disentangle: rotated features");

  // rerm
  Source rerm_src;
  int rerm_epochs = 100;
  auto* rerm = app.add_subcommand("rerm", "robust ERM over the training environments");
  add_source(rerm, rerm_src);
  rerm->add_option("--epochs", rerm_epochs, "maximum epochs")->check(CLI::PositiveNumber);

  // bonsai
  Source bonsai_src;
  auto* bons = app.add_subcommand("bonsai", "discovery and synthesis of a rich representation");
  add_source(bons, bonsai_src);

  // train / sweep
  Source train_src;
  std::string train_method = "erm", train_init = "rand", sweep_weights;
  double train_weight = 0.0;
  int train_pretrain = 0;
  bool train_frozen = false;
  auto* train = app.add_subcommand("train", "train one method");
  auto* sweep = app.add_subcommand("sweep", "train one method over several penalty weights");
  for (auto* c : {train, sweep}) {
    add_source(c, train_src);
    c->add_option("--method", train_method, "erm | vrex | groupdro | dro");
    c->add_option("--init", train_init, "rand | erm | bonsai");
    c->add_option("--pretrain-epochs", train_pretrain, "ERM epochs before the method (init erm)");
    c->add_flag("--frozen", train_frozen, "train only the linear head (init bonsai)");
  }
  train->add_option("--weight", train_weight, "penalty weight");
  sweep->add_option("--weights", sweep_weights, "comma-separated penalty weights")->required();

  // probe / minimax
  Source probe_src, minimax_src;
  auto* probe = app.add_subcommand("probe", "probe costs and information relations of TwoBits feature maps");
  add_source(probe, probe_src);
  auto* minimax = app.add_subcommand("minimax", "minimax equality on random grouped instances");
  add_source(minimax, minimax_src);

  // report
  std::vector<std::string> report_dirs;
  auto* report = app.add_subcommand("report", "aggregate run directories into a methods x init table");
  report->add_option("runs", report_dirs, "run directories")->required()->check(CLI::ExistingDirectory);

  // checkpoint inspection
  std::string ckpt_path;
  bool ckpt_force = false;
  auto* ckpt = app.add_subcommand("checkpoint", "verify and describe a checkpoint");
  ckpt->add_option("path", ckpt_path, "checkpoint file")->required()->check(CLI::ExistingFile);
  ckpt->add_flag("--force", ckpt_force, "load despite a hash mismatch");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (seed_opt->count() > 0) g.seed = seed_value;
  const RunOptions ropts{g.threads, true};

  if (run->parsed()) {
    ExperimentConfig cfg = load({run_path, ""}, g);
    print_summary(run_experiment(cfg, ropts), cfg);
  } else if (gen->parsed()) {
    const ExperimentConfig cfg = load(gen_src, g);
    std::ofstream file;
    if (!gen_file.empty()) {
      file.open(gen_file);
      if (!file) throw Error("cannot write '" + gen_file + "'");
    }
    std::ostream& os = gen_file.empty() ? std::cout : file;
    if (cfg.kind == ExperimentKind::kDisentangle) {
      DisentangleSpec spec = cfg.disentangle;
      spec.seed = cfg.seeds.front();
      const TaskSet t = gen_entangled ? make_entangled_tasks(spec, gen_samples, 0)
                                      : make_disentangled_tasks(spec, gen_samples, 0);
      write_csv(os, t.task(gen_task));
    } else {
      write_csv(os, make_environments(cfg, cfg.seeds.front()));
    }
  } else if (rerm->parsed()) {
    const ExperimentConfig cfg = load(rerm_src, g);
    const EnvironmentSet envs = make_environments(cfg, cfg.seeds.front());
    Dataset tr, va;
    const auto groups = rerm_groups(envs, tr, va);
    TrainConfig tc = cfg.bonsai.discovery.train;
    tc.max_epochs = rerm_epochs;
    tc.seed = cfg.seeds.front();
    const MlpShape shape{envs.dim(), cfg.method.hidden, 1, 1, cfg.method.activation};
    RermResult r = rerm_train(tr, va, groups, shape, tc);
    const fs::path dir = fs::path(cfg.output_dir) / cfg.name;
    r.report.checkpoint = (dir / "rerm.ckpt").string();
    save_checkpoint(r.report.checkpoint, r.model, {{"seed", tc.seed}, {"model", "rerm"}});
    write_file_atomic((dir / "rerm.json").string(), r.report.to_json().dump(2) + "\n");
    std::cout << "best epoch " << r.report.best_epoch << ", valid max-group loss "
              << format_number(r.report.best_valid_dro) << "\ncheckpoint: " << r.report.checkpoint << "\n";
  } else if (bons->parsed()) {
    const ExperimentConfig cfg = load(bonsai_src, g);
    const EnvironmentSet envs = make_environments(cfg, cfg.seeds.front());
    BonsaiConfig b = cfg.bonsai;
    b.discovery.train.seed = derive_seed(cfg.seeds.front(), "bonsai/discovery");
    b.synthesis.train.seed = derive_seed(cfg.seeds.front(), "bonsai/synthesis");
    const RichRepresentation rep = bonsai_run(envs, b);
    const fs::path dir = fs::path(cfg.output_dir) / cfg.name;
    save_checkpoint((dir / "representation.ckpt").string(), rep.net,
                    {{"seed", cfg.seeds.front()}, {"model", "representation"}, {"config_hash", sha1_hex(emit_config(cfg))}});
    write_file_atomic((dir / "bonsai.json").string(), rep.report.dump(2) + "\n");
    std::cout << "heads: " << rep.k << "\nrepresentation: " << (dir / "representation.ckpt").string() << "\n";
  } else if (train->parsed() || sweep->parsed()) {
    ExperimentConfig cfg = load(train_src, g);
    MethodEntry e;
    try {
      e.spec.method = method_from_string(train_method);
      e.init = init_from_string(train_init);
    } catch (const Error& err) {
      throw ConfigError(err.what());
    }
    e.spec.frozen = train_frozen;
    e.spec.pretrain_epochs = train_pretrain;
    e.spec.penalty_weight = train_weight;
    if (sweep->parsed()) e.spec.sweep = parse_weights(sweep_weights);
    cfg.methods = {e};
    cfg.validate();
    print_summary(run_experiment(cfg, ropts), cfg);
  } else if (probe->parsed() || minimax->parsed()) {
    const Source& src = probe->parsed() ? probe_src : minimax_src;
    ExperimentConfig cfg = load(src, g);
    if (probe->parsed() && cfg.kind == ExperimentKind::kTwoBits) cfg.kind = ExperimentKind::kProbeSuite;
    if (minimax->parsed() && cfg.kind == ExperimentKind::kTwoBits) cfg.kind = ExperimentKind::kMinimaxSuite;
    const ExperimentKind want = probe->parsed() ? ExperimentKind::kProbeSuite : ExperimentKind::kMinimaxSuite;
    if (cfg.kind != want) throw ConfigError("this subcommand runs kind " + to_string(want));
    if (src.config_path.empty()) cfg.name = to_string(want);
    cfg.methods.clear();
    print_summary(run_experiment(cfg, ropts), cfg);
  } else if (report->parsed()) {
    const ReportTable t = report_runs(report_dirs);
    std::cout << t.to_text();
    if (!g.out.empty()) {
      write_file_atomic((fs::path(g.out) / "report.csv").string(), t.to_csv());
      write_file_atomic((fs::path(g.out) / "report.json").string(), t.to_json().dump(2) + "\n");
    }
  } else if (ckpt->parsed()) {
    const Checkpoint c = load_checkpoint(ckpt_path, ckpt_force);
    for (const auto& w : c.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << nlohmann::json{{"version", c.version},
                                {"shape", shape_to_json(c.shape)},
                                {"parameters", c.parameters.size()},
                                {"content_hash", c.content_hash},
                                {"provenance", c.provenance}}
                     .dump(2)
              << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const CheckpointHashError& e) {
    std::cerr << "error: " << e.what() << " (use --force to load anyway)\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
