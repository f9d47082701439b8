// bonsai/workbench.cpp

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

#include "bonsai/workbench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "bonsai/checkpoint.hpp"
#include "bonsai/disentangle.hpp"
#include "bonsai/environments.hpp"
#include "bonsai/rng.hpp"

namespace bonsai {

namespace fs = std::filesystem;

std::string format_number(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string format_metrics_csv(const std::vector<MetricRow>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : rows) {
    for (const std::string* f : {&r.method, &r.init, &r.weight, &r.seed, &r.split, &r.metric}) {
      require(f->find_first_of(",\n\"") == std::string::npos, "metrics: field '" + *f + "' needs quoting");
    }
    out += r.method + ',' + r.init + ',' + r.weight + ',' + r.seed + ',' + r.split + ',' + r.metric + ',' +
           format_number(r.value) + '\n';
  }
  return out;
}

std::vector<MetricRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw SchemaError("metrics.csv: header is '" + line + "', expected '" + kMetricsHeader + "'");
  }
  std::vector<MetricRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1) {
      f.push_back(line.substr(start, pos - start));
    }
    f.push_back(line.substr(start));
    if (f.size() != 7) {
      throw SchemaError("metrics.csv line " + std::to_string(lineno) + ": " + std::to_string(f.size()) +
                        " fields, expected 7");
    }
    MetricRow r{f[0], f[1], f[2], f[3], f[4], f[5], 0.0};
    const auto res = std::from_chars(f[6].data(), f[6].data() + f[6].size(), r.value);
    if (res.ec != std::errc() || res.ptr != f[6].data() + f[6].size()) {
      throw SchemaError("metrics.csv line " + std::to_string(lineno) + ": bad value '" + f[6] + "'");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace {

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

std::vector<MetricRow> summarize_seeds(const std::vector<MetricRow>& rows) {
  using Key = std::tuple<std::string, std::string, std::string, std::string, std::string>;
  std::vector<Key> order;
  std::map<Key, std::vector<double>> values;
  for (const auto& r : rows) {
    if (r.seed == "mean" || r.seed == "std") continue;
    Key k{r.method, r.init, r.weight, r.split, r.metric};
    auto [it, fresh] = values.try_emplace(k);
    if (fresh) order.push_back(k);
    it->second.push_back(r.value);
  }
  std::vector<MetricRow> out;
  for (const auto& k : order) {
    const auto& v = values[k];
    const double m = mean_of(v);
    const auto& [method, init, weight, split, metric] = k;
    out.push_back({method, init, weight, "mean", split, metric, m});
    out.push_back({method, init, weight, "std", split, metric, sample_std(v, m)});
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct MnistCache {
  std::mutex mu;
  std::map<std::string, std::pair<MnistImages, MnistImages>> by_dir;

  const std::pair<MnistImages, MnistImages>& get(const std::string& dir) {
    std::lock_guard<std::mutex> lock(mu);
    auto it = by_dir.find(dir);
    if (it == by_dir.end()) {
      it = by_dir.emplace(dir, std::make_pair(load_mnist_split(dir, true), load_mnist_split(dir, false))).first;
    }
    return it->second;
  }
};

MnistCache& mnist_cache() {
  static MnistCache cache;
  return cache;
}

}  // namespace

EnvironmentSet make_environments(const ExperimentConfig& cfg, std::uint64_t seed) {
  switch (cfg.kind) {
    case ExperimentKind::kTwoBits:
    case ExperimentKind::kProbeSuite: {
      TwoBitsSpec s = cfg.twobits;
      s.seed = seed;
      return make_twobits(s);
    }
    case ExperimentKind::kColoredMnist:
    case ExperimentKind::kInverse:
    case ExperimentKind::kOracle: {
      const auto& [train, test] = mnist_cache().get(cfg.mnist_dir.empty() ? default_mnist_dir() : cfg.mnist_dir);
      ColoredMnistSpec s = cfg.mnist;
      s.seed = seed;
      if (cfg.kind == ExperimentKind::kInverse) return make_inverse_colored_mnist(s, train, test);
      EnvironmentSet set = make_colored_mnist(s, train, test);
      return cfg.kind == ExperimentKind::kOracle ? grayscale_oracle(set) : set;
    }
    default:
      throw InvalidArgument("make_environments: kind " + to_string(cfg.kind) + " has no environments");
  }
}

GroupedFeatures random_minimax_instance(Index groups, Index dim, Index rows_per_group, std::uint64_t seed) {
  require(groups >= 1 && dim >= 1 && rows_per_group >= 1, "random_minimax_instance: sizes must be positive");
  Rng rng(seed);
  GroupedFeatures gf;
  for (Index g = 0; g < groups; ++g) {
    Matrix x(rows_per_group, dim);
    const double shift = 0.5 * rng.normal();
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal() + shift;
    Vector beta(dim);
    for (Index j = 0; j < dim; ++j) beta[j] = 1.5 * rng.normal();
    const Vector z = x * beta;
    Vector y(rows_per_group);
    for (Index i = 0; i < y.size(); ++i) y[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-z[i]))) ? 1.0 : 0.0;
    gf.x.push_back(std::move(x));
    gf.y.push_back(std::move(y));
  }
  return gf;
}

// ---------------------------------------------------------------------------

namespace {

struct SeedOutput {
  std::vector<MetricRow> rows;
  nlohmann::json report;
};

struct RunContext {
  const ExperimentConfig& cfg;
  fs::path dir;
  std::string config_hash;
  bool checkpoints;
};

nlohmann::json provenance(const RunContext& ctx, std::uint64_t seed, const std::string& what) {
  return {{"config_hash", ctx.config_hash}, {"seed", seed}, {"run", ctx.cfg.name}, {"model", what}};
}

void checkpoint(const RunContext& ctx, std::uint64_t seed, const std::string& file, const MlpNet& net,
                const std::string& what) {
  if (!ctx.checkpoints) return;
  save_checkpoint((ctx.dir / "checkpoints" / ("seed" + std::to_string(seed)) / file).string(), net,
                  provenance(ctx, seed, what));
}

SeedOutput run_methods(const RunContext& ctx, std::uint64_t seed) {
  const ExperimentConfig& cfg = ctx.cfg;
  const std::string s = std::to_string(seed);
  SeedOutput out;
  const EnvironmentSet envs = make_environments(cfg, seed);
  out.report = {{"seed", seed}, {"environments", envs.spec}};

  RichRepresentation rep;
  if (cfg.needs_representation()) {
    BonsaiConfig b = cfg.bonsai;
    b.discovery.train.seed = derive_seed(seed, "bonsai/discovery");
    b.synthesis.train.seed = derive_seed(seed, "bonsai/synthesis");
    rep = bonsai_run(envs, b);
    out.report["representation"] = rep.report;
    checkpoint(ctx, seed, "representation.ckpt", rep.net, "representation");
  }

  nlohmann::json entries = nlohmann::json::array();
  for (const MethodEntry& entry : cfg.methods) {
    MethodConfig mc = cfg.method;
    mc.train.seed = seed;
    MethodSpec spec = entry.spec;
    spec.sweep.clear();
    const MethodInit init{entry.init, entry.init == InitKind::kRepresentation ? &rep : nullptr};
    const std::vector<double> weights = entry.weights();
    const SweepTable table = penalty_sweep(envs, init, spec, weights, mc);
    const std::string method = to_string(entry.spec.method), label = entry.init_label();

    for (const SweepRow& row : table.rows) {
      const MethodResult& r = row.result;
      const std::string w = format_number(row.weight);
      auto add = [&](const char* split, const char* metric, double v) {
        out.rows.push_back({method, label, w, s, split, metric, v});
      };
      add("train", "accuracy", r.history.back().train_accuracy);
      add("valid", "accuracy_valid_selected", r.selected_valid.valid_accuracy);
      add("test", "accuracy_valid_selected", r.selected_valid.test_accuracy);
      add("test", "accuracy_test_peek", r.selected_test.test_accuracy);
      add("test", "accuracy_final", r.history.back().test_accuracy);
    }
    const bool by_valid = cfg.selection == Selection::kValid;
    const SweepRow& chosen = table.rows[by_valid ? table.by_valid : table.by_test];
    const EpochMetrics& m = by_valid ? chosen.result.selected_valid : chosen.result.selected_test;
    out.rows.push_back({method, label, "selected", s, "test", "accuracy", m.test_accuracy});
    out.rows.push_back({method, label, "selected", s, "valid", "accuracy", m.valid_accuracy});
    checkpoint(ctx, seed, method + "-" + label + ".ckpt",
               by_valid ? chosen.result.valid_model : chosen.result.test_model, method + "/" + label);

    entries.push_back({{"method", method},
                       {"init", label},
                       {"selected", {{"rule", to_string(cfg.selection)}, {"weight", chosen.weight}, {"epoch", m.epoch}}},
                       {"sweep", table.to_json()}});
  }
  out.report["methods"] = std::move(entries);
  return out;
}

SeedOutput run_disentangle(const RunContext& ctx, std::uint64_t seed) {
  DisentangleSpec spec = ctx.cfg.disentangle;
  spec.seed = seed;
  const SampleComplexityCurve curve = run_complexity_sweep(spec, ctx.cfg.complexity);
  write_file_atomic((ctx.dir / "curves" / ("seed" + std::to_string(seed) + ".csv")).string(), curve.to_csv());
  SeedOutput out;
  for (const auto& p : curve.points) {
    out.rows.push_back({"logreg", p.family, std::to_string(p.size), std::to_string(seed), "test",
                        "accuracy_" + p.penalty, p.mean});
  }
  out.report = {{"seed", seed}, {"curve", curve.to_json()}};
  return out;
}

SeedOutput run_probe_suite(const RunContext& ctx, std::uint64_t seed) {
  const EnvironmentSet envs = make_environments(ctx.cfg, seed);
  Dataset pooled;
  const std::vector<Group> groups = environment_groups(envs, Role::kTrain, pooled);
  const Matrix shape = pooled.x.col(0), color = pooled.x.col(1);
  const std::map<std::string, const Matrix*> maps{{"both", &pooled.x}, {"color", &color}, {"shape", &shape}};
  const std::vector<std::pair<std::string, std::string>> pairs{{"shape", "color"}, {"both", "shape"}, {"both", "color"}};
  SeedOutput out;
  const std::string s = std::to_string(seed);
  nlohmann::json rel = nlohmann::json::array();
  for (const auto& [a, b] : pairs) {
    const InfoRelation r = info_relation(*maps.at(a), *maps.at(b), pooled.y);
    const std::string init = a + "|" + b;
    out.rows.push_back({"info", init, "0", s, "train", "c1", r.c1});
    out.rows.push_back({"info", init, "0", s, "train", "c2", r.c2});
    out.rows.push_back({"info", init, "0", s, "train", "c12", r.c12});
    nlohmann::json j = r.to_json();
    j["pair"] = init;
    rel.push_back(std::move(j));
  }
  nlohmann::json mm = nlohmann::json::object();
  for (const auto& [name, m] : maps) {
    GroupedFeatures gf;
    for (const Group& g : groups) {
      Matrix x(static_cast<Index>(g.rows.size()), m->cols());
      Vector y(x.rows());
      for (Index i = 0; i < x.rows(); ++i) {
        x.row(i) = m->row(g.rows[static_cast<std::size_t>(i)]);
        y[i] = pooled.y[g.rows[static_cast<std::size_t>(i)]];
      }
      gf.x.push_back(std::move(x));
      gf.y.push_back(std::move(y));
    }
    const MinimaxResult r = minimax_check(gf);
    out.rows.push_back({"minimax", name, "0", s, "train", "r_rw", r.r_rw});
    out.rows.push_back({"minimax", name, "0", s, "train", "r_dro", r.r_dro});
    mm[name] = {{"r_rw", r.r_rw}, {"r_dro", r.r_dro}, {"lambda", r.lambda}};
  }
  out.report = {{"seed", seed}, {"environments", envs.spec}, {"relations", rel}, {"minimax", mm}};
  return out;
}

SeedOutput run_minimax_suite(const RunContext& ctx, std::uint64_t seed) {
  const MinimaxSuiteConfig& mc = ctx.cfg.minimax;
  Rng rng(derive_seed(seed, "minimax-suite"));
  SeedOutput out;
  const std::string s = std::to_string(seed);
  nlohmann::json inst = nlohmann::json::array();
  for (int i = 0; i < mc.instances; ++i) {
    const auto g = static_cast<Index>(2 + rng.below(static_cast<std::uint64_t>(mc.max_groups - 1)));
    const auto d = static_cast<Index>(1 + rng.below(static_cast<std::uint64_t>(mc.max_dim)));
    const GroupedFeatures gf =
        random_minimax_instance(g, d, mc.rows_per_group, derive_seed(seed, "minimax/" + std::to_string(i)));
    const MinimaxResult r = minimax_check(gf);
    const std::string name = "instance" + std::to_string(i);
    out.rows.push_back({"minimax", name, "0", s, "train", "r_rw", r.r_rw});
    out.rows.push_back({"minimax", name, "0", s, "train", "r_dro", r.r_dro});
    out.rows.push_back({"minimax", name, "0", s, "train", "gap", r.r_dro - r.r_rw});
    inst.push_back({{"groups", g}, {"dim", d}, {"r_rw", r.r_rw}, {"r_dro", r.r_dro}, {"lambda", r.lambda}});
  }
  out.report = {{"seed", seed}, {"instances", inst}};
  return out;
}

SeedOutput run_seed(const RunContext& ctx, std::uint64_t seed) {
  switch (ctx.cfg.kind) {
    case ExperimentKind::kDisentangle: return run_disentangle(ctx, seed);
    case ExperimentKind::kProbeSuite: return run_probe_suite(ctx, seed);
    case ExperimentKind::kMinimaxSuite: return run_minimax_suite(ctx, seed);
    default: return run_methods(ctx, seed);
  }
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

class RunLog {
 public:
  explicit RunLog(const fs::path& path) : out_(path, std::ios::app) {}
  void line(const std::string& msg) {
    std::lock_guard<std::mutex> lock(mu_);
    out_ << timestamp() << ' ' << msg << '\n';
    out_.flush();
  }

 private:
  std::mutex mu_;
  std::ofstream out_;
};

}  // namespace

RunSummary run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  require(opts.threads >= 1, "run_experiment: threads must be >= 1");
  const fs::path dir = fs::path(cfg.output_dir) / cfg.name;
  fs::create_directories(dir);
  fs::remove(dir / "FAILED");
  RunLog log(dir / "run.log");
  const std::string canonical = emit_config(cfg);
  RunContext ctx{cfg, dir, sha1_hex(canonical), opts.checkpoints};
  log.line("start " + to_string(cfg.kind) + " config " + ctx.config_hash);

  try {
    write_file_atomic((dir / "config.yaml").string(), canonical);
    const std::size_t n = cfg.seeds.size();
    std::vector<SeedOutput> results(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          log.line("seed " + std::to_string(cfg.seeds[i]) + " started");
          results[i] = run_seed(ctx, cfg.seeds[i]);
          log.line("seed " + std::to_string(cfg.seeds[i]) + " done");
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    const auto threads = std::min<std::size_t>(static_cast<std::size_t>(opts.threads), n);
    if (threads <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }

    RunSummary summary;
    summary.dir = dir.string();
    nlohmann::json seeds = nlohmann::json::array();
    for (auto& r : results) {
      summary.rows.insert(summary.rows.end(), r.rows.begin(), r.rows.end());
      seeds.push_back(std::move(r.report));
    }
    const std::vector<MetricRow> stats = summarize_seeds(summary.rows);
    summary.rows.insert(summary.rows.end(), stats.begin(), stats.end());
    summary.report = {{"schema_version", kReportSchemaVersion},
                      {"kind", to_string(cfg.kind)},
                      {"name", cfg.name},
                      {"config_hash", ctx.config_hash},
                      {"selection", to_string(cfg.selection)},
                      {"seeds", std::move(seeds)}};
    write_file_atomic((dir / "metrics.csv").string(), format_metrics_csv(summary.rows));
    write_file_atomic((dir / "report.json").string(), summary.report.dump(2) + "\n");
    log.line("finished");
    return summary;
  } catch (const std::exception& e) {
    log.line(std::string("failed: ") + e.what());
    write_file_atomic((dir / "FAILED").string(), std::string(e.what()) + "\n");
    throw;
  }
}

// ---------------------------------------------------------------------------

namespace {

const std::vector<std::pair<std::string, std::string>>& column_names() {
  static const std::vector<std::pair<std::string, std::string>> c{
      {"rand", "Rand"}, {"erm", "ERM"}, {"bonsai", "Bonsai"}, {"bonsai-cf", "Bonsai-cf"}};
  return c;
}

const std::vector<std::pair<std::string, std::string>>& method_names() {
  static const std::vector<std::pair<std::string, std::string>> m{
      {"erm", "ERM"}, {"vrex", "vREx"}, {"groupdro", "GroupDRO"}, {"dro", "DRO"}};
  return m;
}

std::string display(const std::vector<std::pair<std::string, std::string>>& names, const std::string& key) {
  for (const auto& [k, v] : names) {
    if (k == key) return v;
  }
  return key;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw SchemaError("cannot read '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

const ReportCell* ReportTable::at(const std::string& method, const std::string& column) const {
  for (const auto& c : cells) {
    if (c.method == method && c.column == column) return &c;
  }
  return nullptr;
}

std::string ReportTable::to_csv() const {
  std::string out = "method,column,mean,std,n\n";
  for (const auto& c : cells) {
    out += c.method + ',' + c.column + ',' + format_number(c.mean) + ',' + format_number(c.std) + ',' +
           std::to_string(c.n) + '\n';
  }
  return out;
}

nlohmann::json ReportTable::to_json() const {
  nlohmann::json rows = nlohmann::json::object();
  for (const auto& c : cells) rows[c.method][c.column] = {{"mean", c.mean}, {"std", c.std}, {"n", c.n}};
  return {{"metric", metric}, {"methods", methods}, {"columns", columns}, {"cells", rows}};
}

std::string ReportTable::to_text() const {
  std::ostringstream os;
  os << std::left << std::setw(10) << "method";
  for (const auto& c : columns) os << std::setw(16) << c;
  os << '\n';
  for (const auto& m : methods) {
    os << std::setw(10) << m;
    for (const auto& c : columns) {
      const ReportCell* cell = at(m, c);
      std::ostringstream v;
      if (cell != nullptr) v << std::fixed << std::setprecision(1) << 100 * cell->mean << " +- " << 100 * cell->std;
      else v << "-";
      os << std::setw(16) << v.str();
    }
    os << '\n';
  }
  return os.str();
}

ReportTable report_runs(const std::vector<std::string>& run_dirs) {
  require(!run_dirs.empty(), "report: no run directories");
  std::vector<std::string> bad;
  std::string kind;
  std::vector<std::vector<MetricRow>> all;
  for (const auto& d : run_dirs) {
    try {
      const auto rep = nlohmann::json::parse(read_text(fs::path(d) / "report.json"));
      if (rep.value("schema_version", -1) != kReportSchemaVersion) {
        throw SchemaError("schema version " + rep.value("schema_version", nlohmann::json()).dump());
      }
      const auto k = rep.at("kind").get<std::string>();
      if (k == "disentangle" || k == "probe-suite" || k == "minimax-suite") {
        throw SchemaError("kind " + k + " has no methods table");
      }
      if (kind.empty()) kind = k;
      if (k != kind) throw SchemaError("kind " + k + " differs from " + kind);
      all.push_back(parse_metrics_csv(read_text(fs::path(d) / "metrics.csv")));
    } catch (const std::exception& e) {
      bad.push_back(d + " (" + e.what() + ")");
    }
  }
  if (!bad.empty()) {
    std::string msg = "report: incompatible runs:";
    for (const auto& b : bad) msg += "\n  " + b;
    throw SchemaError(msg);
  }

  std::map<std::pair<std::string, std::string>, std::vector<double>> values;
  for (const auto& rows : all) {
    for (const auto& r : rows) {
      if (r.weight != "selected" || r.split != "test" || r.metric != "accuracy") continue;
      if (r.seed == "mean" || r.seed == "std") continue;
      values[{r.method, r.init}].push_back(r.value);
    }
  }
  ReportTable t;
  t.metric = "selected test accuracy";
  for (const auto& [mk, mname] : method_names()) {
    bool used = false;
    for (const auto& [ck, cname] : column_names()) {
      auto it = values.find({mk, ck});
      if (it == values.end()) continue;
      used = true;
      const double m = mean_of(it->second);
      t.cells.push_back({mname, cname, m, sample_std(it->second, m), static_cast<int>(it->second.size())});
    }
    if (used) t.methods.push_back(mname);
  }
  for (const auto& [ck, cname] : column_names()) {
    if (std::any_of(t.cells.begin(), t.cells.end(), [&](const ReportCell& c) { return c.column == cname; })) {
      t.columns.push_back(cname);
    }
  }
  for (const auto& [key, v] : values) {
    if (display(method_names(), key.first) == key.first || display(column_names(), key.second) == key.second) {
      throw SchemaError("report: unknown method or init '" + key.first + "/" + key.second + "'");
    }
  }
  return t;
}

}  // namespace bonsai
