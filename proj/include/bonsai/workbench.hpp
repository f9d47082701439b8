// bonsai/workbench.hpp

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

// Experiment runner and reporting.
//
// A run directory holds
//   config.yaml    canonical config
//   metrics.csv    method,init,weight,seed,split,metric,value
//   report.json    per-seed details (histories, selections, generator specs)
//   checkpoints/   selected models and representations
//   run.log        timestamps; the only file that differs between reruns
//   FAILED         present when the run stopped on an error
// Rows with seed "mean" / "std" summarize every (method, init, weight, split,
// metric) group over the seeds; std is the sample standard deviation, 0 for a
// single seed.

#ifndef BONSAI_WORKBENCH_HPP_
#define BONSAI_WORKBENCH_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bonsai/config.hpp"
#include "bonsai/data.hpp"
#include "bonsai/probe.hpp"

namespace bonsai {

/// Metrics files or run directories that cannot be combined or parsed.
class SchemaError : public Error {
 public:
  using Error::Error;
};

inline constexpr const char* kMetricsHeader = "method,init,weight,seed,split,metric,value";
inline constexpr int kReportSchemaVersion = 1;

struct MetricRow {
  std::string method;
  std::string init;
  std::string weight;
  std::string seed;
  std::string split;
  std::string metric;
  double value = 0.0;
};

/// Shortest decimal that reads back to the same double.
std::string format_number(double v);

std::string format_metrics_csv(const std::vector<MetricRow>& rows);
/// Throws SchemaError on a wrong header, column count or value.
std::vector<MetricRow> parse_metrics_csv(const std::string& text);

/// Mean and std rows for every group of per-seed rows, in first-seen order.
std::vector<MetricRow> summarize_seeds(const std::vector<MetricRow>& rows);

/// The environments of a method-training kind for one seed.
EnvironmentSet make_environments(const ExperimentConfig& cfg, std::uint64_t seed);

/// Groups of Gaussian features with group-specific logistic labels.
GroupedFeatures random_minimax_instance(Index groups, Index dim, Index rows_per_group, std::uint64_t seed);

struct RunOptions {
  int threads = 1;  // seeds run in parallel up to this many
  bool checkpoints = true;
};

struct RunSummary {
  std::string dir;
  std::vector<MetricRow> rows;  // as written to metrics.csv
  nlohmann::json report;
};

/// Runs the config into <output_dir>/<name>. On error a FAILED file with the
/// message is left in the run directory and the error is rethrown.
RunSummary run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

struct ReportCell {
  std::string method;
  std::string column;
  double mean = 0.0;
  double std = 0.0;
  int n = 0;
};

/// Methods x initialization table. Columns are Rand, ERM, Bonsai, Bonsai-cf
/// (in that order, when present).
struct ReportTable {
  std::string metric;
  std::vector<std::string> methods;
  std::vector<std::string> columns;
  std::vector<ReportCell> cells;

  const ReportCell* at(const std::string& method, const std::string& column) const;
  std::string to_csv() const;  // method,column,mean,std,n
  nlohmann::json to_json() const;
  std::string to_text() const;
};

/// Aggregates the selected test accuracy of method-training runs: one value
/// per (run, seed), pooled over runs. Throws SchemaError naming the offending
/// runs when schemas or kinds differ.
ReportTable report_runs(const std::vector<std::string>& run_dirs);

}  // namespace bonsai

#endif  // BONSAI_WORKBENCH_HPP_
