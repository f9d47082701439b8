// bonsai/disentangle.hpp

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

// Sample complexity of linear probing on a disentangled representation versus
// an orthonormal rotation of it.
//
// Fits use the liblinear objective
//   L1:  |(w, b)|_1       + C sum_i log(1 + exp(-s_i (x_i.w + b)))
//   L2:  1/2 |(w, b)|^2   + C sum_i log(1 + exp(-s_i (x_i.w + b)))
// where the intercept is a constant feature of value 1 and is penalized along
// with w. A penalized intercept keeps the problem bounded when every training
// label agrees.

#ifndef BONSAI_DISENTANGLE_HPP_
#define BONSAI_DISENTANGLE_HPP_

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bonsai/common.hpp"
#include "bonsai/environments.hpp"

namespace bonsai {

enum class Penalty { kL1, kL2 };

std::string to_string(Penalty p);
Penalty penalty_from_string(const std::string& s);

struct LogregOptions {
  double tolerance = 1e-7;  // on the minimum-norm subgradient, max-abs
  int max_iterations = 500;
};

struct LogregFit {
  Penalty penalty = Penalty::kL2;
  double c = 1.0;
  Vector weights;
  double bias = 0.0;
  double objective = 0.0;
  double optimality = 0.0;  // min-norm subgradient at the returned point
  int iterations = 0;

  Vector logits(const Matrix& x) const;
  double accuracy(const Matrix& x, const Vector& y) const;
};

/// Proximal Newton for L1 (coordinate descent on the local quadratic model),
/// damped Newton for L2. `warm` seeds the iterate when its size matches.
/// Throws NumericalError if the tolerance is not met.
LogregFit fit_sparse_logreg(const Matrix& x, const Vector& y, Penalty penalty, double c,
                            const LogregOptions& opts = {}, const LogregFit* warm = nullptr);

/// Objective value of (w, b) under the fit's convention.
double logreg_objective(const Matrix& x, const Vector& y, Penalty penalty, double c, const Vector& w, double b);

struct ComplexitySweepOptions {
  int repeats = 50;
  Index test_size = 2000;
  std::vector<double> c_grid{0.01, 0.05, 0.1, 0.5, 1, 5, 10, 50, 100};
  std::vector<Penalty> penalties{Penalty::kL1, Penalty::kL2};
  LogregOptions fit;

  void validate() const;
};

struct CurvePoint {
  Index size = 0;
  std::string family;   // "disentangled" | "entangled"
  std::string penalty;  // "l1", "l2", "l1+l2" (validation-selected) or "l1:C=<c>" (fixed)
  double mean = 0.0;
  double std = 0.0;  // sample std over repeats
};

struct SampleComplexityCurve {
  std::vector<Index> train_sizes;
  int repeats = 0;
  std::vector<CurvePoint> points;

  /// Point for (size, family, penalty); throws InvalidArgument if missing.
  const CurvePoint& at(Index size, const std::string& family, const std::string& penalty) const;
  std::string to_csv() const;  // size,family,penalty,mean,std
  nlohmann::json to_json() const;
};

/// Repeat r draws train and validation sets of the current size and a test set
/// of opts.test_size, then fits task r mod spec.tasks on both families over
/// every penalty and C. Training sets are nested across sizes within a repeat.
SampleComplexityCurve run_complexity_sweep(const DisentangleSpec& spec, const ComplexitySweepOptions& opts = {});

}  // namespace bonsai

#endif  // BONSAI_DISENTANGLE_HPP_
