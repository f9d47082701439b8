// bonsai/disentangle.cpp

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

#include "bonsai/disentangle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bonsai/losses.hpp"

namespace bonsai {

std::string to_string(Penalty p) { return p == Penalty::kL1 ? "l1" : "l2"; }

Penalty penalty_from_string(const std::string& s) {
  if (s == "l1") return Penalty::kL1;
  if (s == "l2") return Penalty::kL2;
  throw InvalidArgument("unknown penalty '" + s + "' (expected l1 or l2)");
}

namespace {

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

// Columns of x followed by a column of ones.
Matrix augment(const Matrix& x) {
  Matrix xa(x.rows(), x.cols() + 1);
  xa.leftCols(x.cols()) = x;
  xa.col(x.cols()).setOnes();
  return xa;
}

double regularizer(Penalty p, const Vector& theta) {
  return p == Penalty::kL1 ? theta.lpNorm<1>() : 0.5 * theta.squaredNorm();
}

double data_term(const Matrix& xa, const Vector& y, const Vector& theta) {
  const Vector z = xa * theta;
  double s = 0.0;
  for (Index i = 0; i < z.size(); ++i) s += softplus(z[i]) - y[i] * z[i];
  return s;
}

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

// Max-abs entry of the minimum-norm subgradient of |theta|_1 + data.
double l1_optimality(const Vector& theta, const Vector& g) {
  double m = 0.0;
  for (Index j = 0; j < theta.size(); ++j) {
    double v;
    if (theta[j] > 0.0) v = std::abs(g[j] + 1.0);
    else if (theta[j] < 0.0) v = std::abs(g[j] - 1.0);
    else v = std::max(std::abs(g[j]) - 1.0, 0.0);
    m = std::max(m, v);
  }
  return m;
}

struct Local {
  Vector grad;  // of the data term
  Matrix hess;
};

Local local_model(const Matrix& xa, const Vector& y, const Vector& theta, double c) {
  const Vector z = xa * theta;
  Vector r(z.size()), d(z.size());
  for (Index i = 0; i < z.size(); ++i) {
    const double s = sigmoid(z[i]);
    r[i] = s - y[i];
    d[i] = s * (1.0 - s);
  }
  Local out;
  out.grad = c * (xa.transpose() * r);
  const Matrix scaled = xa.array().colwise() * d.array();
  out.hess = c * (xa.transpose() * scaled);
  return out;
}

// A predicted decrease below this (relative to f) is within the rounding noise
// of a long loss sum; the step is then taken whole, a line search would stall.
constexpr double kFlat = 1e-10;

void fit_l2(const Matrix& xa, const Vector& y, double c, const LogregOptions& opts, Vector& theta, LogregFit& out) {
  double f = regularizer(Penalty::kL2, theta) + c * data_term(xa, y, theta);
  for (int it = 0;; ++it) {
    Local m = local_model(xa, y, theta, c);
    const Vector g = m.grad + theta;
    out.optimality = g.lpNorm<Eigen::Infinity>();
    out.iterations = it;
    if (out.optimality <= opts.tolerance) break;
    if (it >= opts.max_iterations) {
      std::ostringstream os;
      os << "fit_sparse_logreg(l2, C=" << c << "): gradient " << out.optimality << " after " << it << " iterations";
      throw NumericalError(os.str());
    }
    m.hess.diagonal().array() += 1.0;
    const Vector step = -m.hess.ldlt().solve(g);
    const double dec = g.dot(step);
    if (-dec <= kFlat * (1.0 + std::abs(f))) {
      theta += step;
      f = regularizer(Penalty::kL2, theta) + c * data_term(xa, y, theta);
      continue;
    }
    double t = 1.0;
    for (int k = 0; k < 60; ++k, t *= 0.5) {
      const Vector cand = theta + t * step;
      const double fc = regularizer(Penalty::kL2, cand) + c * data_term(xa, y, cand);
      if (fc <= f + 1e-4 * t * dec) {
        theta = cand;
        f = fc;
        break;
      }
    }
  }
  out.objective = f;
}

void fit_l1(const Matrix& xa, const Vector& y, double c, const LogregOptions& opts, Vector& theta, LogregFit& out) {
  const Index p = theta.size();
  double f = regularizer(Penalty::kL1, theta) + c * data_term(xa, y, theta);
  for (int it = 0;; ++it) {
    Local m = local_model(xa, y, theta, c);
    out.optimality = l1_optimality(theta, m.grad);
    out.iterations = it;
    if (out.optimality <= opts.tolerance) break;
    if (it >= opts.max_iterations) {
      std::ostringstream os;
      os << "fit_sparse_logreg(l1, C=" << c << "): subgradient " << out.optimality << " after " << it
         << " iterations";
      throw NumericalError(os.str());
    }
    // coordinate descent on g.d + d'Hd/2 + |theta + d|_1
    m.hess.diagonal().array() += 1e-12;
    Vector d = Vector::Zero(p), hd = Vector::Zero(p);
    const double inner_tol = std::max(0.01 * out.optimality, 1e-13);
    for (int sweep = 0; sweep < 1000; ++sweep) {
      double moved = 0.0;
      for (Index j = 0; j < p; ++j) {
        const double a = m.hess(j, j);
        const double u = theta[j] + d[j];
        const double z = soft_threshold(u - (m.grad[j] + hd[j]) / a, 1.0 / a) - u;
        if (z == 0.0) continue;
        d[j] += z;
        hd += z * m.hess.col(j);
        moved = std::max(moved, std::abs(z) * a);
      }
      if (moved <= inner_tol) break;
    }
    const double reg = regularizer(Penalty::kL1, theta);
    const double delta = m.grad.dot(d) + (theta + d).lpNorm<1>() - reg;
    if (-delta <= kFlat * (1.0 + std::abs(f))) {
      theta += d;
      f = regularizer(Penalty::kL1, theta) + c * data_term(xa, y, theta);
      continue;
    }
    double t = 1.0;
    for (int k = 0; k < 60; ++k, t *= 0.5) {
      const Vector cand = theta + t * d;
      const double fc = regularizer(Penalty::kL1, cand) + c * data_term(xa, y, cand);
      if (fc <= f + 0.01 * t * delta) {
        theta = cand;
        f = fc;
        break;
      }
    }
  }
  out.objective = f;
}

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string format_c(double c) {
  std::ostringstream os;
  os << c;
  return os.str();
}

}  // namespace

Vector LogregFit::logits(const Matrix& x) const {
  require(x.cols() == weights.size(), "LogregFit::logits: feature dimension mismatch");
  return (x * weights).array() + bias;
}

double LogregFit::accuracy(const Matrix& x, const Vector& y) const {
  require(x.rows() == y.size() && y.size() > 0, "LogregFit::accuracy: bad label count");
  const Vector z = logits(x);
  Index hits = 0;
  for (Index i = 0; i < z.size(); ++i) hits += (z[i] > 0.0) == (y[i] > 0.5);
  return static_cast<double>(hits) / static_cast<double>(y.size());
}

double logreg_objective(const Matrix& x, const Vector& y, Penalty penalty, double c, const Vector& w, double b) {
  require(w.size() == x.cols() && y.size() == x.rows(), "logreg_objective: shape mismatch");
  Vector theta(w.size() + 1);
  theta << w, b;
  return regularizer(penalty, theta) + c * data_term(augment(x), y, theta);
}

LogregFit fit_sparse_logreg(const Matrix& x, const Vector& y, Penalty penalty, double c, const LogregOptions& opts,
                            const LogregFit* warm) {
  require(c > 0.0 && std::isfinite(c), "fit_sparse_logreg: C must be positive");
  require(x.rows() == y.size() && x.rows() > 0, "fit_sparse_logreg: need one label per row");
  require(x.allFinite(), "fit_sparse_logreg: non-finite features");
  require(opts.tolerance > 0.0 && opts.max_iterations > 0, "fit_sparse_logreg: bad options");
  const Matrix xa = augment(x);
  Vector theta = Vector::Zero(xa.cols());
  if (warm != nullptr && warm->weights.size() == x.cols()) theta << warm->weights, warm->bias;
  LogregFit out;
  out.penalty = penalty;
  out.c = c;
  if (penalty == Penalty::kL1) fit_l1(xa, y, c, opts, theta, out);
  else fit_l2(xa, y, c, opts, theta, out);
  out.weights = theta.head(x.cols());
  out.bias = theta[x.cols()];
  return out;
}

void ComplexitySweepOptions::validate() const {
  require(repeats >= 1, "ComplexitySweepOptions: repeats must be >= 1");
  require(test_size >= 1, "ComplexitySweepOptions: test_size must be >= 1");
  require(!c_grid.empty() && !penalties.empty(), "ComplexitySweepOptions: empty C grid or penalty list");
  for (double c : c_grid) require(c > 0.0, "ComplexitySweepOptions: C values must be positive");
}

const CurvePoint& SampleComplexityCurve::at(Index size, const std::string& family, const std::string& penalty) const {
  for (const auto& p : points) {
    if (p.size == size && p.family == family && p.penalty == penalty) return p;
  }
  throw InvalidArgument("SampleComplexityCurve: no point for size " + std::to_string(size) + ", " + family + ", " +
                        penalty);
}

std::string SampleComplexityCurve::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "size,family,penalty,mean,std\n";
  for (const auto& p : points) os << p.size << ',' << p.family << ',' << p.penalty << ',' << p.mean << ',' << p.std << '\n';
  return os.str();
}

nlohmann::json SampleComplexityCurve::to_json() const {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : points) {
    pts.push_back({{"size", p.size}, {"family", p.family}, {"penalty", p.penalty}, {"mean", p.mean}, {"std", p.std}});
  }
  return {{"train_sizes", train_sizes}, {"repeats", repeats}, {"points", pts}};
}

SampleComplexityCurve run_complexity_sweep(const DisentangleSpec& spec, const ComplexitySweepOptions& opts) {
  spec.validate();
  opts.validate();
  require(!spec.train_sizes.empty(), "run_complexity_sweep: no train sizes");
  for (std::size_t i = 1; i < spec.train_sizes.size(); ++i) {
    require(spec.train_sizes[i] > spec.train_sizes[i - 1], "run_complexity_sweep: train sizes must increase");
  }
  require(spec.train_sizes.front() >= 1, "run_complexity_sweep: train sizes must be positive");
  const Index max_size = spec.train_sizes.back();
  const std::size_t n_sizes = spec.train_sizes.size(), n_pen = opts.penalties.size(), n_c = opts.c_grid.size();
  const char* families[] = {"disentangled", "entangled"};

  // acc[size][family][column] over repeats; columns: per penalty the selected
  // fit, then every (penalty, C), then the joint selection.
  const std::size_t n_cols = n_pen + n_pen * n_c + 1;
  std::vector<std::vector<std::vector<std::vector<double>>>> acc(
      n_sizes, std::vector<std::vector<std::vector<double>>>(2, std::vector<std::vector<double>>(n_cols)));

  for (int r = 0; r < opts.repeats; ++r) {
    const auto stream = static_cast<std::uint64_t>(r) * 3;
    const Index task = r % spec.tasks;
    for (int fam = 0; fam < 2; ++fam) {
      const auto make = fam == 0 ? make_disentangled_tasks : make_entangled_tasks;
      const TaskSet train = make(spec, max_size, stream);
      const TaskSet valid = make(spec, max_size, stream + 1);
      const TaskSet test = make(spec, opts.test_size, stream + 2);
      const Vector& y_train = train.labels[static_cast<std::size_t>(task)];
      const Vector& y_valid = valid.labels[static_cast<std::size_t>(task)];
      const Vector& y_test = test.labels[static_cast<std::size_t>(task)];
      for (std::size_t si = 0; si < n_sizes; ++si) {
        const Index s = spec.train_sizes[si];
        const Matrix xt = train.x.topRows(s), xv = valid.x.topRows(s);
        const Vector yt = y_train.head(s), yv = y_valid.head(s);
        auto& cols = acc[si][static_cast<std::size_t>(fam)];
        double joint_valid = -1.0, joint_test = 0.0;
        for (std::size_t pi = 0; pi < n_pen; ++pi) {
          LogregFit prev;
          bool have_prev = false;
          double best_valid = -1.0, best_test = 0.0;
          for (std::size_t ci = 0; ci < n_c; ++ci) {
            LogregFit fit = fit_sparse_logreg(xt, yt, opts.penalties[pi], opts.c_grid[ci], opts.fit,
                                              have_prev ? &prev : nullptr);
            const double va = fit.accuracy(xv, yv), te = fit.accuracy(test.x, y_test);
            cols[n_pen + pi * n_c + ci].push_back(te);
            if (va > best_valid) {
              best_valid = va;
              best_test = te;
            }
            prev = std::move(fit);
            have_prev = true;
          }
          cols[pi].push_back(best_test);
          if (best_valid > joint_valid) {
            joint_valid = best_valid;
            joint_test = best_test;
          }
        }
        cols[n_cols - 1].push_back(joint_test);
      }
    }
  }

  SampleComplexityCurve curve;
  curve.train_sizes = spec.train_sizes;
  curve.repeats = opts.repeats;
  for (std::size_t si = 0; si < n_sizes; ++si) {
    for (int fam = 0; fam < 2; ++fam) {
      for (std::size_t col = 0; col < n_cols; ++col) {
        std::string label;
        if (col < n_pen) {
          label = to_string(opts.penalties[col]);
        } else if (col + 1 < n_cols) {
          const std::size_t k = col - n_pen;
          label = to_string(opts.penalties[k / n_c]) + ":C=" + format_c(opts.c_grid[k % n_c]);
        } else {
          label.clear();
          for (std::size_t pi = 0; pi < n_pen; ++pi) label += (pi ? "+" : "") + to_string(opts.penalties[pi]);
        }
        const auto& v = acc[si][static_cast<std::size_t>(fam)][col];
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        curve.points.push_back({spec.train_sizes[si], families[fam], label, mean, sample_std(v, mean)});
      }
    }
  }
  return curve;
}

}  // namespace bonsai
