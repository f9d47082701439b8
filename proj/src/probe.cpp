// bonsai/probe.cpp

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

#include "bonsai/probe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace bonsai {

namespace {

// log(1 + e^z) - y z, stable for large |z|.
double logistic_term(double z, double y) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))) - y * z; }

double sigmoid_of(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Groups stacked row-wise, features augmented with a constant column when
// the probe has an intercept.
struct Problem {
  Matrix xa;
  Vector y;
  std::vector<Index> offset;  // group g spans rows [offset[g], offset[g + 1])
  double ridge = 0.0;

  std::size_t groups() const { return offset.size() - 1; }
  Index size(std::size_t g) const { return offset[g + 1] - offset[g]; }
  Index dim() const { return xa.cols(); }
};

Problem make_problem(const GroupedFeatures& gf, const ProbeOptions& opts) {
  gf.validate();
  Problem p;
  p.ridge = opts.ridge;
  Index n = 0;
  p.offset.push_back(0);
  for (const auto& x : gf.x) {
    n += x.rows();
    p.offset.push_back(n);
  }
  const Index d = gf.dim();
  p.xa.resize(n, d + (opts.intercept ? 1 : 0));
  p.y.resize(n);
  for (std::size_t g = 0; g < gf.groups(); ++g) {
    const Index at = p.offset[g], m = gf.x[g].rows();
    p.xa.block(at, 0, m, d) = gf.x[g];
    if (opts.intercept) p.xa.col(d).segment(at, m).setOnes();
    p.y.segment(at, m) = gf.y[g];
  }
  return p;
}

// Per-group costs C_g (ridge included), optionally gradients and Hessians.
struct GroupEval {
  std::vector<double> c;
  std::vector<Vector> g;
  std::vector<Matrix> h;
};

GroupEval evaluate(const Problem& p, const Vector& theta, bool grads, bool hessians) {
  const Vector z = p.xa * theta;
  const double reg = 0.5 * p.ridge * theta.squaredNorm();
  GroupEval e;
  for (std::size_t g = 0; g < p.groups(); ++g) {
    const Index at = p.offset[g], m = p.size(g);
    double s = 0.0;
    Vector r(m), w(m);
    for (Index i = 0; i < m; ++i) {
      s += logistic_term(z[at + i], p.y[at + i]);
      const double q = sigmoid_of(z[at + i]);
      r[i] = (q - p.y[at + i]) / static_cast<double>(m);
      w[i] = q * (1.0 - q) / static_cast<double>(m);
    }
    e.c.push_back(s / static_cast<double>(m) + reg);
    const auto xg = p.xa.middleRows(at, m);
    if (grads) e.g.push_back(xg.transpose() * r + p.ridge * theta);
    if (hessians) {
      Matrix h = xg.transpose() * w.asDiagonal() * xg;
      h.diagonal().array() += p.ridge;
      e.h.push_back(std::move(h));
    }
  }
  return e;
}

// Result of minimizing a smooth convex function of theta.
struct NewtonOutcome {
  Vector theta;
  double value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

// min_theta sum_g coef[g] C_g(theta), from `start`. coef sums to one.
NewtonOutcome weighted_newton(const Problem& p, std::span<const double> coef, Vector start, const ProbeOptions& opts) {
  NewtonOutcome out;
  out.theta = std::move(start);
  auto value_of = [&](const Vector& th) {
    const GroupEval e = evaluate(p, th, false, false);
    double v = 0.0;
    for (std::size_t g = 0; g < coef.size(); ++g) v += coef[g] * e.c[g];
    return v;
  };
  for (out.iterations = 0; out.iterations <= opts.max_iterations; ++out.iterations) {
    const GroupEval e = evaluate(p, out.theta, true, true);
    Vector grad = Vector::Zero(p.dim());
    Matrix hess = Matrix::Zero(p.dim(), p.dim());
    out.value = 0.0;
    for (std::size_t g = 0; g < coef.size(); ++g) {
      if (coef[g] == 0.0) continue;
      out.value += coef[g] * e.c[g];
      grad += coef[g] * e.g[g];
      hess += coef[g] * e.h[g];
    }
    out.grad_norm = grad.norm();
    if (!std::isfinite(out.value) || !std::isfinite(out.grad_norm)) {
      throw NumericalError("linear probe: non-finite objective at iteration " + std::to_string(out.iterations));
    }
    if (out.grad_norm < opts.tolerance) {
      out.converged = true;
      break;
    }
    if (out.iterations == opts.max_iterations) break;
    const Vector dir = -hess.ldlt().solve(grad);
    const double dec = -grad.dot(dir);
    if (dec < 1e-9) {
      // The predicted decrease is lost in the rounding of the objective, so
      // a line search cannot judge the step; this close to the minimizer the
      // full Newton step is safe.
      out.theta += dir;
      continue;
    }
    double t = 1.0;
    bool accepted = false;
    for (int k = 0; k < 60; ++k, t *= 0.5) {
      const Vector trial = out.theta + t * dir;
      if (value_of(trial) <= out.value - 1e-4 * t * dec) {
        out.theta = trial;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  return out;
}

ProbeResult probe_from(const Problem& p, const NewtonOutcome& n, bool intercept) {
  ProbeResult r;
  r.optimal_cost = n.value;
  r.data_cost = n.value - 0.5 * p.ridge * n.theta.squaredNorm();
  const Index d = p.dim() - (intercept ? 1 : 0);
  r.weights = n.theta.head(d);
  r.bias = intercept ? n.theta[d] : 0.0;
  r.converged = n.converged;
  r.grad_norm = n.grad_norm;
  r.iterations = n.iterations;
  return r;
}

[[noreturn]] void throw_not_converged(const char* where, const NewtonOutcome& n, const ProbeOptions& opts) {
  std::ostringstream os;
  os << where << ": Newton did not reach gradient norm " << opts.tolerance << " in " << opts.max_iterations
     << " iterations (last gradient norm " << n.grad_norm << ", objective " << n.value << ")";
  throw NumericalError(os.str());
}

NewtonOutcome solve_mixture(const Problem& p, std::span<const double> lambda, const Vector& start,
                            const ProbeOptions& opts) {
  NewtonOutcome n = weighted_newton(p, lambda, start, opts);
  if (!n.converged) throw_not_converged("mixture_min", n, opts);
  return n;
}

std::vector<double> costs_at(const Problem& p, const Vector& theta) { return evaluate(p, theta, false, false).c; }

double mixture_value(std::span<const double> lambda, const std::vector<double>& c) {
  double v = 0.0;
  for (std::size_t g = 0; g < c.size(); ++g) v += lambda[g] * c[g];
  return v;
}

// min_theta max_g C_g through log-sum-exp smoothing with increasing
// temperature; returns the final point.
Vector solve_dro(const Problem& p, const MinimaxOptions& opts) {
  Vector theta = Vector::Zero(p.dim());
  const std::size_t m = p.groups();
  for (double t : opts.temperatures) {
    auto smooth = [&](const std::vector<double>& c, std::vector<double>* pi) {
      const double cmax = *std::max_element(c.begin(), c.end());
      double s = 0.0;
      std::vector<double> e(m);
      for (std::size_t g = 0; g < m; ++g) s += (e[g] = std::exp(t * (c[g] - cmax)));
      if (pi) {
        pi->resize(m);
        for (std::size_t g = 0; g < m; ++g) (*pi)[g] = e[g] / s;
      }
      return cmax + std::log(s) / t;
    };
    for (int it = 0; it < 100; ++it) {
      const GroupEval e = evaluate(p, theta, true, true);
      std::vector<double> pi;
      const double f = smooth(e.c, &pi);
      Vector gbar = Vector::Zero(p.dim());
      Matrix hess = Matrix::Zero(p.dim(), p.dim());
      for (std::size_t g = 0; g < m; ++g) {
        gbar += pi[g] * e.g[g];
        hess += pi[g] * (e.h[g] + t * e.g[g] * e.g[g].transpose());
      }
      hess -= t * gbar * gbar.transpose();
      if (!std::isfinite(f) || !gbar.allFinite()) throw NumericalError("minimax_check: non-finite smoothed objective");
      if (gbar.norm() < 1e-12) break;
      const Vector dir = -hess.ldlt().solve(gbar);
      const double dec = -gbar.dot(dir);
      if (!(dec > 1e-20)) break;
      double step = 1.0;
      bool accepted = false;
      for (int k = 0; k < 60; ++k, step *= 0.5) {
        const Vector trial = theta + step * dir;
        if (smooth(costs_at(p, trial), nullptr) <= f - 1e-4 * step * dec) {
          theta = trial;
          accepted = true;
          break;
        }
      }
      if (!accepted) break;
    }
  }
  return theta;
}

// Accelerated projected gradient ascent on the simplex for a concave
// function given by `oracle`, which returns g(lambda) and writes a
// (super)gradient. Extrapolated points are projected back onto the simplex
// so that every evaluated value is attained by a feasible lambda; the
// momentum is reset whenever the value drops.
struct AscentResult {
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> argbest;
  std::vector<double> trace;
};

template <class Oracle>
AscentResult simplex_ascent(std::size_t m, double step, int iterations, Oracle&& oracle) {
  AscentResult out;
  std::vector<double> x(m, 1.0 / static_cast<double>(m)), y = x, sup;
  double t = 1.0, last = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < iterations; ++it) {
    const double v = oracle(y, &sup);
    out.trace.push_back(v);
    if (v > out.best) {
      out.best = v;
      out.argbest = y;
    }
    if (v < last) {
      // restart from the best point seen
      t = 1.0;
      y = out.argbest;
      x = y;
      last = out.best;
      continue;
    }
    last = v;
    std::vector<double> next(m);
    for (std::size_t g = 0; g < m; ++g) next[g] = y[g] + step * sup[g];
    next = project_simplex(next);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    std::vector<double> ext(m);
    double moved = 0.0;
    for (std::size_t g = 0; g < m; ++g) {
      ext[g] = next[g] + (t - 1.0) / t_next * (next[g] - x[g]);
      moved = std::max(moved, std::abs(next[g] - y[g]));
    }
    x = std::move(next);
    y = project_simplex(ext);
    t = t_next;
    if (moved < 1e-15) break;
  }
  return out;
}

}  // namespace

void ProbeOptions::validate() const {
  require(ridge > 0.0, "probe: ridge must be > 0");
  require(tolerance > 0.0, "probe: tolerance must be > 0");
  require(max_iterations >= 1, "probe: max_iterations must be >= 1");
}

void MinimaxOptions::validate() const {
  probe.validate();
  require(step > 0.0, "minimax: step must be > 0");
  require(ascent_iterations >= 1, "minimax: ascent_iterations must be >= 1");
  require(!temperatures.empty(), "minimax: temperature schedule is empty");
}

void GroupedFeatures::validate() const {
  require(!x.empty(), "grouped features: no groups");
  require(x.size() == y.size(), "grouped features: feature and label group counts differ");
  for (std::size_t g = 0; g < x.size(); ++g) {
    require(x[g].rows() > 0, "grouped features: group " + std::to_string(g) + " is empty");
    require(x[g].rows() == y[g].size(), "grouped features: row and label counts differ in group " + std::to_string(g));
    require(x[g].cols() == x.front().cols(), "grouped features: dimension differs across groups");
  }
}

double mean_logistic_loss(const Vector& logits, const Vector& labels) {
  require(logits.size() == labels.size() && logits.size() > 0, "mean_logistic_loss: size mismatch");
  double s = 0.0;
  for (Index i = 0; i < logits.size(); ++i) s += logistic_term(logits[i], labels[i]);
  return s / static_cast<double>(logits.size());
}

Vector ProbeResult::logits(const Matrix& features) const {
  return (features * weights).array() + bias;
}

nlohmann::json ProbeResult::to_json() const {
  return {{"optimal_cost", optimal_cost}, {"data_cost", data_cost},   {"bias", bias},
          {"weights", std::vector<double>(weights.data(), weights.data() + weights.size())},
          {"converged", converged},       {"grad_norm", grad_norm}, {"iterations", iterations}};
}

ProbeResult optimal_linear_probe(const Matrix& features, const Vector& labels, const ProbeOptions& opts) {
  opts.validate();
  require(features.rows() == labels.size(), "optimal_linear_probe: row and label counts differ");
  require(features.rows() > 0, "optimal_linear_probe: no rows");
  GroupedFeatures gf;
  gf.x.push_back(features);
  gf.y.push_back(labels);
  const Problem p = make_problem(gf, opts);
  const std::vector<double> one{1.0};
  const NewtonOutcome n = weighted_newton(p, one, Vector::Zero(p.dim()), opts);
  if (!n.converged) throw_not_converged("optimal_linear_probe", n, opts);
  return probe_from(p, n, opts.intercept);
}

ProbeResult concat_probe(std::span<const Matrix> blocks, const Vector& labels, const ProbeOptions& opts) {
  require(!blocks.empty(), "concat_probe: no blocks");
  Index cols = 0;
  for (const auto& b : blocks) {
    require(b.rows() == blocks.front().rows(), "concat_probe: blocks have different row counts");
    cols += b.cols();
  }
  Matrix x(blocks.front().rows(), cols);
  Index at = 0;
  for (const auto& b : blocks) {
    x.middleCols(at, b.cols()) = b;
    at += b.cols();
  }
  return optimal_linear_probe(x, labels, opts);
}

std::string to_string(InfoRelationKind k) {
  switch (k) {
    case InfoRelationKind::kPhi1AddsInfo: return "phi1-adds-info";
    case InfoRelationKind::kPhi2ContainsAll: return "phi2-contains-all";
    case InfoRelationKind::kEquivalent: return "equivalent";
    case InfoRelationKind::kIncomparable: return "incomparable";
  }
  return "?";
}

nlohmann::json InfoRelation::to_json() const {
  return {{"relation", to_string(kind)}, {"c1", c1}, {"c2", c2}, {"c12", c12}, {"tolerance", tolerance}};
}

InfoRelation info_relation(const Matrix& phi1, const Matrix& phi2, const Vector& labels, double tol,
                           const ProbeOptions& opts) {
  require(tol > opts.tolerance, "info_relation: tolerance must exceed the solver tolerance");
  InfoRelation r;
  r.tolerance = tol;
  r.c1 = optimal_linear_probe(phi1, labels, opts).optimal_cost;
  r.c2 = optimal_linear_probe(phi2, labels, opts).optimal_cost;
  const Matrix both[] = {phi1, phi2};
  r.c12 = concat_probe(both, labels, opts).optimal_cost;
  const bool same1 = std::abs(r.c12 - r.c1) <= tol, same2 = std::abs(r.c12 - r.c2) <= tol;
  if (same1 && same2) {
    r.kind = InfoRelationKind::kEquivalent;
  } else if (same2) {
    r.kind = InfoRelationKind::kPhi2ContainsAll;
  } else if (same1) {
    r.kind = InfoRelationKind::kPhi1AddsInfo;
  } else {
    r.kind = InfoRelationKind::kIncomparable;
  }
  return r;
}

std::vector<double> project_simplex(std::span<const double> v) {
  require(!v.empty(), "project_simplex: empty vector");
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cum += u[j];
    const double t = (cum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i] - theta, 0.0);
  return out;
}

std::vector<double> group_probe_costs(const GroupedFeatures& groups, const Vector& w, const ProbeOptions& opts) {
  const Problem p = make_problem(groups, opts);
  require(w.size() == p.dim(), "group_probe_costs: parameter size mismatch");
  return costs_at(p, w);
}

double mixture_min(const GroupedFeatures& groups, std::span<const double> lambda, const ProbeOptions& opts,
                   std::vector<double>* costs, Vector* w) {
  opts.validate();
  const Problem p = make_problem(groups, opts);
  require(lambda.size() == p.groups(), "mixture_min: lambda size differs from the group count");
  const NewtonOutcome n = solve_mixture(p, lambda, Vector::Zero(p.dim()), opts);
  const std::vector<double> c = costs_at(p, n.theta);
  if (costs) *costs = c;
  if (w) *w = n.theta;
  return mixture_value(lambda, c);
}

nlohmann::json MinimaxResult::to_json() const {
  return {{"r_rw", r_rw},
          {"r_dro", r_dro},
          {"gap", r_dro - r_rw},
          {"lambda", lambda},
          {"costs_at_dro", costs_at_dro},
          {"w_dro", std::vector<double>(w_dro.data(), w_dro.data() + w_dro.size())},
          {"w_rw", std::vector<double>(w_rw.data(), w_rw.data() + w_rw.size())}};
}

MinimaxResult minimax_check(const GroupedFeatures& groups, const MinimaxOptions& opts) {
  opts.validate();
  const Problem p = make_problem(groups, opts.probe);
  require(p.groups() >= 2, "minimax_check: at least two groups are required");
  const std::size_t m = p.groups();
  MinimaxResult r;

  r.w_dro = solve_dro(p, opts);
  r.costs_at_dro = costs_at(p, r.w_dro);
  r.r_dro = *std::max_element(r.costs_at_dro.begin(), r.costs_at_dro.end());

  Vector theta = Vector::Zero(p.dim());
  AscentResult a = simplex_ascent(m, opts.step, opts.ascent_iterations,
                                  [&](const std::vector<double>& lambda, std::vector<double>* sup) {
                                    theta = solve_mixture(p, lambda, theta, opts.probe).theta;
                                    *sup = costs_at(p, theta);
                                    return mixture_value(lambda, *sup);
                                  });
  r.r_rw = a.best;
  r.lambda = a.argbest;
  r.ascent_trace = std::move(a.trace);
  r.w_rw = solve_mixture(p, r.lambda, Vector::Zero(p.dim()), opts.probe).theta;
  return r;
}

nlohmann::json FamilyMaxMin::to_json() const {
  return {{"r_dro", r_dro},           {"maxmin", maxmin},           {"r_rw", r_rw},
          {"chain_ok", chain_ok},     {"tolerance", tolerance},     {"per_map_dro", per_map_dro},
          {"lambda_base", lambda_base}, {"lambda_maxmin", lambda_maxmin}};
}

FamilyMaxMin finite_family_maxmin(std::span<const GroupedFeatures> family, std::size_t base,
                                  const MinimaxOptions& opts, double tol) {
  if (family.empty()) throw InvalidArgument("finite_family_maxmin: empty family");
  require(base < family.size(), "finite_family_maxmin: base index out of range");
  opts.validate();
  std::vector<Problem> probs;
  for (const auto& gf : family) {
    probs.push_back(make_problem(gf, opts.probe));
    require(probs.back().groups() == probs.front().groups(), "finite_family_maxmin: maps disagree on the groups");
    require(probs.back().y == probs.front().y, "finite_family_maxmin: maps disagree on the labels");
  }
  const std::size_t m = probs.front().groups();
  require(m >= 2, "finite_family_maxmin: at least two groups are required");

  FamilyMaxMin out;
  out.tolerance = tol;
  out.r_dro = std::numeric_limits<double>::infinity();
  for (const Problem& p : probs) {
    const std::vector<double> c = costs_at(p, solve_dro(p, opts));
    out.per_map_dro.push_back(*std::max_element(c.begin(), c.end()));
    out.r_dro = std::min(out.r_dro, out.per_map_dro.back());
  }

  // h(lambda) = min over maps of min_w sum_i lambda_i C_i; reports the costs
  // of the minimizing map, which form a supergradient.
  std::vector<Vector> warm(probs.size());
  for (std::size_t c = 0; c < probs.size(); ++c) warm[c] = Vector::Zero(probs[c].dim());
  auto h = [&](std::span<const double> lambda, bool cold, std::vector<double>* sup) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < probs.size(); ++c) {
      const Vector start = cold ? Vector::Zero(probs[c].dim()) : warm[c];
      const NewtonOutcome n = solve_mixture(probs[c], lambda, start, opts.probe);
      if (!cold) warm[c] = n.theta;
      const std::vector<double> cost = costs_at(probs[c], n.theta);
      const double v = mixture_value(lambda, cost);
      if (v < best) {
        best = v;
        if (sup) *sup = cost;
      }
    }
    return best;
  };

  out.lambda_base = minimax_check(family[base], opts).lambda;
  out.r_rw = h(out.lambda_base, true, nullptr);

  out.maxmin = out.r_rw;
  out.lambda_maxmin = out.lambda_base;
  const AscentResult a = simplex_ascent(
      m, opts.step, opts.ascent_iterations,
      [&](const std::vector<double>& lambda, std::vector<double>* sup) { return h(lambda, false, sup); });
  if (a.best > out.maxmin) {
    out.maxmin = a.best;
    out.lambda_maxmin = a.argbest;
  }
  out.chain_ok = out.r_dro >= out.maxmin - tol && out.maxmin >= out.r_rw - tol;
  return out;
}

nlohmann::json EnsembleCheck::to_json() const {
  return {{"c1", probe1.optimal_cost}, {"c2", probe2.optimal_cost}, {"lambdas", lambdas}, {"costs", costs}};
}

EnsembleCheck ensemble_check(const Matrix& phi1, const Matrix& phi2, const Vector& labels,
                             std::span<const double> lambdas, const ProbeOptions& opts) {
  require(phi1.rows() == phi2.rows(), "ensemble_check: feature sets have different row counts");
  EnsembleCheck e;
  e.probe1 = optimal_linear_probe(phi1, labels, opts);
  e.probe2 = optimal_linear_probe(phi2, labels, opts);
  const Vector z1 = e.probe1.logits(phi1), z2 = e.probe2.logits(phi2);
  for (double l : lambdas) {
    require(l >= 0.0 && l <= 1.0, "ensemble_check: lambda must lie in [0, 1]");
    e.lambdas.push_back(l);
    e.costs.push_back(mean_logistic_loss(l * z1 + (1.0 - l) * z2, labels));
  }
  return e;
}

}  // namespace bonsai
