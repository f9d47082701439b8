// bonsai/mlp.cpp

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

#include "bonsai/mlp.hpp"

#include <atomic>
#include <cmath>

#include "bonsai/rng.hpp"

namespace bonsai {

namespace {

std::atomic<std::uint64_t> g_revision{1};

std::uint64_t next_revision() { return g_revision.fetch_add(1, std::memory_order_relaxed); }

LayerParams zero_layer(Index out, Index in) {
  return {Matrix::Zero(out, in), Vector::Zero(out)};
}

// Post-activation in place.
void activate(Activation a, Matrix& m) {
  switch (a) {
    case Activation::kRelu:
      m = m.cwiseMax(0.0);
      break;
    case Activation::kSoftplus:
      m = m.unaryExpr([](double v) {
        return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
      });
      break;
  }
}

// d(out)/d(in) expressed through the post-activation output, multiplied into g.
void multiply_activation_grad(Activation a, const Matrix& out, Matrix& g) {
  switch (a) {
    case Activation::kRelu:
      g = (out.array() > 0.0).select(g, 0.0);
      break;
    case Activation::kSoftplus:
      // softplus'(x) = sigmoid(x) = 1 - exp(-softplus(x))
      g.array() *= 1.0 - (-out.array()).exp();
      break;
  }
}

Matrix affine(const Matrix& x, const LayerParams& layer) {
  Matrix z = x * layer.weight.transpose();
  z.rowwise() += layer.bias.transpose();
  return z;
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kRelu:
      return "relu";
    case Activation::kSoftplus:
      return "softplus";
  }
  return "relu";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "softplus") return Activation::kSoftplus;
  throw InvalidArgument("unknown activation '" + name + "'");
}

Params Params::zeros(const MlpShape& shape) {
  Params p;
  Index in = shape.input_dim;
  for (Index width : shape.hidden) {
    p.body.push_back(zero_layer(width, in));
    in = width;
  }
  for (Index k = 0; k < shape.head_count; ++k) p.heads.push_back(zero_layer(shape.head_dim, in));
  return p;
}

std::size_t Params::size() const {
  std::size_t n = 0;
  for (const auto& b : blocks()) n += b.size();
  return n;
}

std::vector<std::span<double>> Params::blocks() {
  std::vector<std::span<double>> out;
  auto add = [&](LayerParams& l) {
    out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  };
  for (auto& l : body) add(l);
  for (auto& l : heads) add(l);
  return out;
}

std::vector<std::span<const double>> Params::blocks() const {
  std::vector<std::span<const double>> out;
  auto add = [&](const LayerParams& l) {
    out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  };
  for (const auto& l : body) add(l);
  for (const auto& l : heads) add(l);
  return out;
}

Vector Params::flatten() const {
  Vector flat(static_cast<Index>(size()));
  Index pos = 0;
  for (const auto& b : blocks()) {
    for (double v : b) flat[pos++] = v;
  }
  return flat;
}

void Params::assign(const Vector& flat) {
  require(flat.size() == static_cast<Index>(size()), "Params::assign: size mismatch");
  Index pos = 0;
  for (auto b : blocks()) {
    for (double& v : b) v = flat[pos++];
  }
}

Matrix xavier_init(Index rows, Index cols, std::uint64_t seed) {
  require(rows >= 1 && cols >= 1, "xavier_init: zero-sized shape");
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

MlpNet::MlpNet(MlpShape shape) : shape_(std::move(shape)), revision_(next_revision()) {
  require(shape_.input_dim >= 1, "MlpNet: input_dim must be >= 1");
  require(shape_.head_count >= 1, "MlpNet: head_count must be >= 1");
  require(shape_.head_dim >= 1, "MlpNet: head_dim must be >= 1");
  for (Index w : shape_.hidden) require(w >= 1, "MlpNet: hidden widths must be >= 1");
  params_ = Params::zeros(shape_);
}

MlpNet MlpNet::xavier(const MlpShape& shape, std::uint64_t seed) {
  MlpNet net(shape);
  Params& p = net.mutable_params();
  std::uint64_t layer = 0;
  for (auto& l : p.body) {
    l.weight = xavier_init(l.weight.rows(), l.weight.cols(), derive_seed(seed, "body" + std::to_string(layer++)));
  }
  layer = 0;
  for (auto& l : p.heads) {
    l.weight = xavier_init(l.weight.rows(), l.weight.cols(), derive_seed(seed, "head" + std::to_string(layer++)));
  }
  return net;
}

Params& MlpNet::mutable_params() {
  revision_ = next_revision();
  return params_;
}

MlpNet MlpNet::with_heads(std::vector<LayerParams> heads) const {
  require(!heads.empty(), "with_heads: need at least one head");
  MlpShape shape = shape_;
  shape.head_count = static_cast<Index>(heads.size());
  shape.head_dim = heads.front().weight.rows();
  for (const auto& h : heads) {
    require(h.weight.cols() == shape_.feature_dim() && h.weight.rows() == shape.head_dim &&
                h.bias.size() == shape.head_dim,
            "with_heads: head shape does not match the feature dimension");
  }
  MlpNet out(shape);
  Params& p = out.mutable_params();
  p.body = params_.body;
  p.heads = std::move(heads);
  return out;
}

ForwardResult mlp_forward(const MlpNet& net, const Matrix& x) {
  const MlpShape& shape = net.shape();
  if (x.cols() != shape.input_dim) {
    throw InvalidArgument("mlp_forward: input has " + std::to_string(x.cols()) +
                          " columns, net expects " + std::to_string(shape.input_dim));
  }
  ForwardResult r;
  r.cache.revision = net.revision();
  r.cache.shape = shape;
  r.cache.input = x;
  const Matrix* in = &r.cache.input;
  for (const auto& layer : net.params().body) {
    Matrix a = affine(*in, layer);
    activate(shape.activation, a);
    r.cache.activations.push_back(std::move(a));
    in = &r.cache.activations.back();
  }
  for (const auto& head : net.params().heads) r.logits.push_back(affine(*in, head));
  return r;
}

Matrix mlp_features(const MlpNet& net, const Matrix& x) {
  require(x.cols() == net.shape().input_dim, "mlp_features: input dimension mismatch");
  Matrix h = x;
  for (const auto& layer : net.params().body) {
    h = affine(h, layer);
    activate(net.shape().activation, h);
  }
  return h;
}

std::vector<Matrix> mlp_predict(const MlpNet& net, const Matrix& x) {
  const Matrix f = mlp_features(net, x);
  std::vector<Matrix> out;
  for (const auto& head : net.params().heads) out.push_back(affine(f, head));
  return out;
}

Matrix head_logits(const LayerParams& head, const Matrix& features) {
  require(features.cols() == head.weight.cols(), "head_logits: feature dimension mismatch");
  return affine(features, head);
}

Gradients mlp_backward(const MlpNet& net, const ForwardCache& cache, std::span<const Matrix> dlogits,
                       BackwardScope scope) {
  if (cache.revision != net.revision() || !(cache.shape == net.shape())) {
    throw InvalidArgument("mlp_backward: cache does not belong to this net (stale or mismatched)");
  }
  const MlpShape& shape = net.shape();
  const Params& p = net.params();
  const Index n = cache.input.rows();
  require(static_cast<Index>(dlogits.size()) == shape.head_count,
          "mlp_backward: expected one logit gradient per head");
  for (const auto& d : dlogits) {
    require(d.rows() == n && d.cols() == shape.head_dim, "mlp_backward: logit gradient shape mismatch");
  }

  Gradients g = Params::zeros(shape);
  const Matrix& features = cache.activations.empty() ? cache.input : cache.activations.back();
  const bool need_body = scope == BackwardScope::kAll && !p.body.empty();
  Matrix dfeat;
  if (need_body) dfeat = Matrix::Zero(n, shape.feature_dim());
  for (std::size_t k = 0; k < p.heads.size(); ++k) {
    g.heads[k].weight.noalias() = dlogits[k].transpose() * features;
    g.heads[k].bias = dlogits[k].colwise().sum().transpose();
    if (need_body) dfeat.noalias() += dlogits[k] * p.heads[k].weight;
  }
  if (!need_body) return g;

  Matrix delta = std::move(dfeat);
  for (std::size_t l = p.body.size(); l-- > 0;) {
    multiply_activation_grad(shape.activation, cache.activations[l], delta);
    const Matrix& in = l == 0 ? cache.input : cache.activations[l - 1];
    g.body[l].weight.noalias() = delta.transpose() * in;
    g.body[l].bias = delta.colwise().sum().transpose();
    if (l > 0) {
      Matrix next = delta * p.body[l].weight;
      delta = std::move(next);
    }
  }
  return g;
}

Vector finite_diff_grad(const std::function<double(const Vector&)>& loss, const Vector& params,
                        double eps) {
  require(eps > 0.0, "finite_diff_grad: eps must be positive");
  Vector g(params.size());
  Vector p = params;
  for (Index i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + eps;
    const double up = loss(p);
    p[i] = orig - eps;
    const double down = loss(p);
    p[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalError("finite_diff_grad: non-finite loss at coordinate " + std::to_string(i));
    }
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

}  // namespace bonsai
