// bonsai/mlp.hpp

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

#ifndef BONSAI_MLP_HPP_
#define BONSAI_MLP_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bonsai/common.hpp"

namespace bonsai {

enum class Activation { kRelu, kSoftplus };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Architecture of a fixed-topology MLP.
///
/// The body is a stack of affine layers, each followed by the activation; its
/// output is the feature vector Phi(x). On top sit `head_count` parallel affine
/// heads of `head_dim` outputs each, all reading the same features. An empty
/// body makes Phi the identity, so a one-head net is then a plain linear model.
struct MlpShape {
  Index input_dim = 0;
  std::vector<Index> hidden;
  Index head_count = 1;
  Index head_dim = 1;
  Activation activation = Activation::kRelu;

  Index feature_dim() const { return hidden.empty() ? input_dim : hidden.back(); }
  bool operator==(const MlpShape&) const = default;
};

struct LayerParams {
  Matrix weight;  // out x in
  Vector bias;    // out
};

/// Parameters (or gradients, or optimizer moments) laid out like a net.
struct Params {
  std::vector<LayerParams> body;
  std::vector<LayerParams> heads;

  static Params zeros(const MlpShape& shape);
  std::size_t size() const;
  /// Every weight and bias as a contiguous block, body first then heads.
  std::vector<std::span<double>> blocks();
  std::vector<std::span<const double>> blocks() const;
  Vector flatten() const;
  void assign(const Vector& flat);
};

using Gradients = Params;

/// Xavier/Glorot uniform init: U[-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))].
Matrix xavier_init(Index rows, Index cols, std::uint64_t seed);

class MlpNet {
 public:
  MlpNet() = default;
  /// All-zero parameters.
  explicit MlpNet(MlpShape shape);

  /// Xavier weights, zero biases.
  static MlpNet xavier(const MlpShape& shape, std::uint64_t seed);

  const MlpShape& shape() const { return shape_; }
  const Params& params() const { return params_; }
  /// Mutable access; invalidates outstanding forward caches.
  Params& mutable_params();

  /// Bumped on every mutable access. Identical copies share it.
  std::uint64_t revision() const { return revision_; }

  std::size_t parameter_count() const { return params_.size(); }

  /// Copy of this net whose heads are replaced by `heads`.
  MlpNet with_heads(std::vector<LayerParams> heads) const;

 private:
  MlpShape shape_;
  Params params_;
  std::uint64_t revision_ = 0;
};

/// Intermediates kept by mlp_forward for mlp_backward.
struct ForwardCache {
  std::uint64_t revision = 0;
  MlpShape shape;
  Matrix input;
  std::vector<Matrix> activations;  // output of each body layer (post-activation)
};

struct ForwardResult {
  std::vector<Matrix> logits;  // one n x head_dim matrix per head
  ForwardCache cache;
  /// Phi(x): last body activation, or the input if the body is empty.
  const Matrix& features() const {
    return cache.activations.empty() ? cache.input : cache.activations.back();
  }
};

ForwardResult mlp_forward(const MlpNet& net, const Matrix& x);

/// Forward pass without the cache; logits per head.
std::vector<Matrix> mlp_predict(const MlpNet& net, const Matrix& x);

/// Phi(x) only.
Matrix mlp_features(const MlpNet& net, const Matrix& x);

/// Logits of a head applied to precomputed features.
Matrix head_logits(const LayerParams& head, const Matrix& features);

enum class BackwardScope { kAll, kHeadsOnly };

/// Exact gradients of a scalar loss given its gradient w.r.t. each head's
/// logits. Throws if `cache` was not produced by `net` at its current revision.
Gradients mlp_backward(const MlpNet& net, const ForwardCache& cache,
                       std::span<const Matrix> dlogits,
                       BackwardScope scope = BackwardScope::kAll);

/// Central finite differences of `loss` around `params`.
Vector finite_diff_grad(const std::function<double(const Vector&)>& loss, const Vector& params,
                        double eps);

}  // namespace bonsai

#endif  // BONSAI_MLP_HPP_
