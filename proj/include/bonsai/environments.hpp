// bonsai/environments.hpp

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

#ifndef BONSAI_ENVIRONMENTS_HPP_
#define BONSAI_ENVIRONMENTS_HPP_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bonsai/common.hpp"
#include "bonsai/data.hpp"

namespace bonsai {

// ---------------------------------------------------------------------------
// MNIST IDX files

/// The header magic does not match the expected IDX type.
struct IdxMagicError : Error {
  using Error::Error;
};
/// The file ends before the advertised payload.
struct IdxTruncatedError : Error {
  using Error::Error;
};
/// Image and label files disagree on counts, or the geometry is not 28x28.
struct IdxCountError : Error {
  using Error::Error;
};

struct MnistImages {
  static constexpr Index kSide = 28;
  static constexpr Index kPixels = kSide * kSide;

  std::vector<std::uint8_t> pixels;  // count * 784, row-major per image
  std::vector<std::uint8_t> labels;  // digits 0..9

  Index count() const { return static_cast<Index>(labels.size()); }
  std::span<const std::uint8_t> image(Index i) const;
};

/// Parses an IDX image file (magic 0x00000803) and label file (0x00000801).
MnistImages load_mnist_idx(const std::string& images_path, const std::string& labels_path);

/// $BONSAI_FORGE_DATA if set, else ~/.cache/bonsai-forge/mnist.
std::string default_mnist_dir();

/// The official train (60000) or t10k (10000) split from `dir`.
MnistImages load_mnist_split(const std::string& dir, bool train);

// ---------------------------------------------------------------------------
// TwoBits

struct TwoBitsSpec {
  // (alpha_e, beta_e): flip probabilities of X1 and X2.
  std::vector<std::pair<double, double>> train_params{{0.1, 0.1}, {0.1, 0.3}};
  std::vector<std::pair<double, double>> test_params{{0.1, 0.9}};
  Index n_per_env = 10000;
  Index n_valid_per_env = 2000;  // one valid env per train env; 0 disables
  std::uint64_t seed = 0;

  void validate() const;
};

/// Y ~ Rad(0.5), X1 = Y Rad(alpha), X2 = Y Rad(beta); inputs are +-1, labels
/// are mapped to {0, 1}. Environments: train<i>, valid<i>, test<i>.
EnvironmentSet make_twobits(const TwoBitsSpec& spec);

// ---------------------------------------------------------------------------
// ColoredMNIST

struct ColoredMnistSpec {
  // (label_noise, color_flip) per training environment.
  std::vector<std::pair<double, double>> train_params{{0.25, 0.1}, {0.25, 0.2}};
  double test_color_flip = 0.9;
  double label_noise_test = 0.25;
  Index n_per_env = 25000;
  Index n_valid_per_env = 5000;
  Index n_test = 10000;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Defaults for the inverted task, where shape is more predictive than color.
ColoredMnistSpec inverse_colored_mnist_defaults();

/// Input dimension of every ColoredMNIST example: 2 channels of 14x14.
inline constexpr Index kColoredMnistDim = 2 * 14 * 14;

/// Train environments come from a seeded permutation of `train`; validation
/// environments (same parameters as their train environment) from the rest
/// of that permutation; the test environment from `test`.
EnvironmentSet make_colored_mnist(const ColoredMnistSpec& spec, const MnistImages& train, const MnistImages& test);

/// Same pipeline, tagged as the inverted variant in the set's spec.
EnvironmentSet make_inverse_colored_mnist(const ColoredMnistSpec& spec, const MnistImages& train,
                                          const MnistImages& test);

/// Every second pixel in both axes, scaled to [0, 1].
std::vector<double> downsample_14(std::span<const std::uint8_t> image28);

/// Copies the shape image into both channels so color carries nothing.
EnvironmentSet grayscale_oracle(const EnvironmentSet& set);

// ---------------------------------------------------------------------------
// Disentangled / entangled logistic tasks

struct DisentangleSpec {
  Index n = 100;  // feature count; task i reads coordinate i
  double sigma = 1.0;
  double epsilon = 0.1;
  Index tasks = 100;
  std::vector<Index> train_sizes{20, 50, 100, 200, 500, 1000};
  std::uint64_t seed = 0;

  void validate() const;
};

/// Shared inputs with one label vector per task.
struct TaskSet {
  Matrix x;                   // samples x n
  std::vector<Vector> labels; // one per task
  Dataset task(Index i) const;
};

/// X ~ N(0, sigma^2 I), Y_i = 1[X_i > 0] flipped with probability epsilon.
/// `stream` selects an independent sample (train / valid / test draws).
TaskSet make_disentangled_tasks(const DisentangleSpec& spec, Index samples, std::uint64_t stream);

/// Same labels as the disentangled set for equal (spec, samples, stream), with
/// inputs X' = A X for a given orthonormal A.
TaskSet make_entangled_tasks(const DisentangleSpec& spec, Index samples, std::uint64_t stream);

/// Q factor of a seeded Gaussian matrix, signs fixed so diag(R) > 0.
Matrix random_orthonormal(Index n, std::uint64_t seed);

// ---------------------------------------------------------------------------

/// Seeded disjoint split; train gets round(fraction * n) rows.
std::pair<Dataset, Dataset> split_train_valid(const Dataset& env, double fraction, std::uint64_t seed);

/// Columnar CSV: header x0..x{D-1},y,env then one row per example.
void write_csv(std::ostream& os, const Dataset& d);
void write_csv(std::ostream& os, const EnvironmentSet& set);

}  // namespace bonsai

#endif  // BONSAI_ENVIRONMENTS_HPP_
