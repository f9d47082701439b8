// bonsai/environments.cpp

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

#include "bonsai/environments.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <numeric>
#include <ostream>

#include <Eigen/QR>

#include "bonsai/rng.hpp"

namespace bonsai {

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

std::string hex32(std::uint32_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s = "0x";
  for (int shift = 28; shift >= 0; shift -= 4) s += digits[(v >> shift) & 0xF];
  return s;
}

void check_magic(const std::vector<std::uint8_t>& b, std::uint32_t want, const std::string& path) {
  if (b.size() < 8) throw IdxTruncatedError("'" + path + "': file shorter than its IDX header");
  const std::uint32_t got = be32(b, 0);
  if (got != want) {
    throw IdxMagicError("'" + path + "': magic " + hex32(got) + ", expected " + hex32(want));
  }
}

void check_probability(double p, const std::string& what) {
  require(p >= 0.0 && p <= 1.0, what + " must lie in [0, 1]");
}

Environment make_env(std::string name, Role role, Index n, Index dim) {
  Environment e;
  e.name = std::move(name);
  e.role = role;
  e.data.x.resize(n, dim);
  e.data.y.resize(n);
  return e;
}

void stamp_env_ids(EnvironmentSet& set) {
  for (std::size_t k = 0; k < set.envs.size(); ++k) {
    auto& d = set.envs[k].data;
    d.env.assign(static_cast<std::size_t>(d.size()), static_cast<int>(k));
  }
}

nlohmann::json params_json(const std::vector<std::pair<double, double>>& p) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& [a, b] : p) j.push_back({a, b});
  return j;
}

}  // namespace

std::span<const std::uint8_t> MnistImages::image(Index i) const {
  require(i >= 0 && i < count(), "MnistImages::image: index out of range");
  return {pixels.data() + i * kPixels, static_cast<std::size_t>(kPixels)};
}

MnistImages load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);
  check_magic(img, 0x00000803u, images_path);
  check_magic(lab, 0x00000801u, labels_path);
  if (img.size() < 16) throw IdxTruncatedError("'" + images_path + "': image header truncated");
  const std::uint64_t n_img = be32(img, 4);
  const std::uint32_t rows = be32(img, 8), cols = be32(img, 12);
  const std::uint64_t n_lab = be32(lab, 4);
  if (rows != 28 || cols != 28) {
    throw IdxCountError("'" + images_path + "': images are " + std::to_string(rows) + "x" + std::to_string(cols) +
                        ", expected 28x28");
  }
  if (img.size() < 16 + n_img * 784) {
    throw IdxTruncatedError("'" + images_path + "': header announces " + std::to_string(n_img) +
                            " images but the payload is shorter");
  }
  if (lab.size() < 8 + n_lab) {
    throw IdxTruncatedError("'" + labels_path + "': header announces " + std::to_string(n_lab) +
                            " labels but the payload is shorter");
  }
  if (n_img != n_lab) {
    throw IdxCountError("image count " + std::to_string(n_img) + " does not match label count " +
                        std::to_string(n_lab));
  }
  MnistImages m;
  m.pixels.assign(img.begin() + 16, img.begin() + 16 + static_cast<std::ptrdiff_t>(n_img * 784));
  m.labels.assign(lab.begin() + 8, lab.begin() + 8 + static_cast<std::ptrdiff_t>(n_lab));
  for (auto d : m.labels) {
    if (d > 9) throw IdxCountError("'" + labels_path + "': label value " + std::to_string(d) + " out of 0..9");
  }
  return m;
}

std::string default_mnist_dir() {
  if (const char* env = std::getenv("BONSAI_FORGE_DATA"); env && *env) return env;
  const char* home = std::getenv("HOME");
  return std::string(home ? home : ".") + "/.cache/bonsai-forge/mnist";
}

MnistImages load_mnist_split(const std::string& dir, bool train) {
  const std::string stem = train ? "train" : "t10k";
  return load_mnist_idx(dir + "/" + stem + "-images-idx3-ubyte", dir + "/" + stem + "-labels-idx1-ubyte");
}

// ---------------------------------------------------------------------------

void TwoBitsSpec::validate() const {
  require(!train_params.empty(), "TwoBitsSpec: at least one training environment required");
  for (const auto* list : {&train_params, &test_params}) {
    for (const auto& [a, b] : *list) {
      check_probability(a, "TwoBitsSpec: alpha");
      check_probability(b, "TwoBitsSpec: beta");
    }
  }
  require(n_per_env >= 1, "TwoBitsSpec: n_per_env must be >= 1");
  require(n_valid_per_env >= 0, "TwoBitsSpec: n_valid_per_env must be >= 0");
}

EnvironmentSet make_twobits(const TwoBitsSpec& spec) {
  spec.validate();
  EnvironmentSet set;
  auto fill = [&](const std::string& name, Role role, double alpha, double beta, Index n) {
    Environment e = make_env(name, role, n, 2);
    Rng rng(derive_seed(spec.seed, "twobits/" + name));
    for (Index i = 0; i < n; ++i) {
      // Rad(a) is -1 with probability a.
      const double y = rng.bernoulli(0.5) ? -1.0 : 1.0;
      const double x1 = y * (rng.bernoulli(alpha) ? -1.0 : 1.0);
      const double x2 = y * (rng.bernoulli(beta) ? -1.0 : 1.0);
      e.data.x(i, 0) = x1;
      e.data.x(i, 1) = x2;
      e.data.y[i] = y > 0 ? 1.0 : 0.0;
    }
    set.envs.push_back(std::move(e));
  };
  for (std::size_t k = 0; k < spec.train_params.size(); ++k) {
    const auto [a, b] = spec.train_params[k];
    fill("train" + std::to_string(k), Role::kTrain, a, b, spec.n_per_env);
  }
  if (spec.n_valid_per_env > 0) {
    for (std::size_t k = 0; k < spec.train_params.size(); ++k) {
      const auto [a, b] = spec.train_params[k];
      fill("valid" + std::to_string(k), Role::kValid, a, b, spec.n_valid_per_env);
    }
  }
  for (std::size_t k = 0; k < spec.test_params.size(); ++k) {
    const auto [a, b] = spec.test_params[k];
    fill("test" + std::to_string(k), Role::kTest, a, b, spec.n_per_env);
  }
  stamp_env_ids(set);
  set.spec = {{"generator", "twobits"},
              {"train_params", params_json(spec.train_params)},
              {"test_params", params_json(spec.test_params)},
              {"n_per_env", spec.n_per_env},
              {"n_valid_per_env", spec.n_valid_per_env},
              {"seed", spec.seed}};
  return set;
}

// ---------------------------------------------------------------------------

void ColoredMnistSpec::validate() const {
  require(!train_params.empty(), "ColoredMnistSpec: at least one training environment required");
  for (const auto& [noise, flip] : train_params) {
    check_probability(noise, "ColoredMnistSpec: label_noise");
    check_probability(flip, "ColoredMnistSpec: color_flip");
  }
  check_probability(test_color_flip, "ColoredMnistSpec: test_color_flip");
  check_probability(label_noise_test, "ColoredMnistSpec: label_noise_test");
  require(n_per_env >= 1 && n_valid_per_env >= 0 && n_test >= 1, "ColoredMnistSpec: bad environment sizes");
}

ColoredMnistSpec inverse_colored_mnist_defaults() {
  ColoredMnistSpec s;
  s.train_params = {{0.15, 0.3}, {0.15, 0.35}};
  s.label_noise_test = 0.15;
  s.test_color_flip = 0.9;
  return s;
}

std::vector<double> downsample_14(std::span<const std::uint8_t> image28) {
  require(image28.size() == 784, "downsample_14: expected a 28x28 image");
  std::vector<double> out(196);
  for (Index r = 0; r < 14; ++r) {
    for (Index c = 0; c < 14; ++c) {
      out[static_cast<std::size_t>(r * 14 + c)] = image28[static_cast<std::size_t>(2 * r * 28 + 2 * c)] / 255.0;
    }
  }
  return out;
}

namespace {

EnvironmentSet colored_pipeline(const ColoredMnistSpec& spec, const MnistImages& train, const MnistImages& test,
                                const std::string& generator) {
  spec.validate();
  const Index n_envs = static_cast<Index>(spec.train_params.size());
  const Index need = n_envs * (spec.n_per_env + spec.n_valid_per_env);
  if (need > train.count()) {
    throw InvalidArgument(generator + ": needs " + std::to_string(need) + " training images, only " +
                          std::to_string(train.count()) + " available");
  }
  if (spec.n_test > test.count()) {
    throw InvalidArgument(generator + ": needs " + std::to_string(spec.n_test) + " test images, only " +
                          std::to_string(test.count()) + " available");
  }
  std::vector<Index> perm(static_cast<std::size_t>(train.count()));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng(derive_seed(spec.seed, generator + "/perm")).shuffle(perm);
  std::vector<Index> test_perm(static_cast<std::size_t>(test.count()));
  std::iota(test_perm.begin(), test_perm.end(), Index{0});
  Rng(derive_seed(spec.seed, generator + "/test_perm")).shuffle(test_perm);

  EnvironmentSet set;
  auto fill = [&](const std::string& name, Role role, const MnistImages& src, std::span<const Index> rows,
                  double label_noise, double color_flip) {
    Environment e = make_env(name, role, static_cast<Index>(rows.size()), kColoredMnistDim);
    e.data.x.setZero();
    Rng rng(derive_seed(spec.seed, generator + "/" + name));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const Index i = static_cast<Index>(r);
      const int digit = src.labels[static_cast<std::size_t>(rows[r])];
      int label = digit < 5 ? 1 : 0;
      if (rng.bernoulli(label_noise)) label = 1 - label;
      int color = label;
      if (rng.bernoulli(color_flip)) color = 1 - color;
      const auto small = downsample_14(src.image(rows[r]));
      // channel `color` carries the shape, the other stays zero
      for (Index p = 0; p < 196; ++p) e.data.x(i, color * 196 + p) = small[static_cast<std::size_t>(p)];
      e.data.y[i] = label;
    }
    set.envs.push_back(std::move(e));
  };
  const std::span<const Index> all(perm);
  for (Index k = 0; k < n_envs; ++k) {
    const auto [noise, flip] = spec.train_params[static_cast<std::size_t>(k)];
    fill("train" + std::to_string(k), Role::kTrain, train, all.subspan(k * spec.n_per_env, spec.n_per_env), noise,
         flip);
  }
  const Index valid_at = n_envs * spec.n_per_env;
  if (spec.n_valid_per_env > 0) {
    for (Index k = 0; k < n_envs; ++k) {
      const auto [noise, flip] = spec.train_params[static_cast<std::size_t>(k)];
      fill("valid" + std::to_string(k), Role::kValid, train,
           all.subspan(valid_at + k * spec.n_valid_per_env, spec.n_valid_per_env), noise, flip);
    }
  }
  fill("test0", Role::kTest, test, std::span<const Index>(test_perm).first(spec.n_test), spec.label_noise_test,
       spec.test_color_flip);
  stamp_env_ids(set);
  set.spec = {{"generator", generator},
              {"train_params", params_json(spec.train_params)},
              {"test_color_flip", spec.test_color_flip},
              {"label_noise_test", spec.label_noise_test},
              {"n_per_env", spec.n_per_env},
              {"n_valid_per_env", spec.n_valid_per_env},
              {"n_test", spec.n_test},
              {"seed", spec.seed}};
  return set;
}

}  // namespace

EnvironmentSet make_colored_mnist(const ColoredMnistSpec& spec, const MnistImages& train, const MnistImages& test) {
  return colored_pipeline(spec, train, test, "colored_mnist");
}

EnvironmentSet make_inverse_colored_mnist(const ColoredMnistSpec& spec, const MnistImages& train,
                                          const MnistImages& test) {
  return colored_pipeline(spec, train, test, "inverse_colored_mnist");
}

EnvironmentSet grayscale_oracle(const EnvironmentSet& set) {
  EnvironmentSet out = set;
  for (auto& e : out.envs) {
    Matrix& x = e.data.x;
    if (x.cols() != kColoredMnistDim) {
      throw InvalidArgument("grayscale_oracle: environment '" + e.name + "' has dimension " +
                            std::to_string(x.cols()) + ", expected 392");
    }
    // One channel is zero (or both already hold the shape), so the
    // elementwise max recovers the shape image.
    const Matrix shape = x.leftCols(196).cwiseMax(x.rightCols(196));
    x.leftCols(196) = shape;
    x.rightCols(196) = shape;
  }
  out.spec["grayscale"] = true;
  return out;
}

// ---------------------------------------------------------------------------

void DisentangleSpec::validate() const {
  require(n >= 1, "DisentangleSpec: n must be >= 1");
  require(sigma > 0.0, "DisentangleSpec: sigma must be > 0");
  require(epsilon >= 0.0 && epsilon < 0.5, "DisentangleSpec: epsilon must lie in [0, 0.5)");
  require(tasks >= 1 && tasks <= n, "DisentangleSpec: tasks must lie in [1, n]");
}

Dataset TaskSet::task(Index i) const {
  require(i >= 0 && i < static_cast<Index>(labels.size()), "TaskSet::task: index out of range");
  Dataset d;
  d.x = x;
  d.y = labels[static_cast<std::size_t>(i)];
  d.env.assign(static_cast<std::size_t>(x.rows()), 0);
  return d;
}

TaskSet make_disentangled_tasks(const DisentangleSpec& spec, Index samples, std::uint64_t stream) {
  spec.validate();
  require(samples >= 1, "make_disentangled_tasks: samples must be >= 1");
  TaskSet t;
  t.x.resize(samples, spec.n);
  Rng rng(derive_seed(spec.seed, "disentangle/x/" + std::to_string(stream)));
  for (Index i = 0; i < t.x.size(); ++i) t.x.data()[i] = spec.sigma * rng.normal();
  Rng flips(derive_seed(spec.seed, "disentangle/y/" + std::to_string(stream)));
  t.labels.assign(static_cast<std::size_t>(spec.tasks), Vector(samples));
  for (Index s = 0; s < samples; ++s) {
    for (Index k = 0; k < spec.tasks; ++k) {
      double y = t.x(s, k) > 0.0 ? 1.0 : 0.0;
      if (flips.bernoulli(spec.epsilon)) y = 1.0 - y;
      t.labels[static_cast<std::size_t>(k)][s] = y;
    }
  }
  return t;
}

Matrix random_orthonormal(Index n, std::uint64_t seed) {
  require(n >= 1, "random_orthonormal: n must be >= 1");
  Rng rng(seed);
  Eigen::MatrixXd g(n, n);
  for (Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < n; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

TaskSet make_entangled_tasks(const DisentangleSpec& spec, Index samples, std::uint64_t stream) {
  TaskSet t = make_disentangled_tasks(spec, samples, stream);
  const Matrix a = random_orthonormal(spec.n, derive_seed(spec.seed, "disentangle/A"));
  // rows are examples, so x' = A x becomes X' = X A^T
  t.x = (t.x * a.transpose()).eval();
  return t;
}

// ---------------------------------------------------------------------------

std::pair<Dataset, Dataset> split_train_valid(const Dataset& env, double fraction, std::uint64_t seed) {
  require(fraction > 0.0 && fraction < 1.0, "split_train_valid: fraction must lie in (0, 1)");
  const Index n = env.size();
  const Index n_train = static_cast<Index>(std::llround(fraction * static_cast<double>(n)));
  if (n_train <= 0 || n_train >= n) {
    throw InvalidArgument("split_train_valid: fraction " + std::to_string(fraction) + " of " + std::to_string(n) +
                          " examples leaves one side empty");
  }
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng(seed).shuffle(perm);
  std::vector<Index> a(perm.begin(), perm.begin() + n_train), b(perm.begin() + n_train, perm.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return {env.rows(a), env.rows(b)};
}

namespace {

void put_double(std::ostream& os, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  os.write(buf, res.ptr - buf);
}

void write_rows(std::ostream& os, const Dataset& d) {
  for (Index i = 0; i < d.size(); ++i) {
    for (Index j = 0; j < d.dim(); ++j) {
      put_double(os, d.x(i, j));
      os << ',';
    }
    put_double(os, d.y[i]);
    os << ',' << d.env[static_cast<std::size_t>(i)] << '\n';
  }
}

void write_header(std::ostream& os, Index dim) {
  for (Index j = 0; j < dim; ++j) os << 'x' << j << ',';
  os << "y,env\n";
}

}  // namespace

void write_csv(std::ostream& os, const Dataset& d) {
  write_header(os, d.dim());
  write_rows(os, d);
}

void write_csv(std::ostream& os, const EnvironmentSet& set) {
  write_header(os, set.dim());
  for (const auto& e : set.envs) write_rows(os, e.data);
}

}  // namespace bonsai
