#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "bonsai/environments.hpp"
#include "bonsai/rng.hpp"

using namespace bonsai;
namespace fs = std::filesystem;

namespace {

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  out.write(b, 4);
}

struct IdxFixture {
  fs::path dir;
  IdxFixture() : dir(fs::temp_directory_path() / ("bonsai_idx_" + std::to_string(::getpid()))) {
    fs::create_directories(dir);
  }
  ~IdxFixture() { fs::remove_all(dir); }

  std::string images(std::uint32_t magic, std::uint32_t count, std::uint32_t payload_images, std::uint32_t side = 28) {
    const auto p = dir / ("img" + std::to_string(serial++));
    std::ofstream out(p, std::ios::binary);
    put_be32(out, magic);
    put_be32(out, count);
    put_be32(out, side);
    put_be32(out, side);
    for (std::uint32_t i = 0; i < payload_images * side * side; ++i) out.put(static_cast<char>(i % 251));
    return p.string();
  }
  std::string labels(std::uint32_t magic, std::uint32_t count, std::uint32_t payload) {
    const auto p = dir / ("lab" + std::to_string(serial++));
    std::ofstream out(p, std::ios::binary);
    put_be32(out, magic);
    put_be32(out, count);
    for (std::uint32_t i = 0; i < payload; ++i) out.put(static_cast<char>(i % 10));
    return p.string();
  }
  int serial = 0;
};

// Random images with random digit labels; the generators never look at what
// the pixels depict.
MnistImages fake_mnist(Index n, std::uint64_t seed) {
  Rng rng(seed);
  MnistImages m;
  m.pixels.resize(static_cast<std::size_t>(n * 784));
  m.labels.resize(static_cast<std::size_t>(n));
  for (auto& p : m.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  for (auto& l : m.labels) l = static_cast<std::uint8_t>(rng.below(10));
  return m;
}

double binomial_sigma(double p, Index n) { return std::sqrt(p * (1 - p) / static_cast<double>(n)); }

// Index of the non-zero channel (-1 if both are zero).
int active_channel(const Matrix& x, Index i) {
  const bool c0 = x.row(i).head(196).any(), c1 = x.row(i).tail(196).any();
  if (c0 && !c1) return 0;
  if (c1 && !c0) return 1;
  return -1;
}

}  // namespace

TEST_CASE("load_mnist_idx parses a well-formed pair") {
  IdxFixture fx;
  const auto m = load_mnist_idx(fx.images(0x803, 3, 3), fx.labels(0x801, 3, 3));
  CHECK(m.count() == 3);
  CHECK(m.pixels.size() == 3 * 784);
  CHECK(m.labels == std::vector<std::uint8_t>{0, 1, 2});
  CHECK(m.image(1)[0] == static_cast<std::uint8_t>(784 % 251));
}

TEST_CASE("load_mnist_idx error classes") {
  IdxFixture fx;
  CHECK_THROWS_AS(load_mnist_idx(fx.images(0x804, 3, 3), fx.labels(0x801, 3, 3)), IdxMagicError);
  // labels file carrying the images magic
  CHECK_THROWS_AS(load_mnist_idx(fx.images(0x803, 3, 3), fx.labels(0x803, 3, 3)), IdxMagicError);
  CHECK_THROWS_AS(load_mnist_idx(fx.images(0x803, 3, 2), fx.labels(0x801, 3, 3)), IdxTruncatedError);
  CHECK_THROWS_AS(load_mnist_idx(fx.images(0x803, 3, 3), fx.labels(0x801, 3, 1)), IdxTruncatedError);
  CHECK_THROWS_AS(load_mnist_idx(fx.images(0x803, 3, 3), fx.labels(0x801, 2, 2)), IdxCountError);
  CHECK_THROWS_AS(load_mnist_idx(fx.images(0x803, 1, 1, 27), fx.labels(0x801, 1, 1)), IdxCountError);
  CHECK_THROWS_AS(load_mnist_idx((fx.dir / "missing").string(), fx.labels(0x801, 1, 1)), Error);
}

TEST_CASE("official MNIST train split has 60000 images") {
  const std::string dir = default_mnist_dir();
  if (!fs::exists(dir + "/train-images-idx3-ubyte")) {
    MESSAGE("MNIST not found in " << dir << "; run tools/fetch_mnist.sh");
    return;
  }
  const auto m = load_mnist_split(dir, true);
  CHECK(m.count() == 60000);
  CHECK(load_mnist_split(dir, false).count() == 10000);
}

TEST_CASE("make_twobits semantics") {
  TwoBitsSpec spec;
  CHECK(spec.train_params == std::vector<std::pair<double, double>>{{0.1, 0.1}, {0.1, 0.3}});

  spec.train_params = {{0.0, 0.5}, {0.1, 0.1}};
  spec.n_per_env = 10000;
  const auto set = make_twobits(spec);
  CHECK(set.dim() == 2);
  CHECK(set.with_role(Role::kTrain).size() == 2);
  CHECK(set.with_role(Role::kValid).size() == 2);
  CHECK(set.with_role(Role::kTest).size() == 1);

  const Dataset& exact = set.envs[0].data;
  for (Index i = 0; i < exact.size(); ++i) CHECK(exact.x(i, 0) == 2 * exact.y[i] - 1);

  const Dataset& d = set.envs[1].data;
  const Index n = d.size();
  double agree1 = 0, agree2 = 0, pos = 0;
  for (Index i = 0; i < n; ++i) {
    const double y = 2 * d.y[i] - 1;
    agree1 += d.x(i, 0) == y;
    agree2 += d.x(i, 1) == y;
    pos += d.y[i];
  }
  CHECK(std::abs(agree1 / n - 0.9) < 3 * binomial_sigma(0.9, n));
  CHECK(std::abs(agree2 / n - 0.9) < 3 * binomial_sigma(0.9, n));
  CHECK(std::abs(pos / n - 0.5) < 3 * binomial_sigma(0.5, n));

  // X1 and X2 are independent given Y.
  for (double label : {0.0, 1.0}) {
    double s1 = 0, s2 = 0, s12 = 0, m = 0;
    for (Index i = 0; i < n; ++i) {
      if (d.y[i] != label) continue;
      s1 += d.x(i, 0);
      s2 += d.x(i, 1);
      s12 += d.x(i, 0) * d.x(i, 1);
      ++m;
    }
    const double cov = s12 / m - (s1 / m) * (s2 / m);
    CHECK(std::abs(cov) < 4.0 / std::sqrt(m));
  }

  const auto again = make_twobits(spec);
  CHECK(again.envs[1].data.x == d.x);
  spec.seed = 1;
  CHECK_FALSE(make_twobits(spec).envs[1].data.x == d.x);
  spec.train_params = {{1.5, 0.1}};
  CHECK_THROWS_AS(make_twobits(spec), InvalidArgument);
}

TEST_CASE("downsample_14 takes every second pixel") {
  std::vector<std::uint8_t> img(784);
  for (int r = 0; r < 28; ++r)
    for (int c = 0; c < 28; ++c) img[static_cast<std::size_t>(r * 28 + c)] = static_cast<std::uint8_t>((r * 7 + c) % 256);
  const auto s = downsample_14(img);
  REQUIRE(s.size() == 196);
  CHECK(s[0] == 0.0);
  CHECK(s[1] == 2.0 / 255.0);
  CHECK(s[14] == 14.0 / 255.0);
  CHECK(s[14 * 13 + 13] == (26 * 7 + 26) / 255.0);
}

TEST_CASE("make_colored_mnist structure") {
  const auto train = fake_mnist(12000, 1);
  const auto test = fake_mnist(3000, 2);
  CHECK(ColoredMnistSpec{}.n_per_env == 25000);

  ColoredMnistSpec spec;
  spec.n_per_env = 5000;
  spec.n_valid_per_env = 1000;
  spec.n_test = 3000;
  const auto set = make_colored_mnist(spec, train, test);
  CHECK(set.dim() == 392);
  CHECK(set.envs.size() == 5);
  CHECK(set.envs[0].data.size() == 5000);

  // color agreement in train0 (flip 0.1) and test (flip 0.9)
  auto agreement = [](const Dataset& d) {
    double a = 0;
    for (Index i = 0; i < d.size(); ++i) a += active_channel(d.x, i) == static_cast<int>(d.y[i]);
    return a / static_cast<double>(d.size());
  };
  CHECK(std::abs(agreement(set.envs[0].data) - 0.9) < 3 * binomial_sigma(0.9, 5000));
  CHECK(std::abs(agreement(set.envs[1].data) - 0.8) < 3 * binomial_sigma(0.8, 5000));
  CHECK(std::abs(agreement(set.envs[4].data) - 0.1) < 3 * binomial_sigma(0.1, 3000));

  spec.train_params = {{0.25, 0.0}};
  const auto clean = make_colored_mnist(spec, train, test);
  CHECK(agreement(clean.envs[0].data) == 1.0);

  spec.n_per_env = 7000;
  spec.train_params = {{0.25, 0.1}, {0.25, 0.2}};
  CHECK_THROWS_AS(make_colored_mnist(spec, train, test), InvalidArgument);
}

TEST_CASE("make_colored_mnist labels follow digit < 5 with noise") {
  // Stamp the digit into pixel (0, 0) so it survives downsampling.
  MnistImages train = fake_mnist(4000, 3);
  for (Index i = 0; i < train.count(); ++i) {
    train.pixels[static_cast<std::size_t>(i * 784)] = static_cast<std::uint8_t>(10 + 20 * train.labels[static_cast<std::size_t>(i)]);
  }
  ColoredMnistSpec spec;
  spec.train_params = {{0.0, 0.1}, {0.25, 0.1}};
  spec.n_per_env = 2000;
  spec.n_valid_per_env = 0;
  spec.n_test = 100;
  const auto set = make_colored_mnist(spec, train, fake_mnist(100, 4));
  auto digit_of = [](const Dataset& d, Index i) {
    const double v = std::max(d.x(i, 0), d.x(i, 196)) * 255.0;
    return static_cast<int>(std::lround((v - 10.0) / 20.0));
  };
  const Dataset& clean = set.envs[0].data;
  for (Index i = 0; i < clean.size(); ++i) CHECK(clean.y[i] == (digit_of(clean, i) < 5 ? 1.0 : 0.0));
  const Dataset& noisy = set.envs[1].data;
  double flipped = 0;
  for (Index i = 0; i < noisy.size(); ++i) flipped += noisy.y[i] != (digit_of(noisy, i) < 5 ? 1.0 : 0.0);
  CHECK(std::abs(flipped / 2000 - 0.25) < 3 * binomial_sigma(0.25, 2000));
  CHECK(make_colored_mnist(spec, train, fake_mnist(100, 4)).envs[0].data.x == clean.x);
}

TEST_CASE("inverse variant: shape is more predictive than color") {
  const auto train = fake_mnist(12000, 5);
  const auto test = fake_mnist(2000, 6);
  ColoredMnistSpec spec = inverse_colored_mnist_defaults();
  spec.n_per_env = 5000;
  spec.n_valid_per_env = 1000;
  spec.n_test = 2000;
  const auto set = make_inverse_colored_mnist(spec, train, test);
  CHECK(set.spec["generator"] == "inverse_colored_mnist");
  // Shape agreement is 1 - label_noise; color agreement 1 - color_flip.
  for (const auto& [noise, flip] : spec.train_params) CHECK(1 - noise > 1 - flip);
  // Measure color agreement on generated data.
  for (int k = 0; k < 2; ++k) {
    const Dataset& d = set.envs[static_cast<std::size_t>(k)].data;
    double a = 0;
    for (Index i = 0; i < d.size(); ++i) a += active_channel(d.x, i) == static_cast<int>(d.y[i]);
    CHECK(a / static_cast<double>(d.size()) < 0.85 - 3 * binomial_sigma(0.85, d.size()));
  }
}

TEST_CASE("grayscale_oracle") {
  ColoredMnistSpec spec;
  spec.n_per_env = 300;
  spec.n_valid_per_env = 100;
  spec.n_test = 200;
  const auto set = make_colored_mnist(spec, fake_mnist(1000, 7), fake_mnist(200, 8));
  const auto g = grayscale_oracle(set);
  for (const auto& e : g.envs) CHECK(e.data.x.leftCols(196) == e.data.x.rightCols(196));
  const auto gg = grayscale_oracle(g);
  for (std::size_t k = 0; k < g.envs.size(); ++k) {
    CHECK(gg.envs[k].data.x == g.envs[k].data.x);
    CHECK(gg.envs[k].data.y == set.envs[k].data.y);
  }
  CHECK_THROWS_AS(grayscale_oracle(make_twobits(TwoBitsSpec{})), InvalidArgument);
}

TEST_CASE("random_orthonormal") {
  for (Index n : {1, 5, 100}) {
    const Matrix a = random_orthonormal(n, 3);
    CHECK((a * a.transpose() - Matrix::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-10);
  }
  CHECK(random_orthonormal(10, 3) == random_orthonormal(10, 3));
}

TEST_CASE("disentangled and entangled tasks") {
  DisentangleSpec spec;
  spec.epsilon = 0.0;
  const auto t = make_disentangled_tasks(spec, 500, 0);
  CHECK(t.labels.size() == 100);
  for (Index k = 0; k < 100; k += 7) {
    for (Index i = 0; i < 500; ++i) CHECK(t.labels[static_cast<std::size_t>(k)][i] == (t.x(i, k) > 0 ? 1.0 : 0.0));
  }

  spec.epsilon = 0.1;
  spec.sigma = 2.0;
  const auto d = make_disentangled_tasks(spec, 20000, 1);
  const auto e = make_entangled_tasks(spec, 20000, 1);
  for (std::size_t k = 0; k < 100; ++k) CHECK(d.labels[k] == e.labels[k]);
  const Matrix cov = e.x.transpose() * e.x / 20000.0;
  const Matrix target = 4.0 * Matrix::Identity(100, 100);
  // entry std is about sigma^2 sqrt(2 / n) = 0.04 on the diagonal, 0.028 off it
  CHECK((cov - target).cwiseAbs().maxCoeff() < 0.25);
  CHECK(std::abs((cov - target).diagonal().mean()) < 0.02);
  CHECK_FALSE(e.x == d.x);

  double flips = 0;
  for (Index i = 0; i < 20000; ++i) flips += d.labels[3][i] != (d.x(i, 3) > 0 ? 1.0 : 0.0);
  CHECK(std::abs(flips / 20000 - 0.1) < 3 * binomial_sigma(0.1, 20000));

  spec.tasks = 101;
  CHECK_THROWS_AS(make_disentangled_tasks(spec, 10, 0), InvalidArgument);
}

TEST_CASE("split_train_valid") {
  Dataset d;
  d.x = Matrix(10, 1);
  for (Index i = 0; i < 10; ++i) d.x(i, 0) = static_cast<double>(i);
  d.y = Vector::Zero(10);
  d.env.assign(10, 3);
  const auto [a, b] = split_train_valid(d, 0.5, 9);
  CHECK(a.size() == 5);
  CHECK(b.size() == 5);
  const auto [a2, b2] = split_train_valid(d, 0.5, 9);
  CHECK(a.x == a2.x);
  std::vector<double> all;
  for (Index i = 0; i < 5; ++i) all.push_back(a.x(i, 0));
  for (Index i = 0; i < 5; ++i) all.push_back(b.x(i, 0));
  std::sort(all.begin(), all.end());
  for (int i = 0; i < 10; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);
  CHECK(a.env == std::vector<int>(5, 3));
  CHECK_THROWS_AS(split_train_valid(d, 0.01, 1), InvalidArgument);
  CHECK_THROWS_AS(split_train_valid(d, 1.0, 1), InvalidArgument);
}

TEST_CASE("write_csv layout") {
  TwoBitsSpec spec;
  spec.train_params = {{0.0, 0.0}};
  spec.test_params = {};
  spec.n_per_env = 2;
  spec.n_valid_per_env = 0;
  std::ostringstream os;
  write_csv(os, make_twobits(spec));
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "x0,x1,y,env");
  std::getline(in, line);
  CHECK((line == "1,1,1,0" || line == "-1,-1,0,0"));
}
