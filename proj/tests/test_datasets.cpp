#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "esc/datasets.hpp"
#include "esc/errors.hpp"

using namespace esc;
namespace fs = std::filesystem;

namespace {
const std::string kImages = std::string(ESC_DATA_DIR) + "/mnist/train-images-1000-idx3-ubyte";
const std::string kLabels = std::string(ESC_DATA_DIR) + "/mnist/train-labels-1000-idx1-ubyte";

LabeledDataset rows(std::initializer_list<std::initializer_list<double>> r) {
  Mat X(static_cast<int>(r.size()), static_cast<int>(r.begin()->size()));
  int i = 0;
  for (const auto& row : r) {
    int j = 0;
    for (double v : row) X(i, j++) = v;
    ++i;
  }
  return make_binary(X, "test");
}
}  // namespace

TEST_CASE("antipodal orthant data with n = 2") {
  const LabeledDataset ds = gen_orthant_separable(2, 2, 7, true);
  REQUIRE(ds.n() == 2);
  CHECK(ds.X.row(0).norm() == doctest::Approx(1.0));
  CHECK((ds.X.row(0) + ds.X.row(1)).norm() < 1e-15);
  CHECK(ds.Y(0, 0) == 1.0);
  CHECK(ds.Y(1, 0) == -1.0);
  const SeparabilityReport r = validate_separable(ds);
  CHECK(r.satisfies_4_1_i);
  REQUIRE(r.mu0.has_value());
  CHECK(*r.mu0 == 1.0);
}

TEST_CASE("orthant construction forces the inner-product signs") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const LabeledDataset ds = gen_orthant_separable(4, 3, seed, true);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        const double ip = ds.X.row(i).dot(ds.X.row(j));
        if (ds.labels[i] == ds.labels[j]) CHECK(ip >= 0.0);
        else CHECK(ip <= 0.0);
      }
  }
}

TEST_CASE("larger orthant data passes validation") {
  const LabeledDataset ds = gen_orthant_separable(100, 20, 42, true);
  const SeparabilityReport r = validate_separable(ds);
  CHECK(r.satisfies_4_1_i);
  CHECK(*r.mu0 == 1.0);
  CHECK_FALSE(r.satisfies_4_3);  // the antipodal pair gives s = -1
  check_dataset(ds);
}

TEST_CASE("hand-built separability cases") {
  CHECK(validate_separable(rows({{1, 0}, {-1, 0}})).satisfies_4_1_i);
  CHECK(validate_separable(rows({{1, 0}, {0, 1}, {-1, 0}, {0, -1}})).satisfies_4_1_i);
  CHECK_FALSE(validate_separable(rows({{1, 0}, {1, 0}})).satisfies_4_1_i);
}

TEST_CASE("concentration assumption") {
  Mat X(2, 2);
  X << 1, 0, 0, 1;
  const SeparabilityReport a = validate_concentrated(make_onehot(X, {0, 1}, 2, "t"));
  CHECK(a.s == 0.0);
  CHECK(a.satisfies_4_3);
  X << 1, 0, -1, 0;
  const SeparabilityReport b = validate_concentrated(make_onehot(X, {0, 1}, 2, "t"));
  CHECK(b.s == -1.0);
  CHECK_FALSE(b.satisfies_4_3);
  const LabeledDataset g = gen_concentrated(50, 10, 4, 3);
  CHECK(validate_concentrated(g).satisfies_4_3);
}

TEST_CASE("gamma constants") {
  const GammaConstants g2 = compute_gamma_constants(rows({{1, 0}, {-1, 0}}));
  CHECK(g2.gamma1 == doctest::Approx(0.5));
  CHECK(g2.gamma2 == doctest::Approx(0.5));
  const GammaConstants g4 = compute_gamma_constants(rows({{1, 0}, {0, 1}, {-1, 0}, {0, -1}}));
  CHECK(g4.gamma1 == doctest::Approx(0.25));
  CHECK(g4.gamma2 == doctest::Approx(0.25));
  for (std::uint64_t s = 1; s <= 5; ++s) {
    const GammaConstants g = compute_gamma_constants(gen_orthant_separable(30, 8, s, true));
    CHECK(g.gamma2 / 2.0 <= g.gamma1 + 1e-15);
    CHECK(g.gamma1 <= g.gamma2 + 1e-15);
  }
}

TEST_CASE("V for the antipodal pair") {
  const LabeledDataset ds = rows({{1, 0}, {-1, 0}});
  const VReport v = compute_V(ds, 10000, 0.01);
  const double want = (0.5 - std::sqrt(8.0 * std::log(400.0) / 1e4)) / 16.0;
  CHECK(v.V == doctest::Approx(want).epsilon(1e-12));
  CHECK(v.V == doctest::Approx(0.02692).epsilon(1e-3));
  CHECK_FALSE(v.vacuous);
  const VReport big = compute_V(ds, 1'000'000'000, 0.01);
  CHECK(big.V == doctest::Approx(1.0 / 32.0).epsilon(1e-3));
  const VReport small = compute_V(ds, 100, 0.01);
  CHECK(small.V < 0.0);
  CHECK(small.vacuous);
}

TEST_CASE("MNIST loader") {
  const LabeledDataset ds = load_mnist(kImages, kLabels, 1000, true);
  CHECK(ds.n() == 1000);
  CHECK(ds.d() == 784);
  CHECK(ds.num_classes == 10);
  for (int i = 0; i < ds.n(); ++i) REQUIRE(std::abs(ds.X.row(i).norm() - 1.0) <= 1e-12);
  CHECK(validate_concentrated(ds).satisfies_4_3);
  CHECK_THROWS_AS(load_mnist(kLabels, kLabels, 10, true), FormatError);
  CHECK_THROWS_AS(load_mnist(kImages, kLabels, 1001, true), FormatError);

  std::ifstream in(kLabels, std::ios::binary);
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), {});
  const LabeledDataset one = load_mnist(kImages, kLabels, 1, true);
  CHECK(one.n() == 1);
  CHECK(one.labels[0] == static_cast<unsigned char>(buf[8]));
  CHECK(one.Y(0, one.labels[0]) == 1.0);
}

TEST_CASE("CIFAR-10 record format") {
  const fs::path dir = fs::temp_directory_path() / "esc_cifar_test";
  fs::create_directories(dir);
  std::vector<unsigned char> rec(3073);
  rec[0] = 6;
  for (std::size_t i = 1; i < rec.size(); ++i) rec[i] = static_cast<unsigned char>(i % 251);
  {
    std::ofstream out(dir / "one.bin", std::ios::binary);
    out.write(reinterpret_cast<const char*>(rec.data()), rec.size());
  }
  const LabeledDataset ds = load_cifar10((dir / "one.bin").string(), 1, true);
  CHECK(ds.n() == 1);
  CHECK(ds.d() == 3072);
  CHECK(ds.labels[0] == 6);
  CHECK(ds.X.row(0).norm() == doctest::Approx(1.0));
  {
    std::ofstream out(dir / "short.bin", std::ios::binary);
    out.write(reinterpret_cast<const char*>(rec.data()), 3072);
  }
  CHECK_THROWS_AS(load_cifar10((dir / "short.bin").string(), 1, true), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("digest and CSV export") {
  const LabeledDataset a = gen_orthant_separable(10, 4, 1, true);
  const LabeledDataset b = gen_orthant_separable(10, 4, 1, true);
  const LabeledDataset c = gen_orthant_separable(10, 4, 2, true);
  CHECK(dataset_digest(a) == dataset_digest(b));
  CHECK(dataset_digest(a) != dataset_digest(c));
  const fs::path p = fs::temp_directory_path() / "esc_ds_test.csv";
  export_dataset_csv(a, p.string(), {{"note", "x"}});
  CHECK(fs::exists(p));
  CHECK(fs::exists(p.string() + ".json"));
  fs::remove(p);
  fs::remove(p.string() + ".json");
}

TEST_CASE("dataset validation rejects bad input") {
  Mat X(3, 2);
  X << 1, 0, 0, 1, 1, 1;
  CHECK_THROWS_AS(make_binary(X, "odd"), InvalidArgument);
  Mat Z(2, 2);
  Z << 2, 0, -1, 0;
  CHECK_THROWS_AS(check_dataset(make_binary(Z, "long")), InvalidArgument);
}
