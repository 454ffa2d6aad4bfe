#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "seer/preprocess.hpp"
#include "seer/rng.hpp"
#include "testutil.hpp"

using namespace seer;
using testutil::random_tensor;

TEST_CASE("instance normalize hand example") {
  auto [xn, stats] = instance_normalize(Tensor(Shape{1, 3}, {1, 2, 3}));
  CHECK(stats.mean[0] == doctest::Approx(2.0));
  CHECK(stats.stddev[0] == doctest::Approx(std::sqrt(2.0 / 3.0)));  // biased
  CHECK(xn.values()[0] == doctest::Approx(-1.2247).epsilon(1e-3));
  CHECK(xn.values()[1] == doctest::Approx(0.0));
  CHECK(xn.values()[2] == doctest::Approx(1.2247).epsilon(1e-3));
}

TEST_CASE("constant channel normalizes to zeros") {
  auto [xn, stats] = instance_normalize(Tensor(Shape{1, 3}, {5, 5, 5}));
  CHECK(stats.stddev[0] == 0.0);
  for (double v : xn.values()) CHECK(v == 0.0);
}

TEST_CASE("normalize round trip") {
  Rng rng(8);
  Tensor x = random_tensor({3, 16}, rng, false, 10.0);
  auto [xn, stats] = instance_normalize(x);
  Tensor back = denormalize(xn, stats);
  for (std::int64_t i = 0; i < x.numel(); ++i)
    CHECK(std::fabs(back.values()[i] - x.values()[i]) < 1e-10);
}

TEST_CASE("normalized windows have zero mean and unit variance") {
  Rng rng(12);
  Tensor x = random_tensor({4, 32}, rng, false, 3.0);
  auto [xn, stats] = instance_normalize(x);
  const std::int64_t T = 32;
  for (std::int64_t c = 0; c < 4; ++c) {
    double mu = 0, var = 0;
    for (std::int64_t t = 0; t < T; ++t) mu += xn.at({c, t});
    mu /= T;
    for (std::int64_t t = 0; t < T; ++t) {
      double d = xn.at({c, t}) - mu;
      var += d * d;
    }
    var /= T;
    CHECK(std::fabs(mu) < 1e-10);
    // the +eps in the denominator shrinks the variance to (sd/(sd+eps))^2
    const double sd = stats.stddev[c];
    const double expect = (sd / (sd + kNormEps)) * (sd / (sd + kNormEps));
    CHECK(std::fabs(var - expect) < 1e-12);
    CHECK(std::fabs(var - 1.0) < 1e-4);
  }
}

TEST_CASE("denormalize mismatch and zero map") {
  NormStats stats;
  stats.mean = {2.0};
  stats.stddev = {std::sqrt(2.0 / 3.0)};
  Tensor z = Tensor::zeros({1, 4});
  Tensor y = denormalize(z, stats);
  for (double v : y.values()) CHECK(v == doctest::Approx(2.0));
  CHECK_THROWS_AS(denormalize(Tensor::zeros({2, 4}), stats), TensorError);
}

TEST_CASE("make_patches exact division") {
  Rng rng(4);
  Tensor x = random_tensor({2, 96}, rng);
  PatchConfig cfg;
  cfg.patch_len = 16;
  Tensor p = make_patches(x, cfg);
  CHECK(p.shape() == Shape{2, 6, 16});
  // contiguous slices
  for (std::int64_t c = 0; c < 2; ++c)
    for (std::int64_t j = 0; j < 6; ++j)
      for (std::int64_t t = 0; t < 16; ++t)
        CHECK(p.at({c, j, t}) == x.at({c, j * 16 + t}));

  PatchConfig one;
  one.patch_len = 4;
  Tensor single = make_patches(Tensor(Shape{1, 4}, {1, 2, 3, 4}), one);
  CHECK(single.shape() == Shape{1, 1, 4});
}

TEST_CASE("make_patches front-replicate padding reconstructs interior") {
  Tensor x(Shape{1, 5}, {7, 1, 2, 3, 4});
  PatchConfig cfg;
  cfg.patch_len = 4;
  Tensor p = make_patches(x, cfg);
  CHECK(p.shape() == Shape{1, 2, 4});
  // first patch left-padded with x0
  CHECK(p.at({0, 0, 0}) == 7);
  CHECK(p.at({0, 0, 1}) == 7);
  CHECK(p.at({0, 0, 2}) == 7);
  CHECK(p.at({0, 0, 3}) == 7);
  // dropping the padding reassembles the original
  std::vector<double> reassembled;
  const std::int64_t pad = 2 * 4 - 5;
  for (std::int64_t j = 0; j < 2; ++j)
    for (std::int64_t t = 0; t < 4; ++t)
      if (j * 4 + t >= pad) reassembled.push_back(p.at({0, j, t}));
  for (std::size_t i = 0; i < 5; ++i) CHECK(reassembled[i] == x.values()[i]);

  cfg.padding = PatchConfig::Padding::Strict;
  CHECK_THROWS_AS(make_patches(x, cfg), TensorError);
}

TEST_CASE("patch concatenation reconstructs input for random shapes") {
  Rng rng(31);
  for (int rep = 0; rep < 10; ++rep) {
    const std::int64_t N = 1 + rng.uniform_int(4);
    const std::int64_t T = 2 + rng.uniform_int(40);
    const std::int64_t p = 1 + rng.uniform_int(8);
    Tensor x = random_tensor({N, T}, rng);
    PatchConfig cfg;
    cfg.patch_len = p;
    Tensor patches = make_patches(x, cfg);
    const std::int64_t n = patches.shape()[1];
    const std::int64_t pad = n * p - T;
    for (std::int64_t c = 0; c < N; ++c)
      for (std::int64_t t = 0; t < T; ++t) {
        const std::int64_t j = (t + pad) / p, k = (t + pad) % p;
        CHECK(patches.at({c, j, k}) == x.at({c, t}));
      }
  }
}
