#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "seer/data.hpp"
#include "seer/rng.hpp"

using namespace seer;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

TimeSeriesFrame make_frame(std::int64_t channels, std::int64_t length,
                           std::uint64_t seed) {
  TimeSeriesFrame f;
  f.channels = channels;
  f.length = length;
  for (std::int64_t c = 0; c < channels; ++c)
    f.channel_names.push_back("ch" + std::to_string(c));
  f.values.resize(static_cast<std::size_t>(channels * length));
  Rng rng(seed);
  for (auto& v : f.values) v = rng.uniform(-5, 5);
  return f;
}

}  // namespace

TEST_CASE("load_csv basics") {
  const auto path = temp_path("seer_test_basic.csv");
  {
    std::ofstream out(path);
    out << "date,a,b\n0,1.5,2\n1,2.5,3\n2,3.5,4\n";
  }
  auto f = load_csv(path);
  CHECK(f.channels == 2);
  CHECK(f.length == 3);
  CHECK(f.channel_names[0] == "a");
  CHECK(f.at(0, 1) == 2.5);
  CHECK(f.at(1, 2) == 4.0);
  CHECK(f.nan_count == 0);
}

TEST_CASE("load_csv zero-fills NaN and logs the count") {
  const auto path = temp_path("seer_test_nan.csv");
  {
    std::ofstream out(path);
    out << "date,a\n0,1\n1,NaN\n2,3\n";
  }
  auto f = load_csv(path);
  CHECK(f.nan_count == 1);
  CHECK(f.at(0, 1) == 0.0);
}

TEST_CASE("load_csv errors") {
  const auto bad = temp_path("seer_test_bad.csv");
  {
    std::ofstream out(bad);
    out << "date,a\n0,xyz\n";
  }
  CHECK_THROWS_WITH_AS(load_csv(bad), doctest::Contains("row 2"), DataError);

  const auto narrow = temp_path("seer_test_narrow.csv");
  {
    std::ofstream out(narrow);
    out << "date\n0\n";
  }
  CHECK_THROWS_AS(load_csv(narrow), DataError);
}

TEST_CASE("csv round trip preserves values") {
  auto f = make_frame(3, 50, 77);
  const auto path = temp_path("seer_test_rt.csv");
  save_csv(f, path);
  auto g = load_csv(path);
  CHECK(g.channels == f.channels);
  CHECK(g.length == f.length);
  for (std::size_t i = 0; i < f.values.size(); ++i)
    CHECK(g.values[i] == f.values[i]);  // %.17g round-trips doubles exactly
}

TEST_CASE("split lengths and chronology") {
  auto f = make_frame(2, 100, 5);
  auto [tr, va, te] = split(f, 0.6, 0.2, 0.2);
  CHECK(tr.length == 60);
  CHECK(va.length == 20);
  CHECK(te.length == 20);
  // concatenation equals original
  for (std::int64_t c = 0; c < 2; ++c) {
    for (std::int64_t t = 0; t < 60; ++t) CHECK(tr.at(c, t) == f.at(c, t));
    for (std::int64_t t = 0; t < 20; ++t) CHECK(va.at(c, t) == f.at(c, 60 + t));
    for (std::int64_t t = 0; t < 20; ++t) CHECK(te.at(c, t) == f.at(c, 80 + t));
  }

  auto g = make_frame(1, 10, 6);
  auto [tr2, va2, te2] = split(g, 0.7, 0.1, 0.2);
  CHECK(tr2.length == 7);
  CHECK(va2.length == 1);
  CHECK(te2.length == 2);

  CHECK_THROWS_AS(split(f, 0.5, 0.2, 0.2), DataError);
}

TEST_CASE("window counts") {
  auto f = make_frame(1, 100, 9);
  CHECK(windows(f, 96, 1).size() == 4);  // L - T - F + 1
  auto g = make_frame(1, 24, 9);
  CHECK(windows(g, 16, 8).size() == 1);
  CHECK_THROWS_AS(windows(g, 20, 8), DataError);
  // stride
  CHECK(windows(f, 90, 2, 4).size() == 3);
}

TEST_CASE("metrics hand fixtures") {
  auto perfect = metrics({1, 2, 3}, {1, 2, 3});
  CHECK(perfect.mse == 0.0);
  CHECK(perfect.mae == 0.0);
  CHECK(perfect.msmape == 0.0);

  auto r = metrics({2}, {0});
  CHECK(r.mse == doctest::Approx(4.0));
  CHECK(r.mae == doctest::Approx(2.0));

  // mase: context [1,2,3,4], m=1 -> naive scale 1.0; mae 0.5 -> mase 0.5
  auto m = metrics({1.5}, {1.0}, {1, 2, 3, 4});
  CHECK(m.mae == doctest::Approx(0.5));
  CHECK(m.mase == doctest::Approx(0.5));

  // zero naive denominator -> undefined sentinel
  auto undef = metrics({1.0}, {2.0}, {3, 3, 3, 3});
  CHECK(std::isnan(undef.mase));

  CHECK_THROWS_AS(metrics({1, 2}, {1}), DataError);
}

TEST_CASE("metric sign properties on random data") {
  Rng rng(15);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> a(10), b(10);
    for (auto& v : a) v = rng.uniform(-3, 3);
    for (auto& v : b) v = rng.uniform(-3, 3);
    auto r = metrics(a, b);
    CHECK(r.mse >= 0.0);
    CHECK(r.mae >= 0.0);
    CHECK((r.mse == 0.0) == (r.mae == 0.0));
  }
}

TEST_CASE("msmape denominator floor") {
  // both near zero: denominator clamps at 0.5 + eps
  auto r = metrics({0.01}, {0.0});
  const double expect = 200.0 * 0.01 / 0.6;
  CHECK(r.msmape == doctest::Approx(expect));
}
