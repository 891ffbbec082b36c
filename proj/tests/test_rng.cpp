#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "varigan/nn/rng.hpp"

using varigan::Rng;

TEST_CASE("same seed, same stream") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.uniform() == b.uniform());
  for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
}

TEST_CASE("uniform stays in [0,1)") {
  Rng rng(1);
  for (int i = 0; i < 100000; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("normal moments") {
  Rng rng(3);
  const int n = 200000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    double v = rng.normal();
    sum += v;
    sq += v * v;
  }
  double mean = sum / n;
  double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("below covers range without bias at boundaries") {
  Rng rng(9);
  std::vector<int> seen(7, 0);
  for (int i = 0; i < 7000; ++i) {
    std::uint64_t v = rng.below(7);
    REQUIRE(v < 7);
    ++seen[v];
  }
  for (int c : seen) CHECK(c > 700);
}

TEST_CASE("shuffle is a permutation and seed-stable") {
  std::vector<std::size_t> v(20);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
  Rng a(5);
  a.shuffle(v);
  std::vector<std::size_t> w = v;
  std::sort(w.begin(), w.end());
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(w[i] == i);

  std::vector<std::size_t> v2(20);
  for (std::size_t i = 0; i < v2.size(); ++i) v2[i] = i;
  Rng b(5);
  b.shuffle(v2);
  CHECK(v == v2);
}

TEST_CASE("state round trip resumes the stream exactly") {
  Rng rng(77);
  for (int i = 0; i < 123; ++i) rng.uniform();
  std::string state = rng.save_state();
  std::vector<double> expect;
  for (int i = 0; i < 50; ++i) expect.push_back(rng.normal());

  Rng other(0);
  other.restore_state(state);
  for (int i = 0; i < 50; ++i) CHECK(other.normal() == expect[i]);
}

TEST_CASE("fork yields a distinct stream") {
  Rng rng(11);
  Rng child = rng.fork();
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    if (rng.uniform() != child.uniform()) differs = true;
  }
  CHECK(differs);
}
