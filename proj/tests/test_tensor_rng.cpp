#include <catch2/catch_amalgamated.hpp>

#include "ebtrain/rng.hpp"
#include "ebtrain/tensor.hpp"

using ebt::Rng;
using ebt::Tensor;

TEST_CASE("tensor shape bookkeeping") {
  Tensor<float> t({2, 3, 4});
  REQUIRE(t.size() == 24);
  REQUIRE(t.rank() == 3);
  REQUIRE(t.dim(1) == 3);
  for (std::size_t i = 0; i < t.size(); ++i) REQUIRE(t[i] == 0.0f);

  REQUIRE_THROWS_AS(Tensor<float>({2, 0, 4}), ebt::DimensionError);
  REQUIRE_THROWS_AS(Tensor<float>({3}, {1.0f, 2.0f}), ebt::DimensionError);
}

TEST_CASE("ensure_finite rejects NaN and Inf") {
  Tensor<float> t({3});
  ebt::ensure_finite(t, "test");
  t[1] = std::numeric_limits<float>::infinity();
  REQUIRE_THROWS_AS(ebt::ensure_finite(t, "test"), ebt::NumericError);
  t[1] = std::numeric_limits<float>::quiet_NaN();
  REQUIRE_THROWS_AS(ebt::ensure_finite(t, "test"), ebt::NumericError);
}

TEST_CASE("rng is deterministic for a fixed seed") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    REQUIRE(va == b.next_u64());
  }
  bool any_diff = false;
  Rng a2(42);
  for (int i = 0; i < 10; ++i) any_diff |= (a2.next_u64() != c.next_u64());
  REQUIRE(any_diff);
}

TEST_CASE("rng uniform values stay in range") {
  Rng r(7);
  for (int i = 0; i < 1000; ++i) {
    const float f = r.uniform_float();
    REQUIRE(f >= 0.0f);
    REQUIRE(f < 1.0f);
    const double d = r.uniform_double();
    REQUIRE(d >= 0.0);
    REQUIRE(d < 1.0);
    const float u = r.uniform<float>(-2.0f, 3.0f);
    REQUIRE(u >= -2.0f);
    REQUIRE(u <= 3.0f);
  }
}

TEST_CASE("rng state round-trips") {
  Rng r(99);
  r.next_u64();
  const auto snapshot = r.state();
  const auto expected = r.next_u64();
  Rng restored(0);
  restored.set_state(snapshot);
  REQUIRE(restored.next_u64() == expected);
}

TEST_CASE("shuffle is a deterministic permutation") {
  std::vector<int> v(50), w(50);
  for (int i = 0; i < 50; ++i) v[i] = w[i] = i;
  Rng a(5), b(5);
  a.shuffle(v);
  b.shuffle(w);
  REQUIRE(v == w);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) REQUIRE(sorted[i] == i);
}

TEST_CASE("derived streams differ by tag") {
  Rng a = Rng::derive(1, 1, 1);
  Rng b = Rng::derive(1, 1, 2);
  Rng c = Rng::derive(1, 1, 1);
  REQUIRE(a.next_u64() == c.next_u64());
  REQUIRE(a.next_u64() != b.next_u64());
}
