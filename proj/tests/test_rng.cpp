#include <cmath>
#include <set>

#include "doctest.h"
#include "esc/rng.hpp"

using esc::CounterRng;

TEST_CASE("same seed and stream give the same sequence") {
  CounterRng a(42, 3), b(42, 3);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("streams and seeds are distinct") {
  CounterRng a(42, 0), b(42, 1), c(43, 0);
  const auto x = a.next_u64(), y = b.next_u64(), z = c.next_u64();
  CHECK(x != y);
  CHECK(x != z);
  CHECK(esc::derive_seed(1, 2) != esc::derive_seed(2, 1));
  CHECK(esc::derive_seed(1, 2) == esc::derive_seed(1, 2));
}

TEST_CASE("uniform lies in the open unit interval with mean 1/2") {
  CounterRng r(7);
  double s = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    s += u;
  }
  CHECK(std::abs(s / n - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST_CASE("normal moments") {
  CounterRng r(11);
  const int n = 400000;
  double s = 0.0, s2 = 0.0, s4 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
    s4 += z * z * z * z;
  }
  CHECK(std::abs(s / n) < 4.0 / std::sqrt(n));
  CHECK(std::abs(s2 / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(s4 / n - 3.0) < 4.0 * std::sqrt(96.0 / n));
}

TEST_CASE("rademacher and below") {
  CounterRng r(5);
  int plus = 0;
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 10000; ++i) {
    const double s = r.rademacher();
    REQUIRE((s == 1.0 || s == -1.0));
    plus += s > 0;
    const auto k = r.below(7);
    REQUIRE(k < 7);
    seen.insert(k);
  }
  CHECK(std::abs(plus - 5000) < 400);
  CHECK(seen.size() == 7);
}
