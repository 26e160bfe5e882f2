#include <doctest.h>

#include <cmath>
#include <set>

#include "scl/rng.hpp"

using scl::CounterRng;
using scl::Stream;

TEST_CASE("counter rng is a pure function of seed, stream and counter") {
  CounterRng a(42, Stream::noise);
  CounterRng b(42, Stream::noise);
  for (int k = 0; k < 100; ++k) CHECK(a() == b());

  CounterRng c(42, Stream::noise, 57);
  CHECK(c() == scl::random_bits(42, static_cast<std::uint64_t>(Stream::noise), 57));
}

TEST_CASE("streams and seeds do not collide") {
  CHECK(CounterRng(1, Stream::noise)() != CounterRng(1, Stream::guess)());
  CHECK(CounterRng(1, Stream::noise)() != CounterRng(2, Stream::noise)());
  std::set<std::uint64_t> children;
  for (std::uint64_t r = 0; r < 1000; ++r) children.insert(scl::derive_seed(7, r));
  CHECK(children.size() == 1000);
}

TEST_CASE("uniform, normal and bounded integers have the right moments") {
  CounterRng rng(9, Stream::audit);
  const int m = 200000;
  double su = 0.0, sn = 0.0, sn2 = 0.0;
  for (int k = 0; k < m; ++k) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    su += u;
  }
  for (int k = 0; k < m; ++k) {
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(su / m == doctest::Approx(0.5).epsilon(0.01));
  CHECK(std::abs(sn / m) < 0.01);
  CHECK(sn2 / m == doctest::Approx(1.0).epsilon(0.02));

  int counts[5] = {0, 0, 0, 0, 0};
  for (int k = 0; k < 50000; ++k) ++counts[rng.below(5)];
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}
