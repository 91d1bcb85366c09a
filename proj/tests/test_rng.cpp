#include <doctest.h>

#include <cmath>
#include <vector>

#include "mow/rng.hpp"

using mow::Rng;

TEST_CASE("rng: same seed reproduces the stream") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("rng: state round-trips through (seed, counter)") {
    Rng a(7);
    for (int i = 0; i < 17; ++i) a.next_gaussian();
    Rng b(a.seed(), a.counter());
    for (int i = 0; i < 50; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("rng: splitting a request leaves the stream identical") {
    Rng a(9), b(9);
    std::vector<double> split, whole;
    for (int i = 0; i < 3; ++i) split.push_back(a.next_unit());
    for (int i = 0; i < 2; ++i) split.push_back(a.next_unit());
    for (int i = 0; i < 5; ++i) whole.push_back(b.next_unit());
    CHECK(split == whole);
}

TEST_CASE("rng: derived streams differ from the base stream") {
    Rng base(123);
    Rng d1 = Rng::derive(123, 1);
    Rng d2 = Rng::derive(123, 2);
    CHECK(base.next_u64() != d1.next_u64());
    CHECK(d1.next_u64() != d2.next_u64());
}

TEST_CASE("rng: rough moments of uniform and gaussian draws") {
    Rng r(2024);
    double su = 0.0, sg = 0.0, sg2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) su += r.next_unit();
    for (int i = 0; i < n; ++i) {
        const double g = r.next_gaussian();
        sg += g;
        sg2 += g * g;
    }
    CHECK(su / n == doctest::Approx(0.5).epsilon(0.02));
    CHECK(std::abs(sg / n) < 0.03);
    CHECK(sg2 / n == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("rng: next_below stays in range and covers values") {
    Rng r(5);
    std::vector<int> counts(10, 0);
    for (int i = 0; i < 10000; ++i) {
        const auto v = r.next_below(10);
        REQUIRE(v < 10);
        ++counts[static_cast<std::size_t>(v)];
    }
    for (int c : counts) CHECK(c > 800);
}
