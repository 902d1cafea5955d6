#include "support.hpp"

#include "tsad/error.hpp"
#include "tsad/windowing.hpp"

#include <doctest.h>

#include <numeric>

using namespace tsad;

namespace {

TimeSeries ramp(std::size_t n) {
    TimeSeries s;
    s.values.resize(n);
    std::iota(s.values.begin(), s.values.end(), 0.0);
    return s;
}

// every k whose window [k - w + 1, k + w] fits
std::int64_t brute_count(std::int64_t length, int n) {
    const int w = n / 2;
    std::int64_t count = 0;
    for (std::int64_t k = 0; k < length; ++k)
        if (k - w + 1 >= 0 && k + w <= length - 1) ++count;
    return count;
}

}  // namespace

TEST_SUITE("windowing") {

TEST_CASE("extract_window index arithmetic") {
    const auto s = ramp(10);
    const auto win = extract_window(s, 4, 4);
    CHECK(win.center == 4);
    CHECK(win.values == std::vector<double>{3, 4, 5, 6});
}

TEST_CASE("boundaries are rejected") {
    const auto s = ramp(3);
    CHECK_THROWS_AS(extract_window(s, -1, 2), InvalidInput);
    CHECK(extract_window(s, 0, 2).values == std::vector<double>{0, 1});
    CHECK(extract_window(s, 1, 2).values == std::vector<double>{1, 2});
    CHECK_THROWS_AS(extract_window(s, 2, 2), InvalidInput);
    CHECK_THROWS_AS(extract_window(s, 1, 3), InvalidInput);
    CHECK_THROWS_AS(extract_window(s, 1, 0), InvalidInput);
}

TEST_CASE("window counts match enumeration") {
    CHECK(center_range(4032, 64).count() == brute_count(4032, 64));
    CHECK(center_range(4032, 64).count() == 3969);
    CHECK(iter_windows(ramp(64), 64).size() == 1);
    CHECK(iter_windows(ramp(100), 64).size() == 37);
    for (std::int64_t length = 1; length < 80; ++length)
        for (int n = 2; n <= 20; n += 2) {
            const auto r = center_range(static_cast<std::size_t>(length), n);
            REQUIRE(r.count() == brute_count(length, n));
            if (r.count() > 0) CHECK(r.first == n / 2 - 1);
        }
}

TEST_CASE("stride semantics") {
    const auto s = ramp(100);
    const auto all = iter_windows(s, 64, 1);
    const auto half = iter_windows(s, 64, 2);
    REQUIRE(half.size() == (all.size() + 1) / 2);
    for (std::size_t i = 0; i < half.size(); ++i) CHECK(half[i].center == all[2 * i].center);
    CHECK_THROWS_AS(iter_windows(s, 64, 0), InvalidInput);
}

TEST_CASE("short series") {
    CHECK_THROWS_AS(iter_windows(ramp(63), 64), InvalidInput);
}

TEST_CASE("windows re-read the series") {
    std::mt19937_64 rng(5);
    TimeSeries s;
    s.values = testing::uniform(rng, 300, -1, 1);
    for (int n : {2, 8, 64}) {
        const int w = n / 2;
        std::int64_t expected = w - 1;
        for (const auto& win : iter_windows(s, n)) {
            REQUIRE(win.center == expected++);
            REQUIRE(win.values.size() == static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) REQUIRE(win.values[i] == s.values[win.center - w + 1 + i]);
        }
    }
}

}
