#pragma once

#include "tsad/ingest.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace tsad {

// A length-N slice of a series around time step `center`. With w = N / 2 the
// slice covers indices [center - w + 1, center + w] (0-based).
struct Window {
    std::int64_t center = 0;
    std::vector<double> values;
};

// Admissible centers for window size n on a series of length `length`:
// [first, last] inclusive. Steps outside this range are never scored.
struct CenterRange {
    std::int64_t first = 0;
    std::int64_t last = -1;

    std::int64_t count() const { return last >= first ? last - first + 1 : 0; }
    bool contains(std::int64_t k) const { return k >= first && k <= last; }
};

CenterRange center_range(std::size_t length, int n);

Window extract_window(std::span<const double> values, std::int64_t k, int n);
Window extract_window(const TimeSeries& series, std::int64_t k, int n);

// Windows for centers first, first + step, ... <= last.
std::vector<Window> iter_windows(const TimeSeries& series, int n, int step = 1);

}  // namespace tsad
