#include "tsad/windowing.hpp"

#include "tsad/error.hpp"

#include <string>

namespace tsad {

namespace {

void check_window_size(int n) {
    if (n <= 0 || n % 2 != 0)
        throw InvalidInput("window size must be a positive even integer, got " + std::to_string(n));
}

}  // namespace

CenterRange center_range(std::size_t length, int n) {
    check_window_size(n);
    const std::int64_t w = n / 2;
    return {w - 1, static_cast<std::int64_t>(length) - w - 1};
}

Window extract_window(std::span<const double> values, std::int64_t k, int n) {
    const auto range = center_range(values.size(), n);
    if (!range.contains(k))
        throw InvalidInput("window center " + std::to_string(k) + " outside [" +
                           std::to_string(range.first) + ", " + std::to_string(range.last) + "]");
    const std::int64_t begin = k - n / 2 + 1;
    Window window;
    window.center = k;
    window.values.assign(values.begin() + begin, values.begin() + begin + n);
    return window;
}

Window extract_window(const TimeSeries& series, std::int64_t k, int n) {
    return extract_window(std::span<const double>(series.values), k, n);
}

std::vector<Window> iter_windows(const TimeSeries& series, int n, int step) {
    check_window_size(n);
    if (step <= 0) throw InvalidInput("window step must be positive");
    if (series.size() < static_cast<std::size_t>(n))
        throw InvalidInput(series.id + ": series length " + std::to_string(series.size()) +
                           " shorter than window " + std::to_string(n));
    const auto range = center_range(series.size(), n);
    std::vector<Window> windows;
    windows.reserve(static_cast<std::size_t>(range.count() / step + 1));
    for (std::int64_t k = range.first; k <= range.last; k += step)
        windows.push_back(extract_window(series, k, n));
    return windows;
}

}  // namespace tsad
