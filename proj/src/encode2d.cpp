#include "tsad/encode2d.hpp"

#include "tsad/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

namespace tsad {

namespace {

constexpr double kRangeSlack = 1e-9;
constexpr char kTensorMagic[4] = {'T', '2', 'I', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char bytes[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                    static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char bytes[4];
    if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw FormatError("truncated tensor header");
    return static_cast<std::uint32_t>(bytes[0]) | static_cast<std::uint32_t>(bytes[1]) << 8 |
           static_cast<std::uint32_t>(bytes[2]) << 16 | static_cast<std::uint32_t>(bytes[3]) << 24;
}

}  // namespace

std::vector<double> gaf_rescale(std::span<const double> window) {
    if (window.empty()) throw InvalidInput("gaf_rescale: empty window");
    const auto [lo_it, hi_it] = std::minmax_element(window.begin(), window.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    std::vector<double> out(window.size(), 0.0);
    if (!(hi > lo)) return out;
    for (std::size_t i = 0; i < window.size(); ++i) {
        const double x = ((window[i] - hi) + (window[i] - lo)) / (hi - lo);
        out[i] = std::clamp(x, -1.0, 1.0);
    }
    return out;
}

Matrix gaf_encode(std::span<const double> rescaled) {
    const int n = static_cast<int>(rescaled.size());
    std::vector<double> sine(rescaled.size());
    for (int i = 0; i < n; ++i) {
        const double x = rescaled[i];
        if (!(std::abs(x) <= 1.0 + kRangeSlack))
            throw InvalidInput("gaf_encode: value " + std::to_string(x) + " outside [-1, 1]");
        sine[i] = std::sqrt(std::max(0.0, 1.0 - x * x));
    }
    Matrix g(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) g(i, j) = rescaled[i] * rescaled[j] - sine[i] * sine[j];
    return g;
}

Matrix rp_encode(std::span<const double> window, int m, int tau) {
    if (m < 1 || tau < 1) throw InvalidInput("rp_encode: m and tau must be positive");
    const long span = static_cast<long>(m - 1) * tau;
    const long count = static_cast<long>(window.size()) - span;
    if (count < 1)
        throw InvalidInput("rp_encode: trajectory (m=" + std::to_string(m) + ", tau=" + std::to_string(tau) +
                           ") exceeds window length " + std::to_string(window.size()));
    const int n = static_cast<int>(count);
    Matrix r(n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            double d;
            if (m == 1) {
                d = std::abs(window[i] - window[j]);
            } else {
                double acc = 0.0;
                for (int e = 0; e < m; ++e) {
                    const double diff = window[i + e * tau] - window[j + e * tau];
                    acc += diff * diff;
                }
                d = std::sqrt(acc);
            }
            r(i, j) = d;
            r(j, i) = d;
        }
    }
    return r;
}

EncodedWindow encode_window(const Window& window, int m, int tau) {
    const int n = static_cast<int>(window.values.size());
    const Matrix gaf = gaf_encode(gaf_rescale(window.values));
    const Matrix rp = rp_encode(window.values, m, tau);
    if (rp.n != n)
        throw ConfigError("encode_window: recurrence plot side " + std::to_string(rp.n) +
                          " does not match window length " + std::to_string(n));
    EncodedWindow out;
    out.center = window.center;
    out.n = n;
    out.tensor.resize(static_cast<std::size_t>(n) * n * EncodedWindow::kChannels);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const std::size_t base = (static_cast<std::size_t>(i) * n + j) * EncodedWindow::kChannels;
            out.tensor[base] = gaf(i, j);
            out.tensor[base + 1] = rp(i, j);
        }
    }
    return out;
}

std::vector<float> encode_series(const TimeSeries& series, int n) {
    const auto windows = iter_windows(series, n, 1);
    const std::size_t stride = static_cast<std::size_t>(n) * n * EncodedWindow::kChannels;
    std::vector<float> batch(windows.size() * stride);
    for (std::size_t w = 0; w < windows.size(); ++w) {
        const auto enc = encode_window(windows[w]);
        std::transform(enc.tensor.begin(), enc.tensor.end(), batch.begin() + w * stride,
                       [](double v) { return static_cast<float>(v); });
    }
    return batch;
}

void write_tensor(const std::filesystem::path& path, const EncodedWindow& window) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot write " + path.string());
    out.write(kTensorMagic, 4);
    put_u32(out, static_cast<std::uint32_t>(window.n));
    put_u32(out, EncodedWindow::kChannels);
    static_assert(std::endian::native == std::endian::little, "tensor cache assumes little-endian host");
    for (double v : window.tensor) {
        const float f = static_cast<float>(v);
        out.write(reinterpret_cast<const char*>(&f), sizeof f);
    }
}

EncodedWindow read_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kTensorMagic, 4) != 0)
        throw FormatError(path.string() + ": bad tensor magic");
    EncodedWindow window;
    window.n = static_cast<int>(get_u32(in));
    const auto channels = get_u32(in);
    if (channels != EncodedWindow::kChannels)
        throw FormatError(path.string() + ": expected 2 channels, got " + std::to_string(channels));
    window.tensor.resize(static_cast<std::size_t>(window.n) * window.n * channels);
    for (double& v : window.tensor) {
        float f = 0.0f;
        if (!in.read(reinterpret_cast<char*>(&f), sizeof f)) throw FormatError(path.string() + ": truncated payload");
        v = f;
    }
    return window;
}

}  // namespace tsad
