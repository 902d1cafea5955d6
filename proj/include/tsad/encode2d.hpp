#pragma once

#include "tsad/windowing.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace tsad {

// Square row-major matrix.
struct Matrix {
    int n = 0;
    std::vector<double> data;

    Matrix() = default;
    explicit Matrix(int size) : n(size), data(static_cast<std::size_t>(size) * size, 0.0) {}
    double& operator()(int i, int j) { return data[static_cast<std::size_t>(i) * n + j]; }
    double operator()(int i, int j) const { return data[static_cast<std::size_t>(i) * n + j]; }
};

// N x N x 2 image of one window, stored [i][j][c] row-major with c fastest.
// Channel 0 is the Gramian angular (summation) field, channel 1 the recurrence plot.
struct EncodedWindow {
    static constexpr int kChannels = 2;

    std::int64_t center = 0;
    int n = 0;
    std::vector<double> tensor;

    double at(int i, int j, int c) const {
        return tensor[(static_cast<std::size_t>(i) * n + j) * kChannels + c];
    }
};

// Min-max rescale into [-1, 1]. A constant window maps to all zeros.
std::vector<double> gaf_rescale(std::span<const double> window);

// G[i][j] = x_i x_j - sqrt(1 - x_i^2) sqrt(1 - x_j^2) = cos(phi_i + phi_j).
Matrix gaf_encode(std::span<const double> rescaled);

// Euclidean distances between delay-embedded trajectories of dimension m and delay tau.
Matrix rp_encode(std::span<const double> window, int m = 1, int tau = 1);

EncodedWindow encode_window(const Window& window, int m = 1, int tau = 1);

// Flat [count, N, N, 2] float batch of every window of `series` (step 1).
std::vector<float> encode_series(const TimeSeries& series, int n);

// Tensor cache: magic "T2I1", N and C as u32 little-endian, then N*N*C float32 row-major.
void write_tensor(const std::filesystem::path& path, const EncodedWindow& window);
EncodedWindow read_tensor(const std::filesystem::path& path);

}  // namespace tsad
