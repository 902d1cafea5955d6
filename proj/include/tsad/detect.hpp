#pragma once

#include "tsad/hvae.hpp"
#include "tsad/ingest.hpp"
#include "tsad/windowing.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tsad {

// Anything that maps a batch of encoded windows [B, N, N, 2] (row-major,
// channel fastest) to reconstructions of the same shape.
class Reconstructor {
public:
    virtual ~Reconstructor() = default;
    virtual int window() const = 0;
    virtual std::vector<float> reconstruct(std::span<const float> batch_nhwc, int batch) const = 0;
};

// Reconstructs through the VAE. By default latents are the posterior means
// at every group; with `sample_posterior` they are drawn instead.
class VaeReconstructor : public Reconstructor {
public:
    VaeReconstructor(const HierarchicalVae<float>& model, bool sample_posterior = false, std::uint64_t seed = 0);
    int window() const override { return model_.arch().window; }
    std::vector<float> reconstruct(std::span<const float> batch_nhwc, int batch) const override;

private:
    const HierarchicalVae<float>& model_;
    bool sample_;
    mutable NoiseSource noise_;
};

// Test stubs: perfect reconstruction and an all-zero decoder.
class IdentityReconstructor : public Reconstructor {
public:
    explicit IdentityReconstructor(int window) : window_(window) {}
    int window() const override { return window_; }
    std::vector<float> reconstruct(std::span<const float> batch_nhwc, int) const override {
        return {batch_nhwc.begin(), batch_nhwc.end()};
    }

private:
    int window_;
};

class ZeroReconstructor : public Reconstructor {
public:
    explicit ZeroReconstructor(int window) : window_(window) {}
    int window() const override { return window_; }
    std::vector<float> reconstruct(std::span<const float> batch_nhwc, int) const override {
        return std::vector<float>(batch_nhwc.size(), 0.0f);
    }

private:
    int window_;
};

// Scores for the scorable centers [range.first, range.last]; scores[i] belongs
// to step range.first + i.
struct ScoreSeries {
    CenterRange range;
    std::vector<double> scores;
    double mean = 0.0;
    double std = 0.0;  // population standard deviation

    double at(std::int64_t k) const { return scores.at(static_cast<std::size_t>(k - range.first)); }
};

ScoreSeries make_score_series(CenterRange range, std::vector<double> scores);

struct AnomalySequence {
    std::int64_t start = 0;
    std::int64_t end = 0;  // exclusive
    double max_score = 0.0;

    IndexRange range() const { return {start, end}; }
    friend bool operator==(const AnomalySequence&, const AnomalySequence&) = default;
};

struct DetectConfig {
    int window = 64;
    double theta = 0.1;
    double lambda = 0.95;
    int batch_size = 128;
    bool sample_posterior = false;
    std::uint64_t seed = 0;
    ImputePolicy impute = ImputePolicy::linear;
};

struct DetectionReport {
    std::string series_id;
    std::size_t length = 0;
    int window = 0;
    ScoreSeries scores;
    double threshold = 0.0;
    std::vector<AnomalySequence> sequences_raw;
    std::vector<AnomalySequence> sequences_pruned;
    std::vector<bool> predictions;  // per time step, length L
    std::optional<std::vector<std::int64_t>> timestamps;

    std::vector<IndexRange> predicted_ranges() const;
};

// score_k = 0.5 * sum (X_k - X_hat_k)^2 for every scorable center k. `series`
// must already be standardized and free of missing values.
ScoreSeries score_series(const Reconstructor& model, const TimeSeries& series, int window, int batch_size = 128);

// mean + 2 * std; a step is anomalous iff its score is strictly greater.
double threshold(const ScoreSeries& scores);

// Maximal runs of true flags. Flag i maps to step offset + i; scores[i] is its score.
std::vector<AnomalySequence> group_sequences(const std::vector<bool>& flags, std::span<const double> scores,
                                             std::int64_t offset = 0);

// Sorts maxima descending (earlier start first on ties) and, at the first rank
// i >= 2 with p_i < theta, m_i < 4 std and m_i < lambda m_1, drops rank i and
// everything after it. Survivors are returned in start order.
std::vector<AnomalySequence> prune(const std::vector<AnomalySequence>& sequences, double std, double theta,
                                   double lambda);

// Threshold, group and prune an already computed score series.
DetectionReport detect_from_scores(const std::string& series_id, std::size_t length, int window,
                                   ScoreSeries scores, double theta, double lambda);

// Full pipeline on a raw series. Standardization uses `standardization` when
// given (the training series' parameters), otherwise the series' own.
DetectionReport detect(const Reconstructor& model, const TimeSeries& series, const DetectConfig& cfg,
                       const std::optional<StandardizationParams>& standardization = std::nullopt);

// JSON document: series id, length, window, threshold, mean, std and one
// record per pruned sequence (start, end, max_score, timestamps when known).
void write_report(const std::filesystem::path& path, const DetectionReport& report);

struct ReportSummary {
    std::string series_id;
    std::size_t length = 0;
    double threshold = 0.0;
    double mean = 0.0;
    double std = 0.0;
    std::vector<AnomalySequence> sequences;
};
ReportSummary read_report(const std::filesystem::path& path);

}  // namespace tsad
