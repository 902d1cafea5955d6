#include "tsad/detect.hpp"

#include "tsad/encode2d.hpp"
#include "tsad/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace tsad {

using nlohmann::json;

VaeReconstructor::VaeReconstructor(const HierarchicalVae<float>& model, bool sample_posterior, std::uint64_t seed)
    : model_(model), sample_(sample_posterior), noise_(sample_posterior ? NoiseSource(seed) : NoiseSource()) {}

std::vector<float> VaeReconstructor::reconstruct(std::span<const float> batch_nhwc, int batch) const {
    ag::NoGradGuard no_grad;
    const auto& arch = model_.arch();
    const int n = arch.window;
    auto x = ag::Var<float>::constant(ag::Shape{batch, arch.in_channels, n, n},
                                      HierarchicalVae<float>::to_nchw(batch_nhwc, batch, n, arch.in_channels));
    const auto out = model_.reconstruct(model_.infer(model_.bottom_up(x), noise_));
    return HierarchicalVae<float>::to_nhwc(out.value(), batch, n, arch.in_channels);
}

ScoreSeries make_score_series(CenterRange range, std::vector<double> scores) {
    ScoreSeries s;
    s.range = range;
    s.scores = std::move(scores);
    if (s.scores.empty()) return s;
    const double n = static_cast<double>(s.scores.size());
    s.mean = std::accumulate(s.scores.begin(), s.scores.end(), 0.0) / n;
    double var = 0.0;
    for (double v : s.scores) var += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(var / n);
    return s;
}

ScoreSeries score_series(const Reconstructor& model, const TimeSeries& series, int window, int batch_size) {
    if (model.window() != window)
        throw InvalidInput("model was built for window " + std::to_string(model.window()) + ", not " +
                           std::to_string(window));
    if (batch_size < 1) throw InvalidInput("batch size must be positive");
    if (series.has_missing()) throw InvalidInput(series.id + ": impute missing values before scoring");
    const auto windows = iter_windows(series, window, 1);
    const std::size_t stride = static_cast<std::size_t>(window) * window * EncodedWindow::kChannels;
    std::vector<double> scores;
    scores.reserve(windows.size());
    std::vector<float> batch;
    for (std::size_t first = 0; first < windows.size(); first += batch_size) {
        const std::size_t count = std::min<std::size_t>(batch_size, windows.size() - first);
        batch.assign(count * stride, 0.0f);
        for (std::size_t i = 0; i < count; ++i) {
            const auto enc = encode_window(windows[first + i]);
            std::transform(enc.tensor.begin(), enc.tensor.end(), batch.begin() + i * stride,
                           [](double v) { return static_cast<float>(v); });
        }
        const auto recon = model.reconstruct(batch, static_cast<int>(count));
        if (recon.size() != batch.size()) throw InvalidInput("reconstruction has the wrong size");
        for (std::size_t i = 0; i < count; ++i)
            scores.push_back(recon_loss(std::span<const float>(batch).subspan(i * stride, stride),
                                        std::span<const float>(recon).subspan(i * stride, stride)));
    }
    return make_score_series(center_range(series.size(), window), std::move(scores));
}

double threshold(const ScoreSeries& scores) {
    if (scores.scores.empty()) throw InvalidInput("threshold: no scores");
    return scores.mean + 2.0 * scores.std;
}

std::vector<AnomalySequence> group_sequences(const std::vector<bool>& flags, std::span<const double> scores,
                                             std::int64_t offset) {
    if (scores.size() != flags.size()) throw InvalidInput("group_sequences: flags and scores differ in length");
    std::vector<AnomalySequence> out;
    const std::size_t n = flags.size();
    for (std::size_t i = 0; i < n;) {
        if (!flags[i]) {
            ++i;
            continue;
        }
        std::size_t j = i;
        double best = scores[i];
        while (j < n && flags[j]) best = std::max(best, scores[j++]);
        out.push_back({offset + static_cast<std::int64_t>(i), offset + static_cast<std::int64_t>(j), best});
        i = j;
    }
    return out;
}

std::vector<AnomalySequence> prune(const std::vector<AnomalySequence>& sequences, double std, double theta,
                                   double lambda) {
    std::vector<std::size_t> order(sequences.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (sequences[a].max_score != sequences[b].max_score)
            return sequences[a].max_score > sequences[b].max_score;
        return sequences[a].start < sequences[b].start;
    });
    std::size_t keep = order.size();
    for (std::size_t rank = 1; rank < order.size(); ++rank) {
        const double prev = sequences[order[rank - 1]].max_score;
        const double cur = sequences[order[rank]].max_score;
        const double top = sequences[order[0]].max_score;
        const double descent = (prev - cur) / cur;
        if (descent < theta && cur < 4.0 * std && cur < lambda * top) {
            keep = rank;
            break;
        }
    }
    std::vector<AnomalySequence> out;
    for (std::size_t rank = 0; rank < keep; ++rank) out.push_back(sequences[order[rank]]);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
    return out;
}

std::vector<IndexRange> DetectionReport::predicted_ranges() const {
    std::vector<IndexRange> out;
    for (const auto& s : sequences_pruned) out.push_back(s.range());
    return out;
}

DetectionReport detect_from_scores(const std::string& series_id, std::size_t length, int window,
                                   ScoreSeries scores, double theta, double lambda) {
    DetectionReport report;
    report.series_id = series_id;
    report.length = length;
    report.window = window;
    report.threshold = threshold(scores);
    std::vector<bool> flags(scores.scores.size());
    for (std::size_t i = 0; i < flags.size(); ++i) flags[i] = scores.scores[i] > report.threshold;
    report.sequences_raw = group_sequences(flags, scores.scores, scores.range.first);
    report.sequences_pruned = prune(report.sequences_raw, scores.std, theta, lambda);
    report.predictions.assign(length, false);
    for (const auto& s : report.sequences_pruned)
        for (std::int64_t k = s.start; k < s.end; ++k) report.predictions[static_cast<std::size_t>(k)] = true;
    report.scores = std::move(scores);
    return report;
}

DetectionReport detect(const Reconstructor& model, const TimeSeries& series, const DetectConfig& cfg,
                       const std::optional<StandardizationParams>& standardization) {
    const TimeSeries clean = series.has_missing() ? impute_missing(series, cfg.impute) : series;
    TimeSeries scaled;
    if (standardization) {
        scaled = clean;
        for (double& v : scaled.values) v = standardization->apply(v);
    } else {
        scaled = standardize(clean).first;
    }
    auto scores = score_series(model, scaled, cfg.window, cfg.batch_size);
    auto report = detect_from_scores(series.id, series.size(), cfg.window, std::move(scores), cfg.theta, cfg.lambda);
    report.timestamps = series.timestamps;
    return report;
}

void write_report(const std::filesystem::path& path, const DetectionReport& report) {
    json doc;
    doc["series_id"] = report.series_id;
    doc["length"] = report.length;
    doc["window"] = report.window;
    doc["threshold"] = report.threshold;
    doc["mean"] = report.scores.mean;
    doc["std"] = report.scores.std;
    doc["scored_first"] = report.scores.range.first;
    doc["scored_last"] = report.scores.range.last;
    doc["raw_sequence_count"] = report.sequences_raw.size();
    json seqs = json::array();
    for (const auto& s : report.sequences_pruned) {
        json item{{"start", s.start}, {"end", s.end}, {"max_score", s.max_score}};
        if (report.timestamps) {
            item["start_timestamp"] = (*report.timestamps)[static_cast<std::size_t>(s.start)];
            item["end_timestamp"] = (*report.timestamps)[static_cast<std::size_t>(s.end - 1)];
        }
        seqs.push_back(std::move(item));
    }
    doc["sequences"] = std::move(seqs);
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot write " + path.string());
    out << doc.dump(2) << "\n";
}

ReportSummary read_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open " + path.string());
    ReportSummary r;
    try {
        const json doc = json::parse(in);
        r.series_id = doc.at("series_id").get<std::string>();
        r.length = doc.at("length").get<std::size_t>();
        r.threshold = doc.at("threshold").get<double>();
        r.mean = doc.at("mean").get<double>();
        r.std = doc.at("std").get<double>();
        for (const auto& s : doc.at("sequences"))
            r.sequences.push_back(
                {s.at("start").get<std::int64_t>(), s.at("end").get<std::int64_t>(), s.at("max_score").get<double>()});
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return r;
}

}  // namespace tsad
