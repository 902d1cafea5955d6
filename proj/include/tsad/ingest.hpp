#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tsad {

// Half-open index interval [start, end).
struct IndexRange {
    std::int64_t start = 0;
    std::int64_t end = 0;

    std::int64_t length() const { return end - start; }
    bool overlaps(const IndexRange& other) const {
        return start < other.end && other.start < end;
    }
    friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

// Univariate series. Missing observations are stored as NaN until imputed.
struct TimeSeries {
    std::string id;
    std::vector<double> values;
    std::optional<std::vector<std::int64_t>> timestamps;  // seconds, strictly increasing
    std::vector<IndexRange> label_ranges;                  // sorted, non-overlapping

    std::size_t size() const { return values.size(); }
    bool has_missing() const;
};

struct StandardizationParams {
    double mean = 0.0;
    double std = 1.0;

    double apply(double x) const { return (x - mean) / std; }
    double invert(double z) const { return z * std + mean; }
};

enum class SeriesFormat { nab, nasa, generic_csv };
enum class ImputePolicy { linear, ffill };

SeriesFormat parse_series_format(const std::string& name);
std::string to_string(SeriesFormat format);
ImputePolicy parse_impute_policy(const std::string& name);
std::string to_string(ImputePolicy policy);

// Reads one series file. Missing fields (empty or "NaN") become NaN.
// The series id defaults to the file stem.
TimeSeries load_series(const std::filesystem::path& path, SeriesFormat format);

// Label files. Each returns a map from series key to index ranges.
//   index_labels: JSON object {"<id>": [[start, end], ...]}, half-open indices.
//   nab_labels:   JSON object {"<relative path>": [[start_ts, end_ts], ...]}, timestamps
//                 converted by timestamp match against `series`.
//   nasa_labels:  CSV rows `series_id,start_index,end_index`, inclusive end.
using LabelMap = std::map<std::string, std::vector<IndexRange>>;
LabelMap load_index_labels(const std::filesystem::path& path);
void save_index_labels(const std::filesystem::path& path, const LabelMap& labels);
LabelMap load_nasa_labels(const std::filesystem::path& path);
std::vector<IndexRange> nab_windows_to_ranges(
    const std::vector<std::pair<std::int64_t, std::int64_t>>& windows,
    const std::vector<std::int64_t>& timestamps);
std::map<std::string, std::vector<std::pair<std::int64_t, std::int64_t>>> load_nab_windows(
    const std::filesystem::path& path);

// Sorts, validates against [0, length) and attaches ranges to the series.
void attach_labels(TimeSeries& series, std::vector<IndexRange> ranges);

// Parses "YYYY-MM-DD HH:MM:SS[.ffffff]" (UTC) or a plain integer into epoch seconds.
std::int64_t parse_timestamp(const std::string& text);

TimeSeries impute_missing(const TimeSeries& series, ImputePolicy policy);

// Per-series z-score. A constant series gets std = 1.
std::pair<TimeSeries, StandardizationParams> standardize(const TimeSeries& series);
std::vector<double> invert_standardization(const std::vector<double>& values,
                                           const StandardizationParams& params);

void write_generic_csv(const std::filesystem::path& path, const TimeSeries& series);

}  // namespace tsad
