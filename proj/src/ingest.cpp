#include "tsad/ingest.hpp"

#include "tsad/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace tsad {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n\"");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n\"");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(trim(field));
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

bool is_missing_field(const std::string& f) {
    return f.empty() || lower(f) == "nan";
}

std::string where(const fs::path& path, std::size_t line_no) {
    return path.string() + ":" + std::to_string(line_no);
}

double parse_value(const std::string& field, const fs::path& path, std::size_t line_no) {
    if (is_missing_field(field)) return kMissing;
    double v = 0.0;
    const auto* begin = field.data();
    const auto* end = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v))
        throw FormatError(where(path, line_no) + ": cannot parse value '" + field + "'");
    return v;
}

bool looks_numeric(const std::string& field) {
    if (is_missing_field(field)) return true;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    return ec == std::errc() && ptr == field.data() + field.size();
}

std::ifstream open_or_throw(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open " + path.string());
    return in;
}

// Reads `timestamp,value` or `value` rows. A header row is detected by a
// non-numeric value column.
TimeSeries read_columns(const fs::path& path, bool timestamps_required) {
    auto in = open_or_throw(path);
    TimeSeries series;
    series.id = path.stem().string();
    std::vector<std::int64_t> stamps;
    std::string line;
    std::size_t line_no = 0;
    int value_col = -1;
    int ts_col = -1;
    std::size_t expected_fields = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line);
        if (value_col < 0) {
            // first non-empty line decides the layout
            const bool header = !std::all_of(fields.begin(), fields.end(), [](const std::string& f) {
                return looks_numeric(f);
            }) && !(fields.size() == 2 && looks_numeric(fields[1]));
            expected_fields = fields.size();
            if (header) {
                for (std::size_t i = 0; i < fields.size(); ++i) {
                    const auto name = lower(fields[i]);
                    if (name == "value") value_col = static_cast<int>(i);
                    if (name == "timestamp") ts_col = static_cast<int>(i);
                }
                if (value_col < 0) {
                    if (fields.size() == 1) {
                        value_col = 0;
                    } else {
                        throw FormatError(where(path, line_no) + ": header has no 'value' column");
                    }
                }
                if (timestamps_required && ts_col < 0)
                    throw FormatError(where(path, line_no) + ": header has no 'timestamp' column");
                continue;
            }
            if (fields.size() == 1) {
                value_col = 0;
            } else if (fields.size() == 2) {
                ts_col = 0;
                value_col = 1;
            } else {
                throw FormatError(where(path, line_no) + ": expected 1 or 2 columns");
            }
            if (timestamps_required && ts_col < 0)
                throw FormatError(where(path, line_no) + ": missing timestamp column");
        }
        if (fields.size() != expected_fields)
            throw FormatError(where(path, line_no) + ": expected " + std::to_string(expected_fields) +
                              " fields, got " + std::to_string(fields.size()));
        series.values.push_back(parse_value(fields[value_col], path, line_no));
        if (ts_col >= 0) {
            try {
                stamps.push_back(parse_timestamp(fields[ts_col]));
            } catch (const FormatError& e) {
                throw FormatError(where(path, line_no) + ": " + e.what());
            }
            if (stamps.size() > 1 && stamps.back() <= stamps[stamps.size() - 2])
                throw FormatError(where(path, line_no) + ": timestamps not strictly increasing");
        }
    }
    if (series.values.empty()) throw InvalidInput(path.string() + ": empty series");
    if (ts_col >= 0) series.timestamps = std::move(stamps);
    return series;
}

// NASA channel files carry a single value column (optionally headed).
TimeSeries read_single_column(const fs::path& path) {
    auto in = open_or_throw(path);
    TimeSeries series;
    series.id = path.stem().string();
    std::string line;
    std::size_t line_no = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        const auto field = trim(line);
        if (field.empty()) continue;
        if (first && !looks_numeric(field)) {
            first = false;
            continue;
        }
        first = false;
        if (field.find(',') != std::string::npos)
            throw FormatError(where(path, line_no) + ": expected a single value column");
        series.values.push_back(parse_value(field, path, line_no));
    }
    if (series.values.empty()) throw InvalidInput(path.string() + ": empty series");
    return series;
}

}  // namespace

bool TimeSeries::has_missing() const {
    return std::any_of(values.begin(), values.end(), [](double v) { return std::isnan(v); });
}

SeriesFormat parse_series_format(const std::string& name) {
    const auto n = lower(name);
    if (n == "nab") return SeriesFormat::nab;
    if (n == "nasa") return SeriesFormat::nasa;
    if (n == "generic_csv" || n == "generic" || n == "csv") return SeriesFormat::generic_csv;
    throw ConfigError("unknown series format '" + name + "'");
}

std::string to_string(SeriesFormat format) {
    switch (format) {
    case SeriesFormat::nab: return "nab";
    case SeriesFormat::nasa: return "nasa";
    case SeriesFormat::generic_csv: return "generic_csv";
    }
    return "generic_csv";
}

ImputePolicy parse_impute_policy(const std::string& name) {
    const auto n = lower(name);
    if (n == "linear") return ImputePolicy::linear;
    if (n == "ffill") return ImputePolicy::ffill;
    throw ConfigError("unknown impute policy '" + name + "'");
}

std::string to_string(ImputePolicy policy) {
    return policy == ImputePolicy::linear ? "linear" : "ffill";
}

std::int64_t parse_timestamp(const std::string& text) {
    const auto s = trim(text);
    std::int64_t integral = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), integral);
    if (ec == std::errc() && ptr == s.data() + s.size()) return integral;

    std::tm tm{};
    std::istringstream in(s);
    in >> std::get_time(&tm, "%Y-%m-%d %H:%M:%S");
    if (in.fail()) {
        in.clear();
        in.str(s);
        in >> std::get_time(&tm, "%Y-%m-%dT%H:%M:%S");
    }
    if (in.fail()) throw FormatError("cannot parse timestamp '" + s + "'");
    // Fractional seconds, if any, are dropped.
    return static_cast<std::int64_t>(timegm(&tm));
}

TimeSeries load_series(const fs::path& path, SeriesFormat format) {
    if (!fs::exists(path)) throw InvalidInput("no such file: " + path.string());
    switch (format) {
    case SeriesFormat::nab: return read_columns(path, true);
    case SeriesFormat::nasa: return read_single_column(path);
    case SeriesFormat::generic_csv: return read_columns(path, false);
    }
    throw ConfigError("unhandled format");
}

void attach_labels(TimeSeries& series, std::vector<IndexRange> ranges) {
    std::sort(ranges.begin(), ranges.end(),
              [](const IndexRange& a, const IndexRange& b) { return a.start < b.start; });
    const auto length = static_cast<std::int64_t>(series.size());
    for (std::size_t i = 0; i < ranges.size(); ++i) {
        const auto& r = ranges[i];
        if (r.start < 0 || r.end > length || r.start >= r.end)
            throw InvalidInput(series.id + ": label range [" + std::to_string(r.start) + "," +
                               std::to_string(r.end) + ") outside [0," + std::to_string(length) + ")");
        if (i > 0 && ranges[i - 1].end > r.start)
            throw InvalidInput(series.id + ": overlapping label ranges");
    }
    series.label_ranges = std::move(ranges);
}

LabelMap load_index_labels(const fs::path& path) {
    auto in = open_or_throw(path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    if (!doc.is_object()) throw FormatError(path.string() + ": expected a JSON object");
    LabelMap labels;
    for (const auto& [key, windows] : doc.items()) {
        auto& out = labels[key];
        for (const auto& w : windows) {
            if (!w.is_array() || w.size() != 2 || !w[0].is_number_integer() || !w[1].is_number_integer())
                throw FormatError(path.string() + ": label for '" + key + "' is not an [start, end] pair");
            out.push_back({w[0].get<std::int64_t>(), w[1].get<std::int64_t>()});
        }
    }
    return labels;
}

void save_index_labels(const fs::path& path, const LabelMap& labels) {
    json doc = json::object();
    for (const auto& [key, ranges] : labels) {
        json arr = json::array();
        for (const auto& r : ranges) arr.push_back({r.start, r.end});
        doc[key] = std::move(arr);
    }
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot write " + path.string());
    out << doc.dump(2) << "\n";
}

LabelMap load_nasa_labels(const fs::path& path) {
    auto in = open_or_throw(path);
    LabelMap labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 3) throw FormatError(where(path, line_no) + ": expected 3 fields");
        std::int64_t start = 0;
        std::int64_t end = 0;
        const auto parse_int = [&](const std::string& f, std::int64_t& out) {
            auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), out);
            return ec == std::errc() && ptr == f.data() + f.size();
        };
        if (!parse_int(fields[1], start) || !parse_int(fields[2], end)) {
            if (line_no == 1) continue;  // header
            throw FormatError(where(path, line_no) + ": non-integer index");
        }
        // inclusive end on disk
        labels[fields[0]].push_back({start, end + 1});
    }
    return labels;
}

std::map<std::string, std::vector<std::pair<std::int64_t, std::int64_t>>> load_nab_windows(
    const fs::path& path) {
    auto in = open_or_throw(path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    std::map<std::string, std::vector<std::pair<std::int64_t, std::int64_t>>> out;
    for (const auto& [key, windows] : doc.items()) {
        auto& dst = out[key];
        for (const auto& w : windows) {
            if (!w.is_array() || w.size() != 2)
                throw FormatError(path.string() + ": window for '" + key + "' is not a pair");
            const auto stamp = [&](const json& v) {
                return v.is_string() ? parse_timestamp(v.get<std::string>()) : v.get<std::int64_t>();
            };
            dst.emplace_back(stamp(w[0]), stamp(w[1]));
        }
    }
    return out;
}

std::vector<IndexRange> nab_windows_to_ranges(
    const std::vector<std::pair<std::int64_t, std::int64_t>>& windows,
    const std::vector<std::int64_t>& timestamps) {
    std::vector<IndexRange> ranges;
    for (const auto& [t0, t1] : windows) {
        const auto first = std::lower_bound(timestamps.begin(), timestamps.end(), t0);
        const auto last = std::upper_bound(timestamps.begin(), timestamps.end(), t1);
        if (first >= last) continue;  // window falls between samples
        ranges.push_back({first - timestamps.begin(), last - timestamps.begin()});
    }
    return ranges;
}

TimeSeries impute_missing(const TimeSeries& series, ImputePolicy policy) {
    const auto& v = series.values;
    const std::size_t n = v.size();
    std::vector<std::size_t> present;
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isnan(v[i])) present.push_back(i);
    if (present.empty()) throw InvalidInput(series.id + ": every value is missing");

    TimeSeries out = series;
    auto& w = out.values;
    for (std::size_t i = 0; i < present.front(); ++i) w[i] = v[present.front()];
    for (std::size_t i = present.back() + 1; i < n; ++i) w[i] = v[present.back()];
    for (std::size_t p = 1; p < present.size(); ++p) {
        const std::size_t a = present[p - 1];
        const std::size_t b = present[p];
        for (std::size_t i = a + 1; i < b; ++i) {
            if (policy == ImputePolicy::ffill) {
                w[i] = v[a];
            } else {
                const double t = static_cast<double>(i - a) / static_cast<double>(b - a);
                w[i] = v[a] + t * (v[b] - v[a]);
            }
        }
    }
    return out;
}

std::pair<TimeSeries, StandardizationParams> standardize(const TimeSeries& series) {
    if (series.values.empty()) throw InvalidInput(series.id + ": empty series");
    if (series.has_missing()) throw InvalidInput(series.id + ": impute missing values first");
    const double n = static_cast<double>(series.size());
    double mean = 0.0;
    for (double x : series.values) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : series.values) var += (x - mean) * (x - mean);
    var /= n;
    StandardizationParams params{mean, std::sqrt(var)};
    if (!(params.std > 0.0)) params.std = 1.0;

    TimeSeries out = series;
    for (double& x : out.values) x = params.apply(x);
    return {std::move(out), params};
}

std::vector<double> invert_standardization(const std::vector<double>& values,
                                           const StandardizationParams& params) {
    std::vector<double> out(values.size());
    std::transform(values.begin(), values.end(), out.begin(),
                   [&](double z) { return params.invert(z); });
    return out;
}

void write_generic_csv(const fs::path& path, const TimeSeries& series) {
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot write " + path.string());
    out.precision(17);
    if (series.timestamps) {
        out << "timestamp,value\n";
        for (std::size_t i = 0; i < series.size(); ++i)
            out << (*series.timestamps)[i] << "," << series.values[i] << "\n";
    } else {
        out << "value\n";
        for (double v : series.values) out << v << "\n";
    }
}

}  // namespace tsad
