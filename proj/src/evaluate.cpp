#include "tsad/evaluate.hpp"

#include "tsad/error.hpp"

#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <ostream>

namespace tsad {

namespace {

void check_ranges(const std::vector<IndexRange>& ranges, const char* what) {
    for (const auto& r : ranges)
        if (r.start < 0 || r.end <= r.start)
            throw InvalidInput(std::string("overlap_counts: malformed ") + what + " interval [" +
                               std::to_string(r.start) + "," + std::to_string(r.end) + ")");
}

}  // namespace

OverlapCounts overlap_counts(const std::vector<IndexRange>& predicted, const std::vector<IndexRange>& truth) {
    check_ranges(predicted, "predicted");
    check_ranges(truth, "truth");
    OverlapCounts c;
    std::vector<bool> hit(truth.size(), false);
    for (const auto& p : predicted) {
        bool any = false;
        for (std::size_t t = 0; t < truth.size(); ++t) {
            if (p.overlaps(truth[t])) {
                any = true;
                hit[t] = true;
            }
        }
        (any ? c.tp : c.fp) += 1;
    }
    for (bool h : hit)
        if (!h) ++c.fn;
    return c;
}

double f1(const OverlapCounts& c) {
    if (c.tp + c.fp == 0 || c.tp + c.fn == 0) return 0.0;
    const double p = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    const double r = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    if (p + r == 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}

double weighted_mean(const std::vector<std::pair<std::size_t, double>>& count_and_mean) {
    double num = 0.0;
    std::size_t den = 0;
    for (const auto& [n, m] : count_and_mean) {
        if (n == 0) throw InvalidInput("weighted_mean: empty sub-dataset");
        num += static_cast<double>(n) * m;
        den += n;
    }
    if (den == 0) throw InvalidInput("weighted_mean: nothing to aggregate");
    return num / static_cast<double>(den);
}

EvalReport aggregate(const std::map<std::string, std::vector<SeriesResult>>& per_series) {
    if (per_series.empty()) throw InvalidInput("aggregate: no sub-datasets");
    EvalReport report;
    report.series = per_series;
    std::vector<std::pair<std::size_t, double>> weights;
    for (const auto& [name, results] : per_series) {
        if (results.empty()) throw InvalidInput("aggregate: sub-dataset '" + name + "' has no series");
        SubDatasetSummary s;
        s.name = name;
        s.series_count = results.size();
        double sum = 0.0;
        for (const auto& r : results) {
            sum += r.f1;
            s.counts += r.counts;
        }
        s.mean_f1 = sum / static_cast<double>(results.size());
        report.counts += s.counts;
        weights.emplace_back(s.series_count, s.mean_f1);
        report.sub_datasets.push_back(std::move(s));
    }
    report.dataset_mean_f1 = weighted_mean(weights);
    return report;
}

EvalReport aggregate(const std::map<std::string, std::vector<double>>& per_series_f1) {
    std::map<std::string, std::vector<SeriesResult>> m;
    for (const auto& [name, scores] : per_series_f1) {
        auto& v = m[name];
        for (std::size_t i = 0; i < scores.size(); ++i) v.push_back({name + "#" + std::to_string(i), {}, scores[i]});
    }
    return aggregate(m);
}

void write_table(std::ostream& out, const EvalReport& report, const std::string& row_label) {
    out << "method";
    for (const auto& s : report.sub_datasets) out << '\t' << s.name;
    out << "\tmean\n";
    out << row_label << std::fixed << std::setprecision(3);
    for (const auto& s : report.sub_datasets) out << '\t' << s.mean_f1;
    out << '\t' << report.dataset_mean_f1 << '\n';
    out << std::defaultfloat;
}

void write_eval_json(const std::filesystem::path& path, const EvalReport& report) {
    using nlohmann::json;
    auto counts = [](const OverlapCounts& c) { return json{{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}}; };
    json doc;
    doc["dataset_mean_f1"] = report.dataset_mean_f1;
    doc["counts"] = counts(report.counts);
    json subs = json::array();
    for (const auto& s : report.sub_datasets) {
        json series = json::array();
        for (const auto& r : report.series.at(s.name))
            series.push_back({{"series_id", r.series_id}, {"f1", r.f1}, {"counts", counts(r.counts)}});
        subs.push_back({{"name", s.name},
                        {"series_count", s.series_count},
                        {"mean_f1", s.mean_f1},
                        {"counts", counts(s.counts)},
                        {"series", std::move(series)}});
    }
    doc["sub_datasets"] = std::move(subs);
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot write " + path.string());
    out << doc.dump(2) << "\n";
}

}  // namespace tsad
