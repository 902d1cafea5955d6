#pragma once

#include "tsad/ingest.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace tsad {

struct OverlapCounts {
    long tp = 0;
    long fp = 0;
    long fn = 0;

    OverlapCounts& operator+=(const OverlapCounts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
    friend bool operator==(const OverlapCounts&, const OverlapCounts&) = default;
};

// tp counts predicted sequences touching any truth, fp the ones touching none,
// fn the truths touched by no prediction.
OverlapCounts overlap_counts(const std::vector<IndexRange>& predicted, const std::vector<IndexRange>& truth);

// 0 when any denominator vanishes.
double f1(const OverlapCounts& counts);

struct SeriesResult {
    std::string series_id;
    OverlapCounts counts;
    double f1 = 0.0;
};

struct SubDatasetSummary {
    std::string name;
    std::size_t series_count = 0;
    double mean_f1 = 0.0;
    OverlapCounts counts;
};

struct EvalReport {
    std::vector<SubDatasetSummary> sub_datasets;  // in key order
    std::map<std::string, std::vector<SeriesResult>> series;
    double dataset_mean_f1 = 0.0;  // weighted by series count
    OverlapCounts counts;
};

// Sub-dataset mean is the plain mean of its series; the dataset mean weights
// each sub-dataset mean by its series count.
EvalReport aggregate(const std::map<std::string, std::vector<SeriesResult>>& per_series);
EvalReport aggregate(const std::map<std::string, std::vector<double>>& per_series_f1);

// Weighted mean from already averaged sub-datasets: sum(count * mean) / sum(count).
double weighted_mean(const std::vector<std::pair<std::size_t, double>>& count_and_mean);

// Tab-separated: one column per sub-dataset, then the dataset mean.
void write_table(std::ostream& out, const EvalReport& report, const std::string& row_label = "model");
void write_eval_json(const std::filesystem::path& path, const EvalReport& report);

}  // namespace tsad
