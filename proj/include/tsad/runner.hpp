#pragma once

// Command implementations behind the CLI. Each command works over the series
// found under RunConfig::data_path and writes everything below
// RunConfig::output:
//
//   <output>/config.ini                effective configuration
//   <output>/manifest.json             per-command, per-series status
//   <output>/<sub>/<id>/model.ckpt     checkpoint (plus model_epochK.ckpt)
//   <output>/<sub>/<id>/train_log.tsv
//   <output>/<sub>/<id>/report.json    detection report
//   <output>/<sub>/<id>/scores.tsv
//   <output>/eval.tsv, eval.json       evaluation tables
//
// <sub> is the sub-dataset (the directory holding the series file below
// data_path); it is omitted when data_path names a single file.

#include "tsad/checkpoint.hpp"
#include "tsad/config.hpp"
#include "tsad/evaluate.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace tsad {

enum ExitCode { exit_ok = 0, exit_usage = 1, exit_data = 2, exit_numeric = 3 };

// Maps an exception to the exit-code contract.
int exit_code_for(const std::exception& e);

struct SeriesEntry {
    std::string sub_dataset;  // empty for a single-file run
    std::string id;           // file stem
    std::filesystem::path file;

    std::string key() const { return sub_dataset.empty() ? id : sub_dataset + "/" + id; }
};

// A file yields one entry. A directory yields its *.csv files (sub-dataset =
// the directory name) and those of its immediate subdirectories (sub-dataset
// = subdirectory name), sorted by key.
std::vector<SeriesEntry> discover_series(const std::filesystem::path& data_path);

std::filesystem::path series_dir(const RunConfig& cfg, const SeriesEntry& entry);

// Ground truth per series. With label_format none and no labels path, a
// labels.json next to the data (as written by `synth`) is used if present.
class LabelSource {
public:
    explicit LabelSource(const RunConfig& cfg);
    bool available() const { return format_ != LabelFormat::none; }
    // Throws InvalidInput when the series has no entry.
    std::vector<IndexRange> lookup(const SeriesEntry& entry, const TimeSeries& series) const;

private:
    LabelFormat format_ = LabelFormat::none;
    LabelMap index_;
    std::map<std::string, std::vector<std::pair<std::int64_t, std::int64_t>>> nab_;
};

struct SeriesStatus {
    std::string key;
    std::string status;  // ok, skipped, failed
    std::string error;
    int exit_code = exit_ok;
    std::optional<double> f1;
};

struct CommandResult {
    std::string command;
    std::vector<SeriesStatus> series;
    std::optional<EvalReport> evaluation;

    int exit_code() const;
};

struct TrainOptions {
    bool resume = false;
    std::optional<ModelKind> stub;  // write stub checkpoints instead of training
};

CommandResult run_train(const RunConfig& cfg, const TrainOptions& options, std::ostream& log);
CommandResult run_detect(const RunConfig& cfg, std::ostream& log);
CommandResult run_evaluate(const RunConfig& cfg, std::ostream& log);
// train (honouring resume) -> detect -> evaluate.
CommandResult run_benchmark(const RunConfig& cfg, const TrainOptions& options, std::ostream& log);

// Merges `result` into <output>/manifest.json.
void update_manifest(const RunConfig& cfg, const CommandResult& result);

}  // namespace tsad
