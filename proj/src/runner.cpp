#include "tsad/runner.hpp"

#include "tsad/error.hpp"
#include "tsad/train.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <ostream>

namespace tsad {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const NumericError*>(&e)) return exit_numeric;
    if (dynamic_cast<const ConfigError*>(&e)) return exit_usage;
    return exit_data;
}

int CommandResult::exit_code() const {
    for (const auto& s : series)
        if (s.exit_code != exit_ok) return s.exit_code;
    return exit_ok;
}

std::vector<SeriesEntry> discover_series(const fs::path& data_path) {
    std::vector<SeriesEntry> out;
    if (data_path.empty()) throw ConfigError("data.path is not set");
    if (fs::is_regular_file(data_path)) {
        out.push_back({"", data_path.stem().string(), data_path});
        return out;
    }
    if (!fs::is_directory(data_path)) throw InvalidInput("data path " + data_path.string() + " does not exist");
    auto scan = [&](const fs::path& dir, const std::string& sub) {
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file() && e.path().extension() == ".csv")
                out.push_back({sub, e.path().stem().string(), e.path()});
    };
    const std::string top = fs::absolute(data_path).lexically_normal().filename().string();
    scan(data_path, top.empty() ? fs::absolute(data_path).parent_path().filename().string() : top);
    for (const auto& e : fs::directory_iterator(data_path))
        if (e.is_directory()) scan(e.path(), e.path().filename().string());
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.key() < b.key(); });
    if (out.empty()) throw InvalidInput("no .csv series under " + data_path.string());
    return out;
}

fs::path series_dir(const RunConfig& cfg, const SeriesEntry& entry) {
    return entry.sub_dataset.empty() ? cfg.output / entry.id : cfg.output / entry.sub_dataset / entry.id;
}

LabelSource::LabelSource(const RunConfig& cfg) : format_(cfg.label_format) {
    fs::path path = cfg.labels_path;
    if (format_ == LabelFormat::none && path.empty() && !cfg.data_path.empty()) {
        const fs::path dir = fs::is_directory(cfg.data_path) ? cfg.data_path : cfg.data_path.parent_path();
        if (fs::exists(dir / "labels.json")) {
            path = dir / "labels.json";
            format_ = LabelFormat::index;
        }
    }
    if (format_ == LabelFormat::none) return;
    if (path.empty()) throw ConfigError("data.labels_format is " + to_string(format_) + " but data.labels is not set");
    switch (format_) {
        case LabelFormat::index: index_ = load_index_labels(path); break;
        case LabelFormat::nasa: index_ = load_nasa_labels(path); break;
        case LabelFormat::nab: nab_ = load_nab_windows(path); break;
        case LabelFormat::none: break;
    }
}

std::vector<IndexRange> LabelSource::lookup(const SeriesEntry& entry, const TimeSeries& series) const {
    if (format_ == LabelFormat::nab) {
        const std::string key = entry.sub_dataset + "/" + entry.file.filename().string();
        const auto it = nab_.find(key);
        if (it == nab_.end()) throw InvalidInput("no labels for " + key);
        if (!series.timestamps) throw InvalidInput(entry.key() + ": NAB labels need timestamps");
        return nab_windows_to_ranges(it->second, *series.timestamps);
    }
    for (const auto& key : {entry.key(), entry.id}) {
        const auto it = index_.find(key);
        if (it != index_.end()) return it->second;
    }
    throw InvalidInput("no labels for " + entry.key());
}

namespace {

template <class F>
void guarded(CommandResult& result, const SeriesEntry& entry, std::ostream& log, F&& body) {
    SeriesStatus status;
    status.key = entry.key();
    try {
        status.status = body(status);
    } catch (const std::exception& e) {
        status.status = "failed";
        status.error = e.what();
        status.exit_code = exit_code_for(e);
        log << "[" << result.command << "] " << entry.key() << ": " << e.what() << std::endl;
    }
    result.series.push_back(std::move(status));
}

StandardizationParams standardization_of(const TimeSeries& series, ImputePolicy policy) {
    return standardize(series.has_missing() ? impute_missing(series, policy) : series).second;
}

TimeSeries load_entry(const RunConfig& cfg, const SeriesEntry& entry) {
    auto s = load_series(entry.file, cfg.format);
    s.id = entry.id;
    return s;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

CommandResult run_train(const RunConfig& cfg, const TrainOptions& options, std::ostream& log) {
    cfg.validate();
    CommandResult result{"train", {}, {}};
    const auto entries = discover_series(cfg.data_path);
    save_config(cfg.output / "config.ini", cfg);
    for (const auto& entry : entries) {
        guarded(result, entry, log, [&](SeriesStatus&) -> std::string {
            const fs::path dir = series_dir(cfg, entry);
            const fs::path ckpt = dir / "model.ckpt";
            if (options.resume && fs::exists(ckpt)) {
                log << "[train] " << entry.key() << ": checkpoint exists, skipped" << std::endl;
                return "skipped";
            }
            const auto series = load_entry(cfg, entry);
            fs::create_directories(dir);
            if (options.stub) {
                if (series.size() < static_cast<std::size_t>(cfg.window))
                    throw InvalidInput(entry.key() + " is shorter than one window");
                save_stub_checkpoint(ckpt, entry.key(), *options.stub, cfg.window,
                                     standardization_of(series, cfg.impute));
                return "ok";
            }
            const auto t0 = std::chrono::steady_clock::now();
            std::ofstream tsv(dir / "train_log.tsv");
            tsv << TrainingLog::header() << '\n';
            const auto std_params = standardization_of(series, cfg.impute);
            auto hook = [&](const EpochRecord& r, const HierarchicalVae<float>& model) {
                tsv << TrainingLog::format(r) << std::endl;
                log << "[train] " << entry.key() << " " << TrainingLog::format(r) << "\t" << seconds_since(t0) << "s"
                    << std::endl;
                if (cfg.checkpoint_every > 0 && r.epoch % cfg.checkpoint_every == 0 && r.epoch < cfg.train.epoch)
                    save_checkpoint(dir / ("model_epoch" + std::to_string(r.epoch) + ".ckpt"), entry.key(), model,
                                    std_params);
            };
            auto fitted = fit(series, cfg.effective_train(), cfg.effective_arch(), cfg.impute, hook, cfg.step);
            save_checkpoint(ckpt, entry.key(), fitted.model, fitted.standardization);
            return "ok";
        });
    }
    update_manifest(cfg, result);
    return result;
}

CommandResult run_detect(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    CommandResult result{"detect", {}, {}};
    const auto entries = discover_series(cfg.data_path);
    const auto dc = cfg.detect_config();
    for (const auto& entry : entries) {
        guarded(result, entry, log, [&](SeriesStatus&) -> std::string {
            const fs::path dir = series_dir(cfg, entry);
            const fs::path ckpt = dir / "model.ckpt";
            if (!fs::exists(ckpt)) throw InvalidInput("missing checkpoint " + ckpt.string());
            const auto ck = load_checkpoint(ckpt);
            if (ck.window != cfg.window)
                throw InvalidInput(ckpt.string() + " was trained with window " + std::to_string(ck.window) +
                                   ", config says " + std::to_string(cfg.window));
            const auto series = load_entry(cfg, entry);
            const auto rec = ck.reconstructor(dc.sample_posterior, dc.seed);
            const auto report = detect(*rec, series, dc, ck.standardization);
            write_report(dir / "report.json", report);
            std::ofstream scores(dir / "scores.tsv");
            scores << "step\tscore\n";
            scores.precision(10);
            for (std::size_t i = 0; i < report.scores.scores.size(); ++i)
                scores << report.scores.range.first + static_cast<std::int64_t>(i) << '\t' << report.scores.scores[i]
                       << '\n';
            log << "[detect] " << entry.key() << ": " << report.sequences_pruned.size() << " sequence(s)" << std::endl;
            return "ok";
        });
    }
    update_manifest(cfg, result);
    return result;
}

CommandResult run_evaluate(const RunConfig& cfg, std::ostream& log) {
    CommandResult result{"evaluate", {}, {}};
    const auto entries = discover_series(cfg.data_path);
    const LabelSource labels(cfg);
    if (!labels.available()) throw ConfigError("evaluate needs labels (data.labels / data.labels_format)");
    std::vector<std::string> missing;
    for (const auto& entry : entries)
        if (!fs::exists(series_dir(cfg, entry) / "report.json")) missing.push_back(entry.key());
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
        throw InvalidInput("no detection report for: " + list);
    }
    std::map<std::string, std::vector<SeriesResult>> per_sub;
    for (const auto& entry : entries) {
        guarded(result, entry, log, [&](SeriesStatus& status) -> std::string {
            const auto report = read_report(series_dir(cfg, entry) / "report.json");
            const auto series = load_entry(cfg, entry);
            const auto truth = labels.lookup(entry, series);
            std::vector<IndexRange> predicted;
            for (const auto& s : report.sequences) predicted.push_back(s.range());
            SeriesResult r{entry.key(), overlap_counts(predicted, truth), 0.0};
            r.f1 = f1(r.counts);
            status.f1 = r.f1;
            per_sub[entry.sub_dataset.empty() ? "all" : entry.sub_dataset].push_back(r);
            return "ok";
        });
    }
    if (result.exit_code() == exit_ok) {
        result.evaluation = aggregate(per_sub);
        fs::create_directories(cfg.output);
        std::ofstream table(cfg.output / "eval.tsv");
        write_table(table, *result.evaluation);
        write_eval_json(cfg.output / "eval.json", *result.evaluation);
        write_table(log, *result.evaluation);
    }
    update_manifest(cfg, result);
    return result;
}

CommandResult run_benchmark(const RunConfig& cfg, const TrainOptions& options, std::ostream& log) {
    auto train = run_train(cfg, options, log);
    auto det = run_detect(cfg, log);
    CommandResult result{"benchmark", {}, {}};
    // Evaluate what made it through; failed series count as F1 = 0 in the manifest only.
    std::map<std::string, std::vector<SeriesResult>> per_sub;
    const auto entries = discover_series(cfg.data_path);
    const LabelSource labels(cfg);
    if (!labels.available()) throw ConfigError("benchmark needs labels (data.labels / data.labels_format)");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& entry = entries[i];
        const bool trained = train.series[i].status != "failed";
        const bool detected = det.series[i].status != "failed";
        if (!trained || !detected) {
            const auto& bad = trained ? det.series[i] : train.series[i];
            result.series.push_back(bad);
            continue;
        }
        guarded(result, entry, log, [&](SeriesStatus& status) -> std::string {
            const auto report = read_report(series_dir(cfg, entry) / "report.json");
            const auto series = load_entry(cfg, entry);
            std::vector<IndexRange> predicted;
            for (const auto& s : report.sequences) predicted.push_back(s.range());
            SeriesResult r{entry.key(), overlap_counts(predicted, labels.lookup(entry, series)), 0.0};
            r.f1 = f1(r.counts);
            status.f1 = r.f1;
            per_sub[entry.sub_dataset.empty() ? "all" : entry.sub_dataset].push_back(r);
            return "ok";
        });
    }
    if (!per_sub.empty()) {
        result.evaluation = aggregate(per_sub);
        std::ofstream table(cfg.output / "eval.tsv");
        write_table(table, *result.evaluation);
        write_eval_json(cfg.output / "eval.json", *result.evaluation);
        write_table(log, *result.evaluation);
    }
    update_manifest(cfg, result);
    return result;
}

void update_manifest(const RunConfig& cfg, const CommandResult& result) {
    const fs::path path = cfg.output / "manifest.json";
    json doc = json::object();
    if (fs::exists(path)) {
        std::ifstream in(path);
        doc = json::parse(in, nullptr, false);
        if (doc.is_discarded() || !doc.is_object()) doc = json::object();
    }
    doc["config"] = "config.ini";
    json series = json::array();
    for (const auto& s : result.series) {
        json item{{"series", s.key}, {"status", s.status}};
        if (!s.error.empty()) item["error"] = s.error;
        if (s.exit_code != exit_ok) item["exit_code"] = s.exit_code;
        if (s.f1) item["f1"] = *s.f1;
        series.push_back(std::move(item));
    }
    json entry{{"series", std::move(series)}, {"exit_code", result.exit_code()}};
    if (result.evaluation) entry["dataset_mean_f1"] = result.evaluation->dataset_mean_f1;
    doc["commands"][result.command] = std::move(entry);
    fs::create_directories(cfg.output);
    std::ofstream out(path);
    out << doc.dump(2) << "\n";
}

}  // namespace tsad
