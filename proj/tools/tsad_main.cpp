#include "tsad/config.hpp"
#include "tsad/error.hpp"
#include "tsad/runner.hpp"
#include "tsad/synth.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>

namespace {

struct ConfigFlags {
    std::string config_file;
    std::map<std::string, std::string> values;
};

// --config FILE plus one --section.key flag per config key.
void add_config_flags(CLI::App& cmd, ConfigFlags& flags) {
    cmd.add_option("--config", flags.config_file, "INI config file (flags override it)")->check(CLI::ExistingFile);
    const auto defaults = tsad::config_values(tsad::RunConfig{});
    for (const auto& key : tsad::config_keys()) {
        auto* opt = cmd.add_option_function<std::string>(
            "--" + key, [&flags, key](const std::string& v) { flags.values[key] = v; }, "default: " + defaults.at(key));
        opt->type_name("VALUE");
    }
}

tsad::RunConfig resolve(const ConfigFlags& flags) {
    tsad::RunConfig cfg;
    if (!flags.config_file.empty()) cfg = tsad::load_config(flags.config_file, cfg);
    return tsad::apply_overrides(cfg, flags.values);
}

std::optional<tsad::ModelKind> stub_kind(const std::string& name) {
    if (name.empty()) return std::nullopt;
    const auto kind = tsad::parse_model_kind(name);
    if (kind == tsad::ModelKind::hvae) throw tsad::ConfigError("--stub takes identity or zero");
    return kind;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Window-image VAE anomaly detector for univariate time series"};
    app.require_subcommand(1);

    ConfigFlags train_flags, detect_flags, eval_flags, bench_flags;
    bool resume = false;
    std::string stub;

    auto* train = app.add_subcommand("train", "train one model per series");
    add_config_flags(*train, train_flags);
    train->add_flag("--resume", resume, "skip series whose checkpoint exists");
    train->add_option("--stub", stub, "write identity/zero stub checkpoints instead of training");

    auto* detect = app.add_subcommand("detect", "score series with their checkpoints and write reports");
    add_config_flags(*detect, detect_flags);

    auto* evaluate = app.add_subcommand("evaluate", "overlap F1 of the reports against labels");
    add_config_flags(*evaluate, eval_flags);

    auto* bench = app.add_subcommand("benchmark", "train, detect and evaluate a dataset directory");
    add_config_flags(*bench, bench_flags);
    bench->add_flag("--resume", resume, "skip series whose checkpoint exists");
    bench->add_option("--stub", stub, "use identity/zero stubs instead of training");

    tsad::CorpusSpec corpus;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "write a labelled synthetic corpus");
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--count", corpus.series_count, "number of series")->capture_default_str();
    synth->add_option("--length", corpus.length, "series length")->capture_default_str();
    synth->add_option("--period", corpus.period, "sine period in steps")->capture_default_str();
    synth->add_option("--noise", corpus.noise_std, "noise standard deviation")->capture_default_str();
    synth->add_option("--spikes", corpus.spikes, "spikes per series")->capture_default_str();
    synth->add_option("--magnitude-min", corpus.magnitude_min, "smallest spike, in magnitude units")->capture_default_str();
    synth->add_option("--magnitude-max", corpus.magnitude_max, "largest spike, in magnitude units")->capture_default_str();
    synth->add_option("--magnitude-unit", corpus.magnitude_unit, "absolute size of one unit (0: the noise std)")
        ->capture_default_str();
    synth->add_option("--seed", corpus.seed, "corpus seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? tsad::exit_ok : tsad::exit_usage;
    }

    try {
        if (*synth) {
            std::vector<tsad::TimeSeries> series;
            for (const auto& spec : tsad::corpus_specs(corpus)) series.push_back(tsad::generate(spec));
            tsad::write_corpus(synth_out, series);
            std::cerr << "wrote " << series.size() << " series to " << synth_out << "\n";
            return tsad::exit_ok;
        }
        tsad::CommandResult result;
        if (*train) {
            result = tsad::run_train(resolve(train_flags), {resume, stub_kind(stub)}, std::cerr);
        } else if (*detect) {
            result = tsad::run_detect(resolve(detect_flags), std::cerr);
        } else if (*evaluate) {
            result = tsad::run_evaluate(resolve(eval_flags), std::cerr);
        } else if (*bench) {
            result = tsad::run_benchmark(resolve(bench_flags), {resume, stub_kind(stub)}, std::cerr);
        }
        return result.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return tsad::exit_code_for(e);
    }
}
