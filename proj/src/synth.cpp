#include "tsad/synth.hpp"

#include "tsad/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace tsad {

namespace fs = std::filesystem;

BaseShape parse_base_shape(const std::string& name) {
    if (name == "sine") return BaseShape::sine;
    if (name == "sawtooth") return BaseShape::sawtooth;
    if (name == "constant") return BaseShape::constant;
    throw ConfigError("unknown base shape '" + name + "' (sine, sawtooth, constant)");
}

std::string to_string(BaseShape shape) {
    switch (shape) {
        case BaseShape::sine: return "sine";
        case BaseShape::sawtooth: return "sawtooth";
        case BaseShape::constant: return "constant";
    }
    return "?";
}

AnomalyKind parse_anomaly_kind(const std::string& name) {
    if (name == "spike") return AnomalyKind::spike;
    if (name == "level_shift") return AnomalyKind::level_shift;
    if (name == "dropout") return AnomalyKind::dropout;
    throw ConfigError("unknown anomaly kind '" + name + "' (spike, level_shift, dropout)");
}

std::string to_string(AnomalyKind kind) {
    switch (kind) {
        case AnomalyKind::spike: return "spike";
        case AnomalyKind::level_shift: return "level_shift";
        case AnomalyKind::dropout: return "dropout";
    }
    return "?";
}

void SynthSpec::validate() const {
    if (length <= 0) throw InvalidInput("synth: length must be positive");
    if (base != BaseShape::constant && !(period > 0.0)) throw InvalidInput("synth: period must be positive");
    if (!(noise_std >= 0.0)) throw InvalidInput("synth: noise_std must be >= 0");
    std::vector<IndexRange> ranges;
    for (const auto& a : anomalies) {
        if (a.duration < 1) throw InvalidInput("synth: anomaly duration must be >= 1");
        if (a.position < 0 || a.position + a.duration > length)
            throw InvalidInput("synth: anomaly [" + std::to_string(a.position) + "," +
                               std::to_string(a.position + a.duration) + ") outside [0," + std::to_string(length) + ")");
        if (a.kind != AnomalyKind::dropout && a.magnitude == 0.0)
            throw InvalidInput("synth: zero-magnitude anomaly at " + std::to_string(a.position));
        ranges.push_back(a.range());
    }
    std::sort(ranges.begin(), ranges.end(), [](const auto& x, const auto& y) { return x.start < y.start; });
    for (std::size_t i = 1; i < ranges.size(); ++i)
        if (ranges[i - 1].overlaps(ranges[i]))
            throw InvalidInput("synth: anomalies at " + std::to_string(ranges[i - 1].start) + " and " +
                               std::to_string(ranges[i].start) + " overlap");
}

std::vector<double> base_signal(const SynthSpec& spec) {
    std::vector<double> v(static_cast<std::size_t>(spec.length));
    for (std::size_t t = 0; t < v.size(); ++t) {
        const double phase = static_cast<double>(t) / spec.period;
        switch (spec.base) {
            case BaseShape::sine: v[t] = spec.amplitude * std::sin(2.0 * std::numbers::pi * phase); break;
            case BaseShape::sawtooth: v[t] = spec.amplitude * (2.0 * (phase - std::floor(phase)) - 1.0); break;
            case BaseShape::constant: v[t] = spec.amplitude; break;
        }
    }
    return v;
}

TimeSeries generate(const SynthSpec& spec) {
    spec.validate();
    const auto base = base_signal(spec);
    TimeSeries s;
    s.id = spec.id;
    s.values = base;
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    if (spec.noise_std > 0.0)
        for (double& v : s.values) v += spec.noise_std * noise(rng);
    for (const auto& a : spec.anomalies) {
        bool differs = false;
        for (std::int64_t t = a.position; t < a.position + a.duration; ++t) {
            auto& v = s.values[static_cast<std::size_t>(t)];
            if (a.kind == AnomalyKind::dropout) {
                v = a.magnitude;
                differs = differs || v != base[static_cast<std::size_t>(t)];
            } else {
                v += a.magnitude;
                differs = true;
            }
        }
        if (!differs)
            throw InvalidInput("synth: dropout at " + std::to_string(a.position) + " coincides with the base signal");
        s.label_ranges.push_back(a.range());
    }
    std::sort(s.label_ranges.begin(), s.label_ranges.end(),
              [](const auto& x, const auto& y) { return x.start < y.start; });
    return s;
}

std::vector<SynthSpec> corpus_specs(const CorpusSpec& c) {
    if (c.series_count < 1 || c.spikes < 0) throw InvalidInput("corpus: bad series or spike count");
    if (c.duration_min < 1 || c.duration_max < c.duration_min) throw InvalidInput("corpus: bad duration range");
    if (c.magnitude_max < c.magnitude_min || c.magnitude_min <= 0.0) throw InvalidInput("corpus: bad magnitude range");
    if (c.magnitude_unit < 0.0) throw InvalidInput("corpus: negative magnitude unit");
    const double unit = c.magnitude_unit > 0.0 ? c.magnitude_unit : c.noise_std;
    if (!(unit > 0.0)) throw InvalidInput("corpus: magnitude unit is zero (set noise or an explicit unit)");
    const std::int64_t lo = c.edge_margin;
    const std::int64_t hi = c.length - c.edge_margin - c.duration_max;
    if (hi <= lo) throw InvalidInput("corpus: series too short for the edge margin");
    std::vector<SynthSpec> out;
    std::mt19937_64 rng(c.seed);
    for (int i = 0; i < c.series_count; ++i) {
        SynthSpec spec;
        spec.id = "synth_" + std::string(i < 10 ? "0" : "") + std::to_string(i);
        spec.length = c.length;
        spec.period = c.period;
        spec.noise_std = c.noise_std;
        spec.seed = rng();
        std::uniform_int_distribution<std::int64_t> pos(lo, hi);
        std::uniform_int_distribution<int> dur(c.duration_min, c.duration_max);
        std::uniform_real_distribution<double> mag(c.magnitude_min, c.magnitude_max);
        std::bernoulli_distribution sign(0.5);
        for (int attempt = 0; static_cast<int>(spec.anomalies.size()) < c.spikes; ++attempt) {
            if (attempt > 10000) throw InvalidInput("corpus: cannot place spikes with the requested gap");
            const std::int64_t p = pos(rng);
            const bool clear = std::all_of(spec.anomalies.begin(), spec.anomalies.end(), [&](const auto& a) {
                return std::llabs(a.position - p) >= c.min_gap;
            });
            if (!clear) continue;
            InjectedAnomaly a;
            a.kind = AnomalyKind::spike;
            a.position = p;
            a.duration = dur(rng);
            a.magnitude = (sign(rng) ? 1.0 : -1.0) * mag(rng) * unit;
            spec.anomalies.push_back(a);
        }
        std::sort(spec.anomalies.begin(), spec.anomalies.end(),
                  [](const auto& x, const auto& y) { return x.position < y.position; });
        out.push_back(std::move(spec));
    }
    return out;
}

ArchConfig corpus_arch() {
    ArchConfig a;
    a.level_channels = {4, 8, 8, 16, 16};
    a.cells_per_level = {0, 1, 1, 1, 1};
    return a;
}

void write_corpus(const fs::path& dir, const std::vector<TimeSeries>& series) {
    fs::create_directories(dir);
    LabelMap labels;
    for (const auto& s : series) {
        write_generic_csv(dir / (s.id + ".csv"), s);
        labels[s.id] = s.label_ranges;
    }
    save_index_labels(dir / "labels.json", labels);
}

}  // namespace tsad
