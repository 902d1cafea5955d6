#pragma once

#include "tsad/hvae.hpp"
#include "tsad/ingest.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tsad {

enum class BaseShape { sine, sawtooth, constant };
// spike, level_shift: add `magnitude` over the interval (a spike is short, a
// shift long; the arithmetic is the same). dropout: the interval is replaced
// by the flat value `magnitude`, without noise.
enum class AnomalyKind { spike, level_shift, dropout };

BaseShape parse_base_shape(const std::string& name);
std::string to_string(BaseShape shape);
AnomalyKind parse_anomaly_kind(const std::string& name);
std::string to_string(AnomalyKind kind);

struct InjectedAnomaly {
    AnomalyKind kind = AnomalyKind::spike;
    std::int64_t position = 0;
    double magnitude = 0.0;
    std::int64_t duration = 1;

    IndexRange range() const { return {position, position + duration}; }
};

struct SynthSpec {
    std::string id = "synthetic";
    std::int64_t length = 2000;
    BaseShape base = BaseShape::sine;
    double period = 100.0;
    double amplitude = 1.0;
    double noise_std = 0.05;
    std::vector<InjectedAnomaly> anomalies;
    std::uint64_t seed = 0;

    void validate() const;
};

// The clean base signal (no noise, no anomalies).
std::vector<double> base_signal(const SynthSpec& spec);

// base + N(0, noise_std) noise + anomalies; label_ranges are exactly the
// injected intervals. Deterministic given spec.seed.
TimeSeries generate(const SynthSpec& spec);

struct CorpusSpec {
    int series_count = 10;
    std::int64_t length = 2000;
    double period = 100.0;
    double noise_std = 0.05;
    int spikes = 3;
    double magnitude_min = 6.0;
    double magnitude_max = 10.0;
    // size of one magnitude unit; 0 means noise_std
    double magnitude_unit = 0.0;
    int duration_min = 1;
    int duration_max = 5;
    // Spikes stay this far from both ends and from each other, so every spike
    // is seen by a full set of windows and their windows do not mix.
    std::int64_t edge_margin = 64;
    std::int64_t min_gap = 128;
    std::uint64_t seed = 7;
};

std::vector<SynthSpec> corpus_specs(const CorpusSpec& corpus);

// Architecture for corpus runs on a desktop CPU: default window and latent
// groups, channels {4,8,8,16,16}, no cell at full resolution.
ArchConfig corpus_arch();

// Writes <dir>/<id>.csv for every series and <dir>/labels.json (index labels).
void write_corpus(const std::filesystem::path& dir, const std::vector<TimeSeries>& series);

}  // namespace tsad
