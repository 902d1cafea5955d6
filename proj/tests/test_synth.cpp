#include "support.hpp"

#include "tsad/error.hpp"
#include "tsad/synth.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace tsad;

TEST_SUITE("synth") {

TEST_CASE("noise-free spike") {
    SynthSpec spec;
    spec.length = 1000;
    spec.noise_std = 0;
    spec.anomalies = {{AnomalyKind::spike, 500, 8.0, 1}};
    const auto s = generate(spec);
    const auto base = base_signal(spec);
    for (std::size_t t = 0; t < s.size(); ++t) {
        const double clean = std::sin(2 * std::numbers::pi * t / 100.0);
        REQUIRE(base[t] == doctest::Approx(clean).epsilon(1e-12));
        if (t == 500)
            REQUIRE(s.values[t] - base[t] == doctest::Approx(8.0));
        else
            REQUIRE(s.values[t] == base[t]);
    }
    REQUIRE(s.label_ranges.size() == 1);
    CHECK(s.label_ranges[0] == IndexRange{500, 501});
}

TEST_CASE("determinism and seeds") {
    SynthSpec spec;
    spec.seed = 11;
    spec.anomalies = {{AnomalyKind::level_shift, 300, -1.0, 50}};
    CHECK(generate(spec).values == generate(spec).values);
    auto other = spec;
    other.seed = 12;
    CHECK(generate(other).values != generate(spec).values);
}

TEST_CASE("constant base") {
    SynthSpec spec;
    spec.base = BaseShape::constant;
    spec.amplitude = 2.5;
    spec.noise_std = 0;
    spec.length = 64;
    const auto s = generate(spec);
    for (double v : s.values) CHECK(v == 2.5);
    CHECK(s.label_ranges.empty());
}

TEST_CASE("dropout and sawtooth") {
    SynthSpec spec;
    spec.base = BaseShape::sawtooth;
    spec.period = 10;
    spec.length = 40;
    spec.noise_std = 0.3;
    spec.anomalies = {{AnomalyKind::dropout, 5, 0.25, 4}};
    const auto s = generate(spec);
    for (int t = 5; t < 9; ++t) CHECK(s.values[t] == 0.25);
    CHECK(base_signal(spec)[0] == -1.0);
    CHECK(base_signal(spec)[5] == doctest::Approx(0.0));
}

TEST_CASE("invalid specs") {
    SynthSpec spec;
    spec.anomalies = {{AnomalyKind::spike, 100, 1.0, 5}, {AnomalyKind::spike, 104, 1.0, 2}};
    CHECK_THROWS_AS(generate(spec), InvalidInput);
    spec.anomalies = {{AnomalyKind::spike, 1999, 1.0, 2}};
    CHECK_THROWS_AS(generate(spec), InvalidInput);
    spec.anomalies = {{AnomalyKind::spike, 10, 0.0, 1}};
    CHECK_THROWS_AS(generate(spec), InvalidInput);
    // a dropout onto the base value injects nothing
    spec.base = BaseShape::constant;
    spec.anomalies = {{AnomalyKind::dropout, 10, 1.0, 3}};
    CHECK_THROWS_AS(generate(spec), InvalidInput);
}

TEST_CASE("labels are sound") {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> pos(0, 480), dur(1, 9);
    std::uniform_real_distribution<double> mag(0.2, 3);
    for (int trial = 0; trial < 50; ++trial) {
        SynthSpec spec;
        spec.length = 500;
        spec.seed = trial;
        spec.noise_std = 0.1;
        for (int k = 0; k < 3; ++k) {
            const auto a = InjectedAnomaly{AnomalyKind::spike, pos(rng), mag(rng), dur(rng)};
            bool clear = true;
            for (const auto& b : spec.anomalies) clear = clear && !a.range().overlaps(b.range());
            if (clear) spec.anomalies.push_back(a);
        }
        const auto s = generate(spec);
        auto quiet = spec;
        quiet.anomalies.clear();
        const auto base = generate(quiet).values;  // base + the same noise
        std::vector<bool> labelled(s.size(), false);
        for (const auto& r : s.label_ranges) {
            bool differs = false;
            for (auto t = r.start; t < r.end; ++t) {
                labelled[t] = true;
                differs = differs || s.values[t] != base[t];
            }
            REQUIRE(differs);
        }
        for (std::size_t t = 0; t < s.size(); ++t)
            if (!labelled[t]) REQUIRE(s.values[t] == base[t]);
    }
}

TEST_CASE("default corpus") {
    const CorpusSpec c;
    const auto specs = corpus_specs(c);
    REQUIRE(specs.size() == 10);
    for (const auto& spec : specs) {
        CHECK(spec.length == 2000);
        CHECK(spec.period == 100);
        CHECK(spec.noise_std == 0.05);
        REQUIRE(spec.anomalies.size() == 3);
        for (std::size_t i = 0; i < 3; ++i) {
            const auto& a = spec.anomalies[i];
            CHECK(std::abs(a.magnitude) >= 6 * 0.05 - 1e-12);
            CHECK(std::abs(a.magnitude) <= 10 * 0.05 + 1e-12);
            CHECK(a.duration >= 1);
            CHECK(a.duration <= 5);
            CHECK(a.position >= c.edge_margin);
            CHECK(a.position + a.duration <= 2000 - c.edge_margin);
            if (i > 0) CHECK(a.position - spec.anomalies[i - 1].position >= c.min_gap);
        }
    }
    CHECK(corpus_specs(c)[3].seed == specs[3].seed);

    CorpusSpec unit = c;
    unit.magnitude_unit = 1.0;
    const auto big = corpus_specs(unit);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(big[0].anomalies[i].magnitude == doctest::Approx(specs[0].anomalies[i].magnitude / 0.05));

    CorpusSpec silent = c;
    silent.noise_std = 0;
    CHECK_THROWS_AS(corpus_specs(silent), InvalidInput);
    CorpusSpec crowded = c;
    crowded.spikes = 40;
    CHECK_THROWS_AS(corpus_specs(crowded), InvalidInput);
}

TEST_CASE("corpus files load back") {
    testing::TempDir dir("synth");
    CorpusSpec c;
    c.series_count = 2;
    c.length = 800;
    std::vector<TimeSeries> series;
    for (const auto& spec : corpus_specs(c)) series.push_back(generate(spec));
    write_corpus(dir.path(), series);
    const auto labels = load_index_labels(dir / "labels.json");
    for (const auto& s : series) {
        const auto back = load_series(dir / (s.id + ".csv"), SeriesFormat::generic_csv);
        REQUIRE(back.size() == s.size());
        for (std::size_t t = 0; t < s.size(); ++t) REQUIRE(back.values[t] == s.values[t]);
        CHECK(labels.at(s.id) == s.label_ranges);
    }
}

}
