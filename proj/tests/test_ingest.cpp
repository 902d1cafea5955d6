#include "support.hpp"

#include "tsad/error.hpp"
#include "tsad/ingest.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace tsad;

TEST_SUITE("ingest") {

TEST_CASE("generic csv with a value header") {
    testing::TempDir dir("ingest");
    testing::write_text(dir / "s.csv", "value\n1.0\n2.0\n3.0\n");
    const auto s = load_series(dir / "s.csv", SeriesFormat::generic_csv);
    CHECK(s.id == "s");
    CHECK(s.values == std::vector<double>{1, 2, 3});
    CHECK_FALSE(s.timestamps.has_value());
}

TEST_CASE("generic csv with timestamp,value and missing fields") {
    testing::TempDir dir("ingest");
    testing::write_text(dir / "s.csv", "timestamp,value\n10,1.5\n20,\n30,NaN\n40,4\n");
    const auto s = load_series(dir / "s.csv", SeriesFormat::generic_csv);
    REQUIRE(s.size() == 4);
    CHECK(s.values[0] == 1.5);
    CHECK(std::isnan(s.values[1]));
    CHECK(std::isnan(s.values[2]));
    CHECK(s.has_missing());
    CHECK(*s.timestamps == std::vector<std::int64_t>{10, 20, 30, 40});
}

TEST_CASE("headerless single column") {
    testing::TempDir dir("ingest");
    testing::write_text(dir / "s.csv", "5\n6\n");
    CHECK(load_series(dir / "s.csv", SeriesFormat::generic_csv).values == std::vector<double>{5, 6});
}

TEST_CASE("nab adapter keeps every row in order") {
    testing::TempDir dir("ingest");
    std::ostringstream text;
    text << "timestamp,value\n";
    const std::int64_t t0 = parse_timestamp("2014-04-01 00:00:00");
    for (int i = 0; i < 4032; ++i) {
        const std::int64_t t = t0 + 300 * i;
        const int h = static_cast<int>((t % 86400) / 3600), m = static_cast<int>((t % 3600) / 60);
        const int day = 1 + static_cast<int>((t - t0 + 0) / 86400);
        char buf[64];
        std::snprintf(buf, sizeof buf, "2014-04-%02d %02d:%02d:00,%d\n", day, h, m, i);
        text << buf;
    }
    testing::write_text(dir / "art.csv", text.str());
    const auto s = load_series(dir / "art.csv", SeriesFormat::nab);
    CHECK(s.size() == 4032);
    for (int i = 0; i < 4032; ++i) REQUIRE(s.values[i] == i);
    REQUIRE(s.timestamps);
    CHECK(s.timestamps->front() == t0);
    CHECK(s.timestamps->back() == t0 + 300 * 4031);
}

TEST_CASE("nab requires timestamps") {
    testing::TempDir dir("ingest");
    testing::write_text(dir / "s.csv", "value\n1\n2\n");
    CHECK_THROWS_AS(load_series(dir / "s.csv", SeriesFormat::nab), FormatError);
}

TEST_CASE("nasa adapter reads one column") {
    testing::TempDir dir("ingest");
    testing::write_text(dir / "A-1.csv", "0.5\n-0.25\n\n1\n");
    const auto s = load_series(dir / "A-1.csv", SeriesFormat::nasa);
    CHECK(s.id == "A-1");
    CHECK(s.values == std::vector<double>{0.5, -0.25, 1});
    testing::write_text(dir / "bad.csv", "1\n2,3\n");
    CHECK_THROWS_AS(load_series(dir / "bad.csv", SeriesFormat::nasa), FormatError);
}

TEST_CASE("parse errors name the line") {
    testing::TempDir dir("ingest");
    testing::write_text(dir / "s.csv", "value\n1\nabc\n");
    try {
        load_series(dir / "s.csv", SeriesFormat::generic_csv);
        FAIL("expected a format error");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }
    testing::write_text(dir / "t.csv", "timestamp,value\n5,1\n5,2\n");
    CHECK_THROWS_AS(load_series(dir / "t.csv", SeriesFormat::generic_csv), FormatError);
}

TEST_CASE("empty or missing file") {
    testing::TempDir dir("ingest");
    testing::write_text(dir / "e.csv", "value\n");
    CHECK_THROWS_AS(load_series(dir / "e.csv", SeriesFormat::generic_csv), InvalidInput);
    CHECK_THROWS_AS(load_series(dir / "nope.csv", SeriesFormat::generic_csv), InvalidInput);
}

TEST_CASE("label files") {
    testing::TempDir dir("ingest");
    SUBCASE("index labels pass through") {
        testing::write_text(dir / "l.json", R"({"s": [[100, 120]]})");
        const auto labels = load_index_labels(dir / "l.json");
        REQUIRE(labels.at("s").size() == 1);
        CHECK(labels.at("s")[0] == IndexRange{100, 120});
        LabelMap round{{"a", {{1, 2}, {5, 9}}}};
        save_index_labels(dir / "r.json", round);
        CHECK(load_index_labels(dir / "r.json") == round);
    }
    SUBCASE("nasa labels turn the inclusive end exclusive") {
        testing::write_text(dir / "l.csv", "series_id,start_index,end_index\nA-1,10,19\nA-1,40,40\n");
        const auto labels = load_nasa_labels(dir / "l.csv");
        CHECK(labels.at("A-1") == std::vector<IndexRange>{{10, 20}, {40, 41}});
    }
    SUBCASE("nab windows map by timestamp") {
        testing::write_text(dir / "l.json",
                            R"({"art/a.csv": [["1970-01-01 00:00:20", "1970-01-01 00:00:40"], [55, 57]]})");
        const auto windows = load_nab_windows(dir / "l.json");
        const std::vector<std::int64_t> stamps{0, 10, 20, 30, 40, 50, 60};
        CHECK(nab_windows_to_ranges(windows.at("art/a.csv"), stamps) == std::vector<IndexRange>{{2, 5}});
    }
}

TEST_CASE("attach_labels validates") {
    TimeSeries s;
    s.values.assign(10, 0.0);
    attach_labels(s, {{5, 7}, {0, 2}});
    CHECK(s.label_ranges == std::vector<IndexRange>{{0, 2}, {5, 7}});
    CHECK_THROWS_AS(attach_labels(s, {{5, 11}}), InvalidInput);
    CHECK_THROWS_AS(attach_labels(s, {{0, 4}, {3, 6}}), InvalidInput);
}

TEST_CASE("impute_missing examples") {
    const double nan = std::nan("");
    TimeSeries s;
    s.values = {1, nan, 3};
    CHECK(impute_missing(s, ImputePolicy::linear).values == std::vector<double>{1, 2, 3});
    s.values = {nan, 5};
    CHECK(impute_missing(s, ImputePolicy::ffill).values == std::vector<double>{5, 5});
    s.values = {1, nan, nan, 4};
    const auto v = impute_missing(s, ImputePolicy::linear).values;
    CHECK(v[1] == doctest::Approx(2));
    CHECK(v[2] == doctest::Approx(3));
    s.values = {2, nan, nan, 8, nan};
    CHECK(impute_missing(s, ImputePolicy::ffill).values == std::vector<double>{2, 2, 2, 8, 8});
    s.values = {nan, nan};
    CHECK_THROWS_AS(impute_missing(s, ImputePolicy::linear), InvalidInput);
}

TEST_CASE("imputation is idempotent") {
    std::mt19937_64 rng(3);
    std::bernoulli_distribution hole(0.3);
    for (int trial = 0; trial < 200; ++trial) {
        TimeSeries s;
        s.values = testing::uniform(rng, 1 + trial % 40, -5, 5);
        for (auto& x : s.values)
            if (hole(rng)) x = std::nan("");
        if (std::all_of(s.values.begin(), s.values.end(), [](double x) { return std::isnan(x); })) s.values[0] = 1;
        for (auto policy : {ImputePolicy::linear, ImputePolicy::ffill}) {
            const auto once = impute_missing(s, policy);
            CHECK_FALSE(once.has_missing());
            CHECK(impute_missing(once, policy).values == once.values);
        }
    }
}

TEST_CASE("standardize examples") {
    TimeSeries s;
    s.values = {0, 2};
    auto [z, p] = standardize(s);
    CHECK(z.values == std::vector<double>{-1, 1});
    CHECK(p.mean == 1);
    CHECK(p.std == 1);

    s.values = {5, 5, 5};
    std::tie(z, p) = standardize(s);
    CHECK(z.values == std::vector<double>{0, 0, 0});
    CHECK(p.mean == 5);
    CHECK(p.std == 1);

    s.values = {1, std::nan("")};
    CHECK_THROWS_AS(standardize(s), InvalidInput);
}

TEST_CASE("standardize round trip") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        TimeSeries s;
        s.values = testing::uniform(rng, 2 + trial, -1e3, 1e3);
        const auto [z, p] = standardize(s);
        double mean = 0, sq = 0;
        for (double x : z.values) mean += x;
        mean /= z.size();
        for (double x : z.values) sq += (x - mean) * (x - mean);
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::sqrt(sq / z.size()) == doctest::Approx(1.0).epsilon(1e-9));
        const auto back = invert_standardization(z.values, p);
        for (std::size_t i = 0; i < back.size(); ++i)
            REQUIRE(std::abs(back[i] - s.values[i]) <= 1e-9 * std::max(1.0, std::abs(s.values[i])));
    }
}

TEST_CASE("format names") {
    CHECK(parse_series_format("nab") == SeriesFormat::nab);
    CHECK(parse_series_format(to_string(SeriesFormat::generic_csv)) == SeriesFormat::generic_csv);
    CHECK_THROWS_AS(parse_series_format("parquet"), ConfigError);
    CHECK(parse_impute_policy("ffill") == ImputePolicy::ffill);
    CHECK(parse_timestamp("1970-01-02 00:00:01") == 86401);
    CHECK(parse_timestamp("1234") == 1234);
    CHECK_THROWS_AS(parse_timestamp("yesterday"), FormatError);
}

TEST_CASE("write_generic_csv round trips") {
    testing::TempDir dir("ingest");
    TimeSeries s;
    s.id = "x";
    s.values = {0.1, -2.5e-7, 3.141592653589793};
    s.timestamps = std::vector<std::int64_t>{1, 2, 3};
    write_generic_csv(dir / "x.csv", s);
    const auto back = load_series(dir / "x.csv", SeriesFormat::generic_csv);
    CHECK(back.values == s.values);
    CHECK(back.timestamps == s.timestamps);
}

}
