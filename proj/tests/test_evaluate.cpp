#include "support.hpp"

#include "tsad/error.hpp"
#include "tsad/evaluate.hpp"

#include <doctest.h>
#include <json.hpp>

#include <sstream>

using namespace tsad;

namespace {

// All-pairs intersection count, no shortcuts.
OverlapCounts brute_force(const std::vector<IndexRange>& pred, const std::vector<IndexRange>& truth) {
    const auto meet = [](const IndexRange& a, const IndexRange& b) {
        for (auto k = a.start; k < a.end; ++k)
            if (k >= b.start && k < b.end) return true;
        return false;
    };
    OverlapCounts c;
    for (const auto& p : pred) {
        bool hit = false;
        for (const auto& t : truth) hit = hit || meet(p, t);
        (hit ? c.tp : c.fp) += 1;
    }
    for (const auto& t : truth) {
        bool hit = false;
        for (const auto& p : pred) hit = hit || meet(p, t);
        if (!hit) ++c.fn;
    }
    return c;
}

std::vector<IndexRange> random_intervals(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> count(0, 5), pos(0, 19), len(1, 6);
    std::vector<IndexRange> out(count(rng));
    for (auto& r : out) {
        r.start = pos(rng);
        r.end = std::min<std::int64_t>(20, r.start + len(rng));
    }
    return out;
}

}  // namespace

TEST_SUITE("evaluate") {

TEST_CASE("overlap examples") {
    CHECK(overlap_counts({{10, 20}}, {{15, 30}}) == OverlapCounts{1, 0, 0});
    CHECK(overlap_counts({{10, 20}, {40, 50}}, {{15, 30}}) == OverlapCounts{1, 1, 0});
    CHECK(overlap_counts({}, {{0, 5}}) == OverlapCounts{0, 0, 1});
    // touching half-open intervals do not overlap
    CHECK(overlap_counts({{0, 5}}, {{5, 8}}) == OverlapCounts{0, 1, 1});
    // one prediction over two truths is one tp; two predictions in one truth are two
    CHECK(overlap_counts({{0, 30}}, {{1, 2}, {20, 25}}) == OverlapCounts{1, 0, 0});
    CHECK(overlap_counts({{1, 2}, {3, 4}}, {{0, 10}}) == OverlapCounts{2, 0, 0});
    CHECK_THROWS_AS(overlap_counts({{5, 5}}, {}), InvalidInput);
    CHECK_THROWS_AS(overlap_counts({}, {{7, 3}}), InvalidInput);
}

TEST_CASE("f1 examples") {
    CHECK(f1({1, 0, 0}) == 1.0);
    CHECK(f1({1, 1, 0}) == doctest::Approx(2.0 / 3.0));
    CHECK(f1({0, 4, 2}) == 0.0);
    CHECK(f1({0, 0, 0}) == 0.0);
    CHECK(f1({3, 1, 2}) == doctest::Approx(2.0 * 0.75 * 0.6 / 1.35));
}

TEST_CASE("overlap counts match the all-pairs oracle") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 5000; ++trial) {
        const auto p = random_intervals(rng), t = random_intervals(rng);
        REQUIRE(overlap_counts(p, t) == brute_force(p, t));
    }
}

TEST_CASE("shifting both sides leaves counts unchanged") {
    std::mt19937_64 rng(13);
    std::uniform_int_distribution<int> shift(0, 100000);
    for (int trial = 0; trial < 1000; ++trial) {
        auto p = random_intervals(rng), t = random_intervals(rng);
        const auto before = overlap_counts(p, t);
        const int d = shift(rng);
        for (auto* v : {&p, &t})
            for (auto& r : *v) r = {r.start + d, r.end + d};
        REQUIRE(overlap_counts(p, t) == before);
    }
}

TEST_CASE("f1 is monotone in tp") {
    for (long fp = 0; fp < 8; ++fp)
        for (long fn = 0; fn < 8; ++fn)
            for (long tp = 0; tp < 20; ++tp) REQUIRE(f1({tp + 1, fp, fn}) >= f1({tp, fp, fn}));
}

TEST_CASE("weighted aggregation") {
    CHECK(weighted_mean({{27, 0.595}, {53, 0.679}}) == doctest::Approx(0.6507).epsilon(1e-4));
    const double nab = weighted_mean({{6, 0.626}, {5, 0.572}, {17, 0.692}, {7, 0.595}, {10, 0.628}});
    CHECK(std::abs(nab - 0.641) < 5e-4);
    CHECK(std::abs(nab - 0.639) <= 0.003);
    CHECK(weighted_mean({{4, 0.3}}) == doctest::Approx(0.3));
    CHECK_THROWS_AS(weighted_mean({}), InvalidInput);

    const auto r = aggregate(std::map<std::string, std::vector<double>>{{"A", {1.0, 0.0, 0.5}}, {"B", {0.2}}});
    REQUIRE(r.sub_datasets.size() == 2);
    CHECK(r.sub_datasets[0].name == "A");
    CHECK(r.sub_datasets[0].series_count == 3);
    CHECK(r.sub_datasets[0].mean_f1 == doctest::Approx(0.5));
    CHECK(r.sub_datasets[1].mean_f1 == doctest::Approx(0.2));
    CHECK(r.dataset_mean_f1 == doctest::Approx((3 * 0.5 + 0.2) / 4));

    const auto single = aggregate(std::map<std::string, std::vector<double>>{{"only", {0.25, 0.75}}});
    CHECK(single.dataset_mean_f1 == doctest::Approx(0.5));

    CHECK_THROWS_AS(aggregate(std::map<std::string, std::vector<double>>{{"A", {0.5}}, {"B", {}}}), InvalidInput);
}

TEST_CASE("aggregate keeps counts per level") {
    std::map<std::string, std::vector<SeriesResult>> per;
    per["x"] = {{"s1", {1, 0, 1}, f1({1, 0, 1})}, {"s2", {2, 1, 0}, f1({2, 1, 0})}};
    per["y"] = {{"s3", {0, 2, 1}, 0.0}};
    const auto r = aggregate(per);
    CHECK(r.sub_datasets[0].counts == OverlapCounts{3, 1, 1});
    CHECK(r.counts == OverlapCounts{3, 3, 2});
    CHECK(r.series.at("x").size() == 2);
}

TEST_CASE("table and json output") {
    const auto r = aggregate(std::map<std::string, std::vector<double>>{{"MSL", {0.5, 0.7}}, {"SMAP", {0.9}}});
    std::ostringstream out;
    write_table(out, r, "hvae");
    std::istringstream lines(out.str());
    std::string header, row;
    std::getline(lines, header);
    std::getline(lines, row);
    CHECK(header == "method\tMSL\tSMAP\tmean");
    CHECK(row.rfind("hvae\t0.600\t0.900\t", 0) == 0);

    testing::TempDir dir("evaluate");
    write_eval_json(dir / "e.json", r);
    const auto doc = nlohmann::json::parse(testing::read_text(dir / "e.json"));
    CHECK(doc.at("dataset_mean_f1").get<double>() == doctest::Approx((2 * 0.6 + 0.9) / 3));
    CHECK(doc.at("sub_datasets").size() == 2);
}

}
