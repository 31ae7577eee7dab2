#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <vector>

#include "npmc/binio.hpp"
#include "npmc/memory_index.hpp"
#include "npmc/rng.hpp"

using namespace npmc;

namespace {

// Independent full-scan oracle, deliberately separate from the index code.
std::vector<std::pair<double, std::uint64_t>> naive_knn(
    const std::vector<std::vector<double>>& points, const std::vector<double>& query,
    std::size_t k) {
    std::vector<std::pair<double, std::uint64_t>> all;
    for (std::size_t i = 0; i < points.size(); ++i) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < query.size(); ++j)
            d2 += (points[i][j] - query[j]) * (points[i][j] - query[j]);
        all.emplace_back(d2, static_cast<std::uint64_t>(i));
    }
    std::sort(all.begin(), all.end());
    if (all.size() > k) all.resize(k);
    return all;
}

}  // namespace

TEST_CASE("insertion ids count up from zero") {
    FlatMemoryIndex idx(2);
    idx.add_batch({{0, 0}, {1, 0}, {3, 0}}, {0, 1, 2});
    CHECK(idx.size() == 3);
    CHECK(idx.records()[0].insertion_id == 0);
    CHECK(idx.records()[2].insertion_id == 2);
}

TEST_CASE("capacity evicts oldest first") {
    FlatMemoryIndex idx(1, 2);
    idx.add_batch({{0}, {1}, {2}}, {0, 0, 0});
    CHECK(idx.size() == 2);
    CHECK(idx.records()[0].insertion_id == 1);
    CHECK(idx.records()[1].insertion_id == 2);
}

TEST_CASE("duplicates are stored, not deduplicated") {
    FlatMemoryIndex idx(2);
    idx.add_batch({{1, 1}, {1, 1}}, {0, 0});
    CHECK(idx.size() == 2);
}

TEST_CASE("dimension mismatch raises a contract error") {
    FlatMemoryIndex idx(3);
    CHECK_THROWS_AS(idx.add({1, 2}, 0), ContractError);
    CHECK_THROWS_AS(idx.search_knn({1, 2}, 1), ContractError);
}

TEST_CASE("hand-evaluated two-neighbor search") {
    FlatMemoryIndex idx(2);
    idx.add_batch({{0, 0}, {1, 0}, {3, 0}}, {0, 1, 2});
    auto hits = idx.search_knn({0.9, 0}, 2);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].record.insertion_id == 1);
    CHECK(hits[0].dist2 == doctest::Approx(0.01));
    CHECK(hits[1].record.insertion_id == 0);
    CHECK(hits[1].dist2 == doctest::Approx(0.81));
}

TEST_CASE("exact match behavior with and without exclusion") {
    FlatMemoryIndex idx(2);
    idx.add_batch({{1, 2}, {5, 5}}, {0, 1});
    auto hits = idx.search_knn({1, 2}, 1, false);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].dist2 == 0.0);
    CHECK(hits[0].record.insertion_id == 0);

    auto excluded = idx.search_knn({1, 2}, 1, true);
    REQUIRE(excluded.size() == 1);
    CHECK(excluded[0].record.insertion_id == 1);
}

TEST_CASE("equidistant records sort by insertion id") {
    FlatMemoryIndex idx(1);
    idx.add_batch({{2}, {-2}}, {0, 1});
    auto hits = idx.search_knn({0}, 2);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].record.insertion_id == 0);
    CHECK(hits[1].record.insertion_id == 1);
}

TEST_CASE("empty eligible set returns empty, not an error") {
    FlatMemoryIndex idx(1);
    CHECK(idx.search_knn({0}, 3).empty());
    idx.add({1}, 0);
    CHECK(idx.search_knn({1}, 3, true).empty());
}

TEST_CASE("search matches the naive oracle on 500 random points") {
    const std::size_t n = 500, d = 16;
    Rng rng(101);
    std::vector<std::vector<double>> points(n, std::vector<double>(d));
    std::vector<int> labels(n, 0);
    for (auto& p : points)
        for (double& v : p) v = rng.normal();

    FlatMemoryIndex idx(d);
    idx.add_batch(points, labels);

    for (std::size_t k : {1u, 5u, 10u}) {
        for (int q = 0; q < 25; ++q) {
            std::vector<double> query(d);
            for (double& v : query) v = rng.normal();
            auto expected = naive_knn(points, query, k);
            auto hits = idx.search_knn(query, k);
            REQUIRE(hits.size() == expected.size());
            for (std::size_t i = 0; i < hits.size(); ++i) {
                CHECK(hits[i].record.insertion_id == expected[i].second);
                CHECK(hits[i].dist2 == doctest::Approx(expected[i].first).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("results are sorted by nondecreasing distance") {
    Rng rng(55);
    FlatMemoryIndex idx(4);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> v(4);
        for (double& x : v) x = rng.uniform(-1, 1);
        idx.add(v, 0);
    }
    auto hits = idx.search_knn({0, 0, 0, 0}, 20);
    for (std::size_t i = 1; i < hits.size(); ++i) CHECK(hits[i - 1].dist2 <= hits[i].dist2);
}

TEST_CASE("aggregate_mean arithmetic and edge cases") {
    FlatMemoryIndex idx(2);
    idx.add_batch({{0, 0}, {1, 0}}, {0, 0});
    auto hits = idx.search_knn({0, 0}, 2);
    auto mean = idx.aggregate_mean(hits);
    CHECK(mean[0] == 0.5);
    CHECK(mean[1] == 0.0);

    auto single = idx.search_knn({1, 0}, 1);
    auto one = idx.aggregate_mean(single);
    CHECK(one == std::vector<double>{1.0, 0.0});

    CHECK(idx.aggregate_mean({}) == std::vector<double>(2, 0.0));
}

TEST_CASE("aggregate_mean of identical vectors recovers the vector") {
    FlatMemoryIndex idx(3);
    const std::vector<double> v{0.1, -2.7, 3.333333333333};
    for (int i = 0; i < 5; ++i) idx.add(v, 0);
    auto mean = idx.aggregate_mean(idx.search_knn(v, 5));
    REQUIRE(mean.size() == v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        CHECK(mean[i] == doctest::Approx(v[i]).epsilon(1e-15));
}

TEST_CASE("save/load round trip preserves everything") {
    FlatMemoryIndex idx(3, 10);
    Rng rng(1);
    for (int i = 0; i < 7; ++i) {
        std::vector<double> v(3);
        // f32-representable values so the on-disk format is lossless here
        for (double& x : v) x = static_cast<double>(static_cast<float>(rng.normal()));
        idx.add(v, i % 3);
    }
    const std::string path = "mem_roundtrip.npmi";
    idx.save(path);
    FlatMemoryIndex loaded = FlatMemoryIndex::load(path);
    CHECK(loaded == idx);
}

TEST_CASE("empty index round trips") {
    FlatMemoryIndex idx(5);
    const std::string bytes = idx.serialize();
    CHECK(FlatMemoryIndex::deserialize(bytes) == idx);
}

TEST_CASE("truncated file is rejected without a partial index") {
    FlatMemoryIndex idx(2);
    idx.add_batch({{1, 2}, {3, 4}}, {0, 1});
    std::string bytes = idx.serialize();
    bytes.resize(bytes.size() - 3);
    CHECK_THROWS_AS(FlatMemoryIndex::deserialize(bytes), FormatError);
}

TEST_CASE("FIFO eviction preserves relative order of survivors") {
    FlatMemoryIndex idx(1, 3);
    for (int i = 0; i < 10; ++i) idx.add({static_cast<double>(i)}, 0);
    const auto& rec = idx.records();
    REQUIRE(rec.size() == 3);
    for (std::size_t i = 1; i < rec.size(); ++i)
        CHECK(rec[i - 1].insertion_id < rec[i].insertion_id);
    CHECK(rec[0].insertion_id == 7);
}
