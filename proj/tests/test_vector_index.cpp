#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "gsco/vector_index.hpp"
#include "oracles.hpp"

using namespace gsco;

namespace {

std::vector<IndexEntry> make_entries(const std::vector<std::pair<std::string, EmbeddingVector>>& rows) {
  std::vector<IndexEntry> entries;
  for (const auto& [id, vec] : rows) {
    entries.push_back({id, vec, {}, std::nullopt, ""});
  }
  return entries;
}

}  // namespace

TEST_CASE("cosine_similarity matches hand-evaluated values") {
  CHECK(cosine_similarity({1, 0}, {0, 1}) == 0.0);
  CHECK(cosine_similarity({1, 1}, {1, 1}) == Catch::Approx(1.0).margin(1e-12));
  // 32 / sqrt(14 * 77)
  const double expected = 32.0 / std::sqrt(14.0 * 77.0);
  CHECK(cosine_similarity({1, 2, 3}, {4, 5, 6}) == Catch::Approx(expected).margin(1e-12));
  CHECK(cosine_similarity({1, 2, 3}, {4, 5, 6}) == Catch::Approx(0.974631).margin(1e-6));
}

TEST_CASE("cosine_similarity rejects degenerate inputs") {
  CHECK_THROWS_AS(cosine_similarity({1, 0}, {1, 0, 0}), DimensionError);
  CHECK_THROWS_AS(cosine_similarity({0, 0}, {1, 0}), DegenerateVectorError);
  CHECK_THROWS_AS(cosine_similarity({1, 0}, {0, 0}), DegenerateVectorError);
}

TEST_CASE("cosine_similarity is exactly symmetric and self-similar") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<float> coord(-2.0f, 2.0f);
  for (int trial = 0; trial < 200; ++trial) {
    EmbeddingVector a(16), b(16);
    for (auto& x : a) x = coord(rng);
    for (auto& x : b) x = coord(rng);
    CHECK(cosine_similarity(a, b) == cosine_similarity(b, a));
    CHECK(cosine_similarity(a, a) >= 1.0 - 1e-9);
  }
}

TEST_CASE("build_index validates entries") {
  auto entries = make_entries({{"a", {1, 0}}, {"b", {0, 1}}, {"c", {1, 1}}});
  Index index = build_index(entries, 2);
  CHECK(index.count() == 3);

  CHECK_THROWS_AS(build_index(make_entries({{"a", {1, 0}}, {"a", {0, 1}}}), 2), DuplicateIdError);
  CHECK_THROWS_AS(build_index(make_entries({{"a", {1, 0, 0}}}), 2), DimensionError);
  CHECK_THROWS_AS(build_index(make_entries({{"a", {0, 0}}}), 2), DegenerateVectorError);
  CHECK_THROWS_AS(build_index(make_entries({{"a", {std::nanf(""), 1}}}), 2),
                  DegenerateVectorError);
}

TEST_CASE("cached norms agree with recomputation on 1000 random entries") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<float> coord(-1.0f, 1.0f);
  std::vector<IndexEntry> entries;
  for (int i = 0; i < 1000; ++i) {
    EmbeddingVector v(64);
    for (auto& x : v) x = coord(rng);
    entries.push_back({"e" + std::to_string(i), v, {}, std::nullopt, ""});
  }
  Index index = build_index(entries, 64);
  for (std::size_t i = 0; i < index.count(); ++i) {
    double recomputed = 0.0;
    for (float x : index.entry(i).vector) recomputed += static_cast<double>(x) * x;
    recomputed = std::sqrt(recomputed);
    CHECK(std::abs(index.cached_norm(i) - recomputed) <= 1e-6 * recomputed);
  }
}

TEST_CASE("query_topk ranks the worked example") {
  auto entries = make_entries({{"e1", {1, 0}}, {"e2", {0, 1}}, {"e3", {0.9f, 0.1f}}});
  Index index = build_index(entries, 2);

  SECTION("top-2 by similarity") {
    auto hits = query_topk(index, {1, 0}, {.k = 2});
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].entry_id == "e1");
    CHECK(hits[0].similarity == Catch::Approx(1.0).margin(1e-12));
    CHECK(hits[1].entry_id == "e3");
    CHECK(hits[1].similarity == Catch::Approx(0.9 / std::sqrt(0.82)).margin(1e-6));
  }
  SECTION("k clamps to the index size") {
    auto hits = query_topk(index, {1, 0}, {.k = 10});
    CHECK(hits.size() == 3);
  }
  SECTION("exclude_id removes the self hit") {
    auto hits = query_topk(index, {1, 0}, {.k = 2, .exclude_id = "e1"});
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].entry_id == "e3");
    CHECK(hits[1].entry_id == "e2");
  }
  SECTION("input validation") {
    CHECK_THROWS_AS(query_topk(index, {1, 0, 0}, {.k = 1}), DimensionError);
    CHECK_THROWS_AS(query_topk(index, {0, 0}, {.k = 1}), DegenerateVectorError);
    CHECK_THROWS_AS(query_topk(index, {1, 0}, {.k = 0}), ValidationError);
  }
}

TEST_CASE("query_topk equals the brute-force oracle") {
  std::mt19937 rng(23);
  std::uniform_real_distribution<float> coord(-1.0f, 1.0f);
  std::uniform_int_distribution<int> size(5, 60);
  std::uniform_int_distribution<int> kdist(1, 12);

  for (int trial = 0; trial < 40; ++trial) {
    const int n = size(rng);
    std::vector<std::pair<std::string, EmbeddingVector>> rows;
    for (int i = 0; i < n; ++i) {
      EmbeddingVector v(8);
      // duplicate some vectors so exact ties exercise the id tie-break
      if (i > 0 && i % 4 == 0) {
        v = rows[static_cast<std::size_t>(i / 2)].second;
      } else {
        for (auto& x : v) x = coord(rng);
      }
      char id[16];
      std::snprintf(id, sizeof(id), "e%03d", i);
      rows.emplace_back(id, v);
    }
    Index index = build_index(make_entries(rows), 8);

    EmbeddingVector query(8);
    for (auto& x : query) x = coord(rng);
    const std::size_t k = static_cast<std::size_t>(kdist(rng));

    auto hits = query_topk(index, query, {.k = k});
    auto expected = oracle::brute_force_topk(rows, query, k);
    REQUIRE(hits.size() == expected.size());
    for (std::size_t i = 0; i < hits.size(); ++i) {
      CHECK(hits[i].entry_id == expected[i].id);
      CHECK(hits[i].similarity == expected[i].similarity);
    }
  }
}

TEST_CASE("retrieved similarity equals cosine_similarity exactly") {
  std::mt19937 rng(31);
  std::uniform_real_distribution<float> coord(-1.0f, 1.0f);
  std::vector<std::pair<std::string, EmbeddingVector>> rows;
  for (int i = 0; i < 20; ++i) {
    EmbeddingVector v(12);
    for (auto& x : v) x = coord(rng);
    rows.emplace_back("e" + std::to_string(i), v);
  }
  Index index = build_index(make_entries(rows), 12);
  EmbeddingVector query(12);
  for (auto& x : query) x = coord(rng);

  for (const auto& hit : query_topk(index, query, {.k = 20})) {
    for (const auto& [id, vec] : rows) {
      if (id == hit.entry_id) {
        CHECK(hit.similarity == cosine_similarity(query, vec));
      }
    }
  }
}

TEST_CASE("positive scaling of the query leaves the ranking unchanged") {
  std::mt19937 rng(37);
  std::uniform_real_distribution<float> coord(-1.0f, 1.0f);
  std::vector<std::pair<std::string, EmbeddingVector>> rows;
  for (int i = 0; i < 30; ++i) {
    EmbeddingVector v(6);
    for (auto& x : v) x = coord(rng);
    rows.emplace_back("e" + std::to_string(i), v);
  }
  Index index = build_index(make_entries(rows), 6);

  for (float scale : {0.25f, 3.0f, 17.5f}) {
    EmbeddingVector query(6), scaled(6);
    for (std::size_t j = 0; j < 6; ++j) {
      query[j] = coord(rng);
      scaled[j] = query[j] * scale;
    }
    auto base = query_topk(index, query, {.k = 30});
    auto variant = query_topk(index, scaled, {.k = 30});
    REQUIRE(base.size() == variant.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
      CHECK(base[i].entry_id == variant[i].entry_id);
    }
  }
}

TEST_CASE("result length accounts for exclusion") {
  auto entries = make_entries({{"a", {1, 0}}, {"b", {0, 1}}, {"c", {1, 1}}});
  Index index = build_index(entries, 2);
  CHECK(query_topk(index, {1, 1}, {.k = 2}).size() == 2);
  CHECK(query_topk(index, {1, 1}, {.k = 3, .exclude_id = "b"}).size() == 2);
  CHECK(query_topk(index, {1, 1}, {.k = 3, .exclude_id = "zz"}).size() == 3);
}
