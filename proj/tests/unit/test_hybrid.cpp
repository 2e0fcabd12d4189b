#include <doctest.h>

#include <cmath>
#include <set>

#include "helpers.hpp"
#include "sessionlab/hybrid.hpp"
#include "sessionlab/recommenders.hpp"

using namespace sessionlab;

namespace {

std::vector<ItemId> ids_of(const RecommendationList& list) {
  std::vector<ItemId> out;
  for (const auto& s : list) out.push_back(s.item_id);
  return out;
}

// counts: a=5, b=3, c=2, d=1, e=1
Dataset skewed_train() {
  return testutil::make_dataset({{"a", "b"},
                                 {"a", "b"},
                                 {"a", "b", "c"},
                                 {"a", "c"},
                                 {"a", "d"},
                                 {"e", "d"}});
}

std::shared_ptr<EmbeddingMatrix> semantic_embeddings(const Dataset& ds) {
  return std::make_shared<EmbeddingMatrix>(
      normalize_rows(synthetic_embeddings(ds.catalog, 16, 3, &ds.sessions)));
}

}  // namespace

TEST_SUITE_BEGIN("hybrid");

TEST_CASE("popularity quantiles follow the sorted-count convention") {
  PopularityTable table(skewed_train());
  // counts a5 b3 c2 d2 e1 -> sorted [1,2,2,3,5]
  CHECK(table.count("a") == 5);
  CHECK(table.count("unseen") == 0);
  CHECK(table.quantile(0.0) == 0.0);  // nothing ranks below the floor
  CHECK(table.quantile(1.0) == 6.0);  // max + 1: everything counts as unpopular
  CHECK(table.quantile(0.2) == 1.0);  // ceil(0.2*5) = 1st smallest
  CHECK(table.quantile(0.5) == 2.0);  // ceil(2.5) = 3rd smallest
  CHECK(table.quantile(0.8) == 3.0);  // ceil(4.0) = 4th smallest
}

TEST_CASE("switch hybrid routes by the last prompt item's popularity") {
  Dataset ds = skewed_train();
  auto emb = semantic_embeddings(ds);

  EmbeddingSimOptions eopts;
  eopts.pooling = PoolingStrategy::parse("weighted:harmonic");
  auto unpop = std::make_shared<EmbeddingSimRecommender>(emb, eopts);
  auto pop = std::make_shared<SknnRecommender>(SknnOptions{10, true});
  SwitchHybrid hybrid(0.5, unpop, pop);
  hybrid.fit(ds);

  // independently fitted copies of both branches
  EmbeddingSimRecommender unpop_solo(emb, eopts);
  unpop_solo.fit(ds);
  SknnRecommender pop_solo(SknnOptions{10, true});
  pop_solo.fit(ds);

  for (const auto& prompt :
       std::vector<std::vector<ItemId>>{{"a"}, {"b"}, {"c"}, {"e"}, {"b", "a"}, {"a", "e"}}) {
    CAPTURE(prompt.back());
    auto routed = hybrid.routes_to_unpopular(prompt)
                      ? unpop_solo.recommend(prompt, 4)
                      : pop_solo.recommend(prompt, 4);
    auto got = hybrid.recommend(prompt, 4);
    REQUIRE(got.size() == routed.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].item_id == routed[i].item_id);  // exact identity, not just overlap
      CHECK(got[i].score == routed[i].score);
    }
  }
}

TEST_CASE("cutoff extremes route every prompt one way") {
  Dataset ds = skewed_train();
  auto emb = semantic_embeddings(ds);
  EmbeddingSimOptions eopts;
  auto unpop = std::make_shared<EmbeddingSimRecommender>(emb, eopts);
  auto pop = std::make_shared<MostPopularRecommender>();

  SwitchHybrid all_popular(0.0, unpop, pop);
  all_popular.fit(ds);
  SwitchHybrid all_unpopular(1.0, unpop, pop);
  all_unpopular.fit(ds);

  for (const auto& prompt : std::vector<std::vector<ItemId>>{{"a"}, {"e"}, {"c", "d"}}) {
    CHECK(!all_popular.routes_to_unpopular(prompt));
    CHECK(all_unpopular.routes_to_unpopular(prompt));
  }
}

TEST_CASE("switch hybrid validates its cutoff and surfaces branch errors") {
  auto pop = std::make_shared<MostPopularRecommender>();
  CHECK_THROWS_AS(SwitchHybrid(-0.1, pop, pop), ConfigError);
  CHECK_THROWS_AS(SwitchHybrid(1.5, pop, pop), ConfigError);
}

TEST_CASE("filtered hybrid keeps a popularity-filtered subsequence of the base ranking") {
  Dataset ds = skewed_train();
  auto emb = semantic_embeddings(ds);
  EmbeddingSimOptions base;
  base.pooling = PoolingStrategy::parse("mean");

  FilteredHybrid hybrid(emb, base, /*popularity_quantile=*/0.5, std::nullopt, /*overfetch=*/5);
  hybrid.fit(ds);
  PopularityTable table(ds);
  double threshold = table.quantile(0.5);

  EmbeddingSimRecommender plain(emb, base);
  plain.fit(ds);

  for (const auto& prompt : std::vector<std::vector<ItemId>>{{"a"}, {"b", "c"}, {"d"}}) {
    auto filtered = hybrid.recommend(prompt, 3);
    auto full = plain.recommend(prompt, static_cast<int>(ds.catalog.size()));

    // every survivor clears the popularity bar
    for (const auto& s : filtered) CHECK(table.count(s.item_id) >= threshold);

    // and the survivors appear in base-ranking order (subsequence test)
    std::vector<ItemId> base_ids = ids_of(full);
    std::size_t cursor = 0;
    for (const auto& s : filtered) {
      auto it = std::find(base_ids.begin() + cursor, base_ids.end(), s.item_id);
      REQUIRE(it != base_ids.end());
      cursor = static_cast<std::size_t>(it - base_ids.begin()) + 1;
    }
  }
}

TEST_CASE("diversity filter drops near-duplicates greedily") {
  // two clusters of nearly identical vectors plus one outlier
  EmbeddingMatrix m;
  m.item_ids = {"a1", "a2", "b1", "far"};
  m.vectors = Eigen::MatrixXd(4, 2);
  double c = std::cos(0.01), s = std::sin(0.01);
  m.vectors << 1, 0, c, s, 0.9239, 0.3827 /* 22.5 deg */, -1, 0;
  m.dim = 2;
  m.normalized = true;
  m.provider = "hand";
  m.rebuild_index();
  auto emb = std::make_shared<EmbeddingMatrix>(m);

  std::vector<CatalogEntry> cat{
      {"a1", "t", {}}, {"a2", "t", {}}, {"b1", "t", {}}, {"far", "t", {}}};
  Dataset ds = testutil::make_dataset({{"a1", "a2"}, {"b1", "far"}, {"a1", "b1"}},
                                      ItemCatalog(std::move(cat)));

  EmbeddingSimOptions base;
  base.pooling = PoolingStrategy::parse("last_item");
  FilteredHybrid hybrid(emb, base, 0.0, /*diversity=*/0.99, 5);
  hybrid.fit(ds);

  auto res = hybrid.recommend_filtered({"a1"}, 4);
  auto ids = ids_of(res.list);
  // a2 is within 0.99 cosine of a1 and must be dropped; b1 and far survive
  CHECK(ids.size() == 3);
  CHECK(std::find(ids.begin(), ids.end(), "a2") == ids.end());
  CHECK(std::find(ids.begin(), ids.end(), "b1") != ids.end());
  CHECK(std::find(ids.begin(), ids.end(), "far") != ids.end());
  CHECK(res.short_list);  // asked for 4, only 3 distinct-enough items exist

  // pairwise check: no two kept vectors exceed the threshold
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = i + 1; j < ids.size(); ++j)
      CHECK(emb->row(ids[i]).dot(emb->row(ids[j])) <= 0.99);
}

TEST_CASE("filtered hybrid validates its knobs") {
  auto emb = std::make_shared<EmbeddingMatrix>(testutil::one_hot_embeddings(testutil::make_catalog(3)));
  EmbeddingSimOptions base;
  CHECK_THROWS_AS(FilteredHybrid(emb, base, -0.2, std::nullopt, 5), ConfigError);
  CHECK_THROWS_AS(FilteredHybrid(emb, base, 0.5, 1.5, 5), ConfigError);
  CHECK_THROWS_AS(FilteredHybrid(emb, base, 0.5, std::nullopt, 0), ConfigError);
}

TEST_CASE("popularity-bucket diagnostics partition the test set") {
  Dataset ds = skewed_train();
  std::vector<TestCase> test{{"t1", {"a"}, "b"}, {"t2", {"b"}, "a"},
                             {"t3", {"e"}, "d"}, {"t4", {"c"}, "a"}};
  MostPopularRecommender model;
  model.fit(ds);
  PopularityTable table(ds);

  BucketDiagnostics diag = hit_rate_by_popularity_bucket(model, test, table, 3, 2);
  REQUIRE(diag.sizes.size() == 3);
  CHECK(diag.sizes[0] + diag.sizes[1] + diag.sizes[2] == test.size());
  REQUIRE(diag.edges.size() == 2);

  // global rate equals the bucket-weighted mean
  double weighted = 0.0;
  std::size_t n = 0;
  for (std::size_t b = 0; b < 3; ++b) {
    if (!diag.hit_rate[b]) continue;
    weighted += *diag.hit_rate[b] * static_cast<double>(diag.sizes[b]);
    n += diag.sizes[b];
  }
  CHECK(diag.global_hit_rate == doctest::Approx(weighted / static_cast<double>(n)));
}

TEST_CASE("prompt-position diagnostics slide the cut point back in time") {
  Dataset ds = skewed_train();
  // prompts of length 3 and 2: position 3 only applies to the first
  std::vector<TestCase> test{{"t1", {"a", "b", "c"}, "a"}, {"t2", {"a", "b"}, "a"}};
  MostPopularRecommender model;
  model.fit(ds);

  PositionDiagnostics diag = hit_rate_by_prompt_position(model, test, 4, 2);
  REQUIRE(diag.hit_rate.size() == 4);
  CHECK(diag.sizes[0] == 2);  // both prompts support position 1
  CHECK(diag.sizes[1] == 2);
  CHECK(diag.sizes[2] == 1);  // only t1 is long enough
  CHECK(diag.sizes[3] == 0);
  CHECK(!diag.hit_rate[3].has_value());
  // most-popular always recommends {a, b}; gt=a -> every evaluated position hits
  CHECK(*diag.hit_rate[0] == doctest::Approx(1.0));
  CHECK(*diag.hit_rate[2] == doctest::Approx(1.0));
}

TEST_SUITE_END();
