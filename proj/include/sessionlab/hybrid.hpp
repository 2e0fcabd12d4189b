#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sessionlab/dataset.hpp"
#include "sessionlab/embeddings.hpp"
#include "sessionlab/metrics.hpp"
#include "sessionlab/recommenders.hpp"

namespace sessionlab {

// Train interaction counts with quantile lookups. quantile(0) = 0 and
// quantile(1) = max_count + 1, so a cutoff of 0 routes every item to the
// "popular" side and a cutoff of 1 routes every item to the "unpopular" side.
class PopularityTable {
 public:
  PopularityTable() = default;
  explicit PopularityTable(const Dataset& train);

  long long count(const ItemId& id) const;  // 0 for unseen items
  double quantile(double q) const;          // smallest count with CDF >= q
  const PopularityCounts& counts() const { return counts_; }
  bool empty() const { return sorted_counts_.empty(); }

 private:
  PopularityCounts counts_;
  std::vector<long long> sorted_counts_;
};

// Default cutoff sweep for hybrid tuning.
std::vector<double> default_quantile_grid();

// Routes each prompt by its final item's train popularity: below the cutoff
// quantile goes to the unpopular-side model, at-or-above to the popular-side
// model. Component errors are rethrown with the branch named.
class SwitchHybrid : public Recommender {
 public:
  SwitchHybrid(double cutoff_quantile, std::shared_ptr<Recommender> unpopular_model,
               std::shared_ptr<Recommender> popular_model);

  std::string name() const override { return "hybrid_switch"; }
  void fit(const Dataset& train) override;
  RecommendationList recommend(const std::vector<ItemId>& prompt, int k) const override;
  std::string config_summary() const override;

  bool routes_to_unpopular(const std::vector<ItemId>& prompt) const;

 private:
  double cutoff_ = 0.5;
  std::shared_ptr<Recommender> unpopular_;
  std::shared_ptr<Recommender> popular_;
  PopularityTable table_;
  double threshold_ = 0.0;
  bool fitted_ = false;
};

struct FilteredResult {
  RecommendationList list;
  bool short_list = false;  // fewer than k candidates survived the filters
};

// Embedding-similarity recommendations restricted to sufficiently popular
// items, with an optional greedy diversity pass (drop candidates too close to
// an already-kept one). Over-fetches base candidates to refill after filtering.
class FilteredHybrid : public Recommender {
 public:
  FilteredHybrid(std::shared_ptr<const EmbeddingMatrix> embeddings, EmbeddingSimOptions base_opts,
                 double popularity_quantile, std::optional<double> diversity_threshold,
                 int overfetch_factor = 5);

  std::string name() const override { return "hybrid_filter"; }
  void fit(const Dataset& train) override;
  RecommendationList recommend(const std::vector<ItemId>& prompt, int k) const override;
  std::string config_summary() const override;

  FilteredResult recommend_filtered(const std::vector<ItemId>& prompt, int k) const;

 private:
  std::shared_ptr<const EmbeddingMatrix> embeddings_;
  EmbeddingSimOptions base_opts_;
  double pop_quantile_ = 0.0;
  std::optional<double> diversity_;
  int overfetch_ = 5;
  PopularityTable table_;
  double threshold_ = 0.0;
  bool fitted_ = false;
};

// ---- diagnostics -------------------------------------------------------------

struct BucketDiagnostics {
  std::vector<std::optional<double>> hit_rate;  // per bucket; nullopt when empty
  std::vector<std::size_t> sizes;
  double global_hit_rate = 0.0;
  std::vector<double> edges;  // n_buckets-1 interior quantile edges
};

// Hit rate at k grouped by the popularity bucket of each prompt's last item.
// Buckets partition the test set, so sizes sum to n_test.
BucketDiagnostics hit_rate_by_popularity_bucket(const Recommender& model,
                                                const std::vector<TestCase>& test,
                                                const PopularityTable& table, int n_buckets,
                                                int k);

struct PositionDiagnostics {
  // index p-1 = hit rate when the item p positions from the end acts as the
  // final prompt item; nullopt when no test session is long enough
  std::vector<std::optional<double>> hit_rate;
  std::vector<std::size_t> sizes;
};

PositionDiagnostics hit_rate_by_prompt_position(const Recommender& model,
                                                const std::vector<TestCase>& test,
                                                int max_positions, int k);

}  // namespace sessionlab
