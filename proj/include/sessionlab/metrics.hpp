#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sessionlab/dataset.hpp"
#include "sessionlab/recommenders.hpp"

namespace sessionlab {

// Rank of the ground-truth item in a list (1-based); 0 when absent.
int rank_of(const RecommendationList& list, const ItemId& ground_truth);

// Single-relevant-item accuracy metrics at cutoff k.
double hr_at_k(const RecommendationList& list, const ItemId& gt, int k);
double mrr_at_k(const RecommendationList& list, const ItemId& gt, int k);
double ndcg_at_k(const RecommendationList& list, const ItemId& gt, int k);

// Distinct recommended items across all lists (top-k slots) over catalog size.
double catalog_coverage(const std::vector<RecommendationList>& lists, std::size_t catalog_size,
                        int k);

// Fraction of hits whose ground truth is NOT in the popularity top-k.
double serendipity(const std::vector<RecommendationList>& lists, const std::vector<ItemId>& gts,
                   const RecommendationList& popularity_top_k, int k);

// Mean self-information of recommended slots: -log2(presence / n_sessions).
// Items never seen in training count as once-seen.
double novelty(const std::vector<RecommendationList>& lists,
               const PopularityCounts& presence, std::size_t n_train_sessions, int k);

struct CutoffMetrics {
  double ndcg = 0.0;
  double hr = 0.0;
  double mrr = 0.0;
  double catalog_coverage = 0.0;
  double serendipity = 0.0;
  double novelty = 0.0;
};

struct MetricsReport {
  std::string model_name;
  std::string config_hash;
  std::string version;
  std::map<int, CutoffMetrics> at;  // cutoff -> metrics
  std::size_t n_test = 0;
  std::size_t n_excluded = 0;  // prompts the model refused (errors)
  double runtime_seconds = 0.0;
  std::vector<std::string> exclusion_reasons;  // deduplicated, capped

  std::string to_json_string() const;
  static MetricsReport from_json_string(const std::string& text);
};

struct EvalOptions {
  std::vector<int> cutoffs{10, 20};
  int jobs = 1;  // recommendation calls run in parallel when > 1
};

// Score a fitted model on a split: one recommendation call per test session at
// max cutoff, metrics derived from prefixes. Deterministic for any job count.
MetricsReport evaluate(const Recommender& model, const Dataset& train,
                       const std::vector<TestCase>& test, const EvalOptions& opts = {});

// Leaderboard over reports, NDCG@20 descending (csv + markdown).
void write_leaderboard(const std::vector<MetricsReport>& reports, const std::string& csv_path,
                       const std::string& md_path);

}  // namespace sessionlab
