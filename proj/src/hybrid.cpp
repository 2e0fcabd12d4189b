#include "sessionlab/hybrid.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

namespace sessionlab {

using nlohmann::json;

// ---- PopularityTable ---------------------------------------------------------

PopularityTable::PopularityTable(const Dataset& train) {
  if (train.sessions.empty()) throw Error("popularity table needs training sessions");
  counts_ = interaction_counts(train.sessions);
  sorted_counts_.reserve(counts_.size());
  for (const auto& [id, c] : counts_) sorted_counts_.push_back(c);
  std::sort(sorted_counts_.begin(), sorted_counts_.end());
}

long long PopularityTable::count(const ItemId& id) const {
  auto it = counts_.find(id);
  return it == counts_.end() ? 0 : it->second;
}

double PopularityTable::quantile(double q) const {
  if (sorted_counts_.empty()) throw Error("popularity table is empty");
  if (q < 0.0 || q > 1.0) throw Error("quantile must be in [0, 1]");
  if (q <= 0.0) return 0.0;  // nothing sits below the floor
  if (q >= 1.0) return static_cast<double>(sorted_counts_.back()) + 1.0;  // everything below
  // smallest count whose CDF reaches q
  std::size_t idx = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(sorted_counts_.size()) - 1e-9));
  if (idx == 0) idx = 1;
  return static_cast<double>(sorted_counts_[idx - 1]);
}

std::vector<double> default_quantile_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 10; ++i) g.push_back(static_cast<double>(i) / 10.0);
  return g;
}

// ---- SwitchHybrid ---------------------------------------------------------------

SwitchHybrid::SwitchHybrid(double cutoff_quantile, std::shared_ptr<Recommender> unpopular_model,
                           std::shared_ptr<Recommender> popular_model)
    : cutoff_(cutoff_quantile),
      unpopular_(std::move(unpopular_model)),
      popular_(std::move(popular_model)) {
  if (cutoff_ < 0.0 || cutoff_ > 1.0) throw ConfigError("switch cutoff must be in [0, 1]");
  if (!unpopular_ || !popular_) throw ConfigError("switch hybrid needs both component models");
}

void SwitchHybrid::fit(const Dataset& train) {
  table_ = PopularityTable(train);
  threshold_ = table_.quantile(cutoff_);
  unpopular_->fit(train);
  popular_->fit(train);
  fitted_ = true;
}

bool SwitchHybrid::routes_to_unpopular(const std::vector<ItemId>& prompt) const {
  if (!fitted_) throw Error("hybrid_switch: fit() has not run");
  if (prompt.empty()) throw Error("cannot recommend for an empty prompt");
  return static_cast<double>(table_.count(prompt.back())) < threshold_;
}

RecommendationList SwitchHybrid::recommend(const std::vector<ItemId>& prompt, int k) const {
  bool unpop = routes_to_unpopular(prompt);
  const Recommender& chosen = unpop ? *unpopular_ : *popular_;
  try {
    return chosen.recommend(prompt, k);
  } catch (const std::exception& ex) {
    throw Error("hybrid_switch " + std::string(unpop ? "unpopular" : "popular") + " branch (" +
                chosen.name() + ") failed: " + ex.what());
  }
}

std::string SwitchHybrid::config_summary() const {
  json j{{"type", "hybrid_switch"},
         {"cutoff", cutoff_},
         {"unpopular", json::parse(unpopular_->config_summary())},
         {"popular", json::parse(popular_->config_summary())}};
  return j.dump();
}

// ---- FilteredHybrid ---------------------------------------------------------------

FilteredHybrid::FilteredHybrid(std::shared_ptr<const EmbeddingMatrix> embeddings,
                               EmbeddingSimOptions base_opts, double popularity_quantile,
                               std::optional<double> diversity_threshold, int overfetch_factor)
    : embeddings_(std::move(embeddings)),
      base_opts_(base_opts),
      pop_quantile_(popularity_quantile),
      diversity_(diversity_threshold),
      overfetch_(overfetch_factor) {
  if (!embeddings_) throw ConfigError("filtered hybrid requires an embedding matrix");
  if (pop_quantile_ < 0.0 || pop_quantile_ > 1.0)
    throw ConfigError("popularity quantile must be in [0, 1]");
  if (diversity_ && (*diversity_ < -1.0 || *diversity_ > 1.0))
    throw ConfigError("diversity threshold must be a cosine in [-1, 1]");
  if (overfetch_ < 1) throw ConfigError("overfetch factor must be >= 1");
}

void FilteredHybrid::fit(const Dataset& train) {
  table_ = PopularityTable(train);
  threshold_ = table_.quantile(pop_quantile_);
  fitted_ = true;
}

FilteredResult FilteredHybrid::recommend_filtered(const std::vector<ItemId>& prompt,
                                                  int k) const {
  if (!fitted_) throw Error("hybrid_filter: fit() has not run");
  // over-fetch so the filters usually leave k survivors
  int fetch = std::min<long long>(static_cast<long long>(k) * overfetch_,
                                  static_cast<long long>(embeddings_->item_ids.size()));
  RecommendationList base = recommend_by_embedding(prompt, *embeddings_, base_opts_, static_cast<int>(fetch));

  FilteredResult out;
  std::vector<Eigen::Index> kept_rows;
  for (const auto& cand : base) {
    if (static_cast<int>(out.list.size()) >= k) break;
    if (static_cast<double>(table_.count(cand.item_id)) < threshold_) continue;
    if (diversity_) {
      Eigen::Index row = embeddings_->row_of(cand.item_id);
      Eigen::VectorXd v = embeddings_->vectors.row(row).transpose();
      double vn = v.norm();
      bool too_close = false;
      for (Eigen::Index kr : kept_rows) {
        Eigen::VectorXd u = embeddings_->vectors.row(kr).transpose();
        double un = u.norm();
        double cos = (vn < 1e-300 || un < 1e-300) ? 0.0 : v.dot(u) / (vn * un);
        if (cos > *diversity_) {
          too_close = true;
          break;
        }
      }
      if (too_close) continue;
      kept_rows.push_back(row);
    }
    out.list.push_back(cand);
  }
  out.short_list = static_cast<int>(out.list.size()) < k;
  return out;
}

RecommendationList FilteredHybrid::recommend(const std::vector<ItemId>& prompt, int k) const {
  return recommend_filtered(prompt, k).list;
}

std::string FilteredHybrid::config_summary() const {
  json j{{"type", "hybrid_filter"},
         {"pooling", base_opts_.pooling.to_string()},
         {"similarity", similarity_name(base_opts_.similarity)},
         {"popularity_quantile", pop_quantile_},
         {"overfetch", overfetch_}};
  if (diversity_) j["diversity_threshold"] = *diversity_;
  return j.dump();
}

// ---- diagnostics ---------------------------------------------------------------

BucketDiagnostics hit_rate_by_popularity_bucket(const Recommender& model,
                                                const std::vector<TestCase>& test,
                                                const PopularityTable& table, int n_buckets,
                                                int k) {
  if (n_buckets < 1) throw Error("diagnostics need at least one bucket");
  if (test.empty()) throw Error("diagnostics need a non-empty test set");

  BucketDiagnostics d;
  for (int i = 1; i < n_buckets; ++i)
    d.edges.push_back(table.quantile(static_cast<double>(i) / n_buckets));

  std::vector<double> hits(static_cast<std::size_t>(n_buckets), 0.0);
  d.sizes.assign(static_cast<std::size_t>(n_buckets), 0);
  double global_hits = 0.0;

  for (const auto& tc : test) {
    if (tc.prompt.empty()) throw Error("diagnostics: empty prompt in test set");
    double c = static_cast<double>(table.count(tc.prompt.back()));
    std::size_t bucket = 0;
    while (bucket < d.edges.size() && c >= d.edges[bucket]) ++bucket;
    RecommendationList list = model.recommend(tc.prompt, k);
    double h = hr_at_k(list, tc.ground_truth, k);
    hits[bucket] += h;
    global_hits += h;
    ++d.sizes[bucket];
  }

  for (std::size_t b = 0; b < hits.size(); ++b) {
    if (d.sizes[b] == 0) d.hit_rate.push_back(std::nullopt);
    else d.hit_rate.push_back(hits[b] / static_cast<double>(d.sizes[b]));
  }
  d.global_hit_rate = global_hits / static_cast<double>(test.size());
  return d;
}

PositionDiagnostics hit_rate_by_prompt_position(const Recommender& model,
                                                const std::vector<TestCase>& test,
                                                int max_positions, int k) {
  if (max_positions < 1) throw Error("diagnostics need at least one position");
  if (test.empty()) throw Error("diagnostics need a non-empty test set");

  PositionDiagnostics d;
  d.sizes.assign(static_cast<std::size_t>(max_positions), 0);
  std::vector<double> hits(static_cast<std::size_t>(max_positions), 0.0);

  for (const auto& tc : test) {
    // position p counts from the prompt's end; truncating the prompt makes
    // that item the last one the model sees
    for (int p = 1; p <= max_positions; ++p) {
      if (tc.prompt.size() < static_cast<std::size_t>(p)) break;
      std::vector<ItemId> truncated(tc.prompt.begin(),
                                    tc.prompt.end() - (p - 1));
      RecommendationList list = model.recommend(truncated, k);
      hits[static_cast<std::size_t>(p - 1)] += hr_at_k(list, tc.ground_truth, k);
      ++d.sizes[static_cast<std::size_t>(p - 1)];
    }
  }
  for (std::size_t p = 0; p < hits.size(); ++p) {
    if (d.sizes[p] == 0) d.hit_rate.push_back(std::nullopt);
    else d.hit_rate.push_back(hits[p] / static_cast<double>(d.sizes[p]));
  }
  return d;
}

}  // namespace sessionlab
