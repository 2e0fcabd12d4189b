#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "sessionlab/dataset.hpp"
#include "sessionlab/embeddings.hpp"
#include "sessionlab/pooling.hpp"

namespace sessionlab {

// Uniform model contract: fit on a training dataset, then produce a ranked,
// duplicate-free top-k list for a session prompt.
class Recommender {
 public:
  virtual ~Recommender() = default;
  virtual std::string name() const = 0;
  virtual void fit(const Dataset& train) = 0;
  virtual RecommendationList recommend(const std::vector<ItemId>& prompt, int k) const = 0;
  // JSON string describing the configuration; hashed into reports.
  virtual std::string config_summary() const = 0;
};

// ---- popularity baseline ---------------------------------------------------

class MostPopularRecommender : public Recommender {
 public:
  std::string name() const override { return "most_popular"; }
  void fit(const Dataset& train) override;
  RecommendationList recommend(const std::vector<ItemId>& prompt, int k) const override;
  std::string config_summary() const override { return "{\"type\":\"most_popular\"}"; }

  const PopularityCounts& counts() const { return counts_; }

 private:
  PopularityCounts counts_;
  RecommendationList ranked_;  // full catalog ranking, computed once
};

// ---- embedding similarity ----------------------------------------------------

enum class Similarity { cosine, dot, euclidean };
Similarity similarity_from_string(const std::string& name);
std::string similarity_name(Similarity s);

struct EmbeddingSimOptions {
  PoolingStrategy pooling;
  Similarity similarity = Similarity::cosine;  // fixed default; others behind the flag
  bool allow_repeats = true;                   // include prompt items in results
};

// Rank the catalog by similarity between the pooled prompt embedding and each
// item embedding. Training interactions are not consulted.
RecommendationList recommend_by_embedding(const std::vector<ItemId>& prompt,
                                          const EmbeddingMatrix& catalog_embeddings,
                                          const EmbeddingSimOptions& opts, int k);

class EmbeddingSimRecommender : public Recommender {
 public:
  EmbeddingSimRecommender(std::shared_ptr<const EmbeddingMatrix> embeddings,
                          EmbeddingSimOptions opts);
  std::string name() const override { return "emb_sim"; }
  void fit(const Dataset& train) override {}  // similarity model: nothing to fit
  RecommendationList recommend(const std::vector<ItemId>& prompt, int k) const override;
  std::string config_summary() const override;

 private:
  std::shared_ptr<const EmbeddingMatrix> embeddings_;
  EmbeddingSimOptions opts_;
};

// ---- session k-nearest-neighbours ------------------------------------------

struct SknnOptions {
  int k_neighbours = 100;
  bool use_inverted_index = true;  // accelerator; result-identical to the scan
};

struct SknnEmbOptions {
  int k_neighbours = 100;
  PoolingStrategy train_pooling;   // pools training sessions
  PoolingStrategy prompt_pooling;  // pools the prompt
};

// Fitted neighbour model shared by both variants.
struct SknnModel {
  std::vector<SessionId> session_ids;
  std::vector<std::vector<ItemId>> item_sets;  // sorted unique items per session
  std::vector<std::int64_t> start_ts;
  PopularityCounts popularity;  // train interaction counts (tie-breaks, fallback)
  int k_neighbours = 0;
  bool use_inverted_index = true;
  std::unordered_map<ItemId, std::vector<std::size_t>> item_to_sessions;

  // embedding variant
  bool use_embeddings = false;
  SknnEmbOptions emb;
  std::shared_ptr<const EmbeddingMatrix> embeddings;
  Eigen::MatrixXd session_vectors;  // one pooled row per training session
};

SknnModel fit_sknn(const Dataset& train, const SknnOptions& opts);
SknnModel fit_sknn_emb(const Dataset& train, std::shared_ptr<const EmbeddingMatrix> embeddings,
                       const SknnEmbOptions& opts);

struct SknnNeighbour {
  std::size_t session_index;
  double similarity;
};

// Top neighbours with similarity > 0, ordered by similarity desc, recency
// desc, session_id asc.
std::vector<SknnNeighbour> sknn_neighbours(const SknnModel& m, const std::vector<ItemId>& prompt);

// Candidate scores summed over the neighbour set (empty when no neighbour).
std::unordered_map<ItemId, double> score_sknn(const SknnModel& m,
                                              const std::vector<ItemId>& prompt);

class SknnRecommender : public Recommender {
 public:
  explicit SknnRecommender(SknnOptions opts) : opts_(opts) {}
  SknnRecommender(SknnEmbOptions opts, std::shared_ptr<const EmbeddingMatrix> embeddings)
      : emb_opts_(opts), embeddings_(std::move(embeddings)), use_embeddings_(true) {}

  std::string name() const override { return use_embeddings_ ? "sknn_emb" : "sknn"; }
  void fit(const Dataset& train) override;
  RecommendationList recommend(const std::vector<ItemId>& prompt, int k) const override;
  std::string config_summary() const override;

  const SknnModel& model() const { return model_; }
  // number of prompts that fell back to the popularity ranking
  long long fallback_count() const { return fallbacks_.load(); }

 private:
  SknnOptions opts_;
  SknnEmbOptions emb_opts_;
  std::shared_ptr<const EmbeddingMatrix> embeddings_;
  bool use_embeddings_ = false;
  SknnModel model_;
  RecommendationList popularity_ranking_;
  mutable std::atomic<long long> fallbacks_{0};
};

// ---- fitted-model persistence -------------------------------------------------

void save_sknn_model(const SknnModel& m, const std::string& dir);
SknnModel load_sknn_model(const std::string& dir,
                          std::shared_ptr<const EmbeddingMatrix> embeddings = nullptr);

}  // namespace sessionlab
