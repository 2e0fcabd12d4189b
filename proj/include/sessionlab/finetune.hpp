#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sessionlab/dataset.hpp"
#include "sessionlab/embeddings.hpp"
#include "sessionlab/recommenders.hpp"

namespace sessionlab {

// ---- prompt/completion corpora -------------------------------------------------

struct PromptPair {
  std::string prompt;
  std::string completion;
  SessionId session_id;
};

struct PromptTemplate {
  std::string item_separator = "\n";
  std::string terminator = "\n\n###\n\n";  // marks the end of the prompt
  std::string options_header = "Options:";
  std::string categories_header = "Categories:";
};

// Next-item corpus: prompt = all but the last item's text, completion = the
// last item's text. Items without text are an error.
std::vector<PromptPair> build_next_item_pairs(const Dataset& train, const PromptTemplate& tpl = {});

// Teacher-list corpus: completion = teacher's top-k item texts with the held
// out item moved (or inserted) at the head. Teacher failures skip the session
// and append a note to skip_log.
std::vector<PromptPair> build_ranked_list_pairs(const Dataset& train, const Recommender& teacher,
                                                int k, const PromptTemplate& tpl = {},
                                                std::vector<std::string>* skip_log = nullptr);

// Category corpus: k-means over item embeddings defines the category set (the
// most popular member names each cluster); completion = the top_c category
// names nearest the held-out item.
std::vector<PromptPair> build_category_pairs(const Dataset& train, const EmbeddingMatrix& emb,
                                             int n_clusters, int top_c, std::uint64_t seed,
                                             const PromptTemplate& tpl = {});

// Reorder corpus: options = teacher top-k plus the held-out item, shuffled
// per-session by seed; completion = the same options with the held-out item
// first, then teacher order.
std::vector<PromptPair> build_reorder_pairs(const Dataset& train, const Recommender& teacher,
                                            int k, std::uint64_t seed,
                                            const PromptTemplate& tpl = {},
                                            std::vector<std::string>* skip_log = nullptr);

void write_pairs_jsonl(const std::vector<PromptPair>& pairs, const std::string& path);
std::vector<PromptPair> read_pairs_jsonl(const std::string& path);

// ---- k-means ---------------------------------------------------------------

struct KMeansResult {
  Eigen::MatrixXd centroids;        // n_clusters x dim
  std::vector<int> assignment;      // row -> cluster
  std::vector<double> objective_trace;  // total squared distance per iteration
  int iterations = 0;
};

// Lloyd's algorithm with k-means++ seeding; deterministic under seed. The
// objective trace is non-increasing. Empty clusters re-seed from the farthest
// point.
KMeansResult kmeans(const Eigen::MatrixXd& X, int n_clusters, std::uint64_t seed,
                    int max_iterations = 100);

// ---- generation handling -----------------------------------------------------

class CompletionProvider {
 public:
  virtual ~CompletionProvider() = default;
  // n completions for one prompt at the given temperature
  virtual std::vector<std::string> complete(const std::string& prompt, double temperature,
                                            int n) = 0;
};

// Replays scripted responses in strict order; throws when exhausted. Backs
// deterministic tests and offline reproduction of logged runs.
class ReplayCompletionProvider : public CompletionProvider {
 public:
  explicit ReplayCompletionProvider(std::vector<std::vector<std::string>> responses);
  static ReplayCompletionProvider from_jsonl(const std::string& path);
  std::vector<std::string> complete(const std::string& prompt, double temperature, int n) override;
  std::size_t remaining() const { return responses_.size() - next_; }

 private:
  std::vector<std::vector<std::string>> responses_;
  std::size_t next_ = 0;
};

// OpenAI-style completions endpoint via the shared Transport.
class HttpCompletionProvider : public CompletionProvider {
 public:
  HttpCompletionProvider(ProviderConfig config, Transport& transport);
  std::vector<std::string> complete(const std::string& prompt, double temperature, int n) override;

 private:
  ProviderConfig config_;
  Transport& transport_;
};

// Embeds free text for nearest-neighbour resolution.
class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual Eigen::VectorXd embed(const std::string& text) = 0;
};

// Same construction as the synthetic catalog provider: equal text, equal vector.
class SyntheticTextEmbedder : public TextEmbedder {
 public:
  SyntheticTextEmbedder(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}
  Eigen::VectorXd embed(const std::string& text) override;

 private:
  int dim_;
  std::uint64_t seed_;
};

class HttpTextEmbedder : public TextEmbedder {
 public:
  HttpTextEmbedder(ProviderConfig config, Transport& transport)
      : config_(std::move(config)), transport_(&transport) {}
  Eigen::VectorXd embed(const std::string& text) override;

 private:
  ProviderConfig config_;
  Transport* transport_;
};

struct Resolution {
  std::string raw_text;
  ItemId item_id;         // empty when skipped
  double similarity = 0;  // 1.0 for exact matches
  bool hallucination = false;
  bool skipped = false;   // empty/whitespace generations
};

// Map generated item texts back to catalog ids: exact text match first, then
// nearest catalog embedding by dot product (embeddings must be normalized).
std::vector<Resolution> resolve_generations(const std::vector<std::string>& generations,
                                            const ItemCatalog& catalog,
                                            const EmbeddingMatrix& normalized_embeddings,
                                            TextEmbedder& embedder);

struct ResolutionSummary {
  std::size_t total = 0;
  std::size_t exact = 0;
  std::size_t hallucinations = 0;
  std::size_t skipped = 0;
  double hallucination_rate = 0.0;
  double mean_similarity = 0.0;  // over resolved generations
};

ResolutionSummary summarize_resolutions(const std::vector<Resolution>& rs);

void write_resolutions_jsonl(const std::vector<Resolution>& rs, const std::string& path);

// Frequency-ranked aggregation of repeated single-item generations: count
// desc, first appearance breaking ties, truncated to k.
RecommendationList aggregate_generations(const std::vector<ItemId>& resolved_items, int k);

// Full prediction path for a generative model at evaluation time: sample n
// completions, resolve each, aggregate to a top-k list.
RecommendationList recommend_from_generations(const std::string& prompt,
                                              CompletionProvider& provider, double temperature,
                                              int n, const ItemCatalog& catalog,
                                              const EmbeddingMatrix& normalized_embeddings,
                                              TextEmbedder& embedder, int k);

}  // namespace sessionlab
