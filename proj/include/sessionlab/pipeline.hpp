#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sessionlab/dataset.hpp"
#include "sessionlab/embeddings.hpp"
#include "sessionlab/metrics.hpp"
#include "sessionlab/recommenders.hpp"
#include "sessionlab/reduction.hpp"

namespace sessionlab {

// Declarative experiment description (json file). Stages read and validate
// their own sections; unknown model types fail fast with the offending path.
struct RunConfig {
  nlohmann::json raw;
  std::string path;        // source file, for error messages
  std::string config_hash; // fnv of the canonical dump

  static RunConfig load(const std::string& path);
  static RunConfig from_json(const nlohmann::json& j, const std::string& label = "<inline>");
};

// Built artifacts shared across stages within one process.
struct PipelineState {
  Dataset dataset;                 // ingested + filtered
  SplitSpec split;
  std::shared_ptr<EmbeddingMatrix> embeddings;          // provider space
  std::shared_ptr<EmbeddingMatrix> reduced_embeddings;  // after reduction + renorm
  std::optional<ReductionModel> reduction;
  std::map<std::string, std::shared_ptr<Recommender>> models;  // fitted, by config name
  std::vector<MetricsReport> reports;
};

// Individual stages. Each writes its artifacts under out_dir and records a
// stage stamp (input hash) so re-runs skip finished work.
void run_ingest_stage(const RunConfig& cfg, const std::string& out_dir, PipelineState& state);
void run_split_stage(const RunConfig& cfg, const std::string& out_dir, PipelineState& state);
void run_embed_stage(const RunConfig& cfg, const std::string& out_dir, PipelineState& state,
                     Transport* transport = nullptr);
void run_reduce_stage(const RunConfig& cfg, const std::string& out_dir, PipelineState& state);
void run_evaluate_stage(const RunConfig& cfg, const std::string& out_dir, PipelineState& state,
                        const std::vector<std::string>& only_models = {});

// Full pipeline: ingest -> split -> embed -> reduce -> fit/evaluate ->
// leaderboard. Writes run_meta.json (config hash + version) on success and a
// FAILED marker when a stage throws.
void run_pipeline(const RunConfig& cfg, const std::string& out_dir,
                  Transport* transport = nullptr);

// Model factory shared by evaluate/tune/diagnose. `params` is the model block
// from the config; embeddings may be null for models that don't need them.
std::shared_ptr<Recommender> make_recommender(const nlohmann::json& params,
                                              std::shared_ptr<const EmbeddingMatrix> embeddings,
                                              const std::string& error_context);

// Tuning entry: random search over the config's tune.space for tune.model,
// objective = NDCG@20 summed over the three chronological validation folds.
nlohmann::json run_tune_stage(const RunConfig& cfg, const std::string& out_dir,
                              PipelineState& state);

// ---- synthetic corpus ---------------------------------------------------------

struct SyntheticSpec {
  int n_sessions = 1000;
  int n_items = 200;
  int n_topics = 10;
  int min_session_length = 3;
  int max_session_length = 10;
  double noise_prob = 0.1;   // per-event chance of an off-topic item
  std::uint64_t seed = 42;
};

// Topic-structured interaction log + catalog with keyword tags. Sessions get
// increasing timestamps so temporal splits are meaningful.
void generate_synthetic_corpus(const SyntheticSpec& spec, const std::string& interactions_csv,
                               const std::string& catalog_jsonl);

}  // namespace sessionlab
