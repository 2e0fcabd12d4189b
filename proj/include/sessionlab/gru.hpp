#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sessionlab/dataset.hpp"
#include "sessionlab/embeddings.hpp"
#include "sessionlab/recommenders.hpp"
#include "sessionlab/reduction.hpp"

namespace sessionlab {

struct GruConfig {
  int embedding_dim = 32;
  int hidden_dim = 32;
  int max_session_length = 20;  // truncate to the most recent items
  double learning_rate = 0.1;
  double momentum = 0.0;
  int epochs = 5;
  int batch_size = 16;
  std::uint64_t seed = 1;
  double init_scale = 0.05;          // uniform(-s, s) for random init
  bool embeddings_trainable = true;  // freeze the embedding table when false
  bool tied_output = false;          // score via E * (P h) instead of V h
};

// How the item-embedding layer starts: seeded uniform noise, or rows taken
// from a provider matrix (optionally passed through a reduction first).
struct GruInitSpec {
  enum class Kind { random, from_matrix } kind = Kind::random;
  const EmbeddingMatrix* matrix = nullptr;       // required for from_matrix
  const ReductionModel* reduction = nullptr;     // optional extra projection
};

struct GruModel {
  GruConfig config;
  std::vector<ItemId> vocab;  // sorted train items; row order for E and output
  std::unordered_map<ItemId, int> vocab_index;
  PopularityCounts popularity;

  Eigen::MatrixXd E;             // |I| x e
  Eigen::MatrixXd Wz, Wr, Wh;    // h x e
  Eigen::MatrixXd Uz, Ur, Uh;    // h x h
  Eigen::VectorXd bz, br, bh;    // h
  Eigen::MatrixXd V;             // |I| x h (untied output)
  Eigen::MatrixXd P;             // e x h  (tied output)
  Eigen::VectorXd c;             // |I| output bias

  std::vector<double> epoch_losses;  // mean cross-entropy per epoch
  std::string init_provenance;       // "random" or the provider tag

  void validate() const;  // finite parameters
};

// Embedding-layer init on its own so it can be tested in isolation.
Eigen::MatrixXd init_embedding_table(const std::vector<ItemId>& vocab, const GruConfig& cfg,
                                     const GruInitSpec& init);

// Build + train. epochs = 0 returns the initialized model untouched.
GruModel train_gru(const GruConfig& cfg, const GruInitSpec& init, const Dataset& train);

// Final-state scores over the vocabulary for a prompt. Unknown prompt items
// are skipped (counted); a prompt with no known item is an error.
Eigen::VectorXd gru_scores(const GruModel& m, const std::vector<ItemId>& prompt,
                           std::size_t* skipped_items = nullptr);

RecommendationList gru_recommend(const GruModel& m, const std::vector<ItemId>& prompt, int k);

// Max relative error between analytic and central-difference gradients on a
// small batch. Covers every parameter tensor, tied and untied.
double gru_gradient_check(const GruConfig& cfg, const Dataset& train);

// Mean cross-entropy of the model over a dataset's sessions (no updates).
double gru_dataset_loss(const GruModel& m, const Dataset& data);

void save_gru_model(const GruModel& m, const std::string& path);           // binary
GruModel load_gru_model(const std::string& path);
void write_training_log_csv(const GruModel& m, const std::string& path);   // epoch,loss

class GruRecommender : public Recommender {
 public:
  GruRecommender(GruConfig cfg, GruInitSpec init) : cfg_(cfg), init_(init) {}
  explicit GruRecommender(GruModel fitted);  // wrap an already-trained model

  std::string name() const override { return "gru"; }
  void fit(const Dataset& train) override;
  RecommendationList recommend(const std::vector<ItemId>& prompt, int k) const override;
  std::string config_summary() const override;

  const GruModel& model() const { return model_; }

 private:
  GruConfig cfg_;
  GruInitSpec init_;
  GruModel model_;
  bool fitted_ = false;
};

}  // namespace sessionlab
