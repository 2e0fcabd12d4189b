#include "sessionlab/recommenders.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace sessionlab {

using nlohmann::json;

// ---- most popular ------------------------------------------------------------

void MostPopularRecommender::fit(const Dataset& train) {
  if (train.sessions.empty()) throw Error("cannot fit on an empty training set");
  counts_ = interaction_counts(train.sessions);
  std::vector<ScoredItem> scored;
  scored.reserve(counts_.size());
  for (const auto& [id, c] : counts_) scored.push_back({id, static_cast<double>(c)});
  ranked_ = top_k_ranked(std::move(scored), static_cast<int>(counts_.size()), nullptr);
}

RecommendationList MostPopularRecommender::recommend(const std::vector<ItemId>& prompt,
                                                     int k) const {
  (void)prompt;  // ranking is prompt-independent
  if (ranked_.empty()) throw Error("most_popular: fit() has not run");
  RecommendationList out = ranked_;
  if (out.size() > static_cast<std::size_t>(k)) out.resize(static_cast<std::size_t>(k));
  return out;
}

// ---- embedding similarity ------------------------------------------------------

Similarity similarity_from_string(const std::string& name) {
  if (name == "cosine") return Similarity::cosine;
  if (name == "dot") return Similarity::dot;
  if (name == "euclidean") return Similarity::euclidean;
  throw ConfigError("unknown similarity: " + name);
}

std::string similarity_name(Similarity s) {
  switch (s) {
    case Similarity::cosine: return "cosine";
    case Similarity::dot: return "dot";
    case Similarity::euclidean: return "euclidean";
  }
  throw Error("unreachable similarity");
}

namespace {

double pair_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b, Similarity s) {
  switch (s) {
    case Similarity::cosine: {
      double na = a.norm(), nb = b.norm();
      if (na < 1e-300 || nb < 1e-300) return 0.0;  // zero vector: similarity 0 by convention
      return a.dot(b) / (na * nb);
    }
    case Similarity::dot:
      return a.dot(b);
    case Similarity::euclidean:
      return -(a - b).norm();
  }
  throw Error("unreachable similarity");
}

}  // namespace

RecommendationList recommend_by_embedding(const std::vector<ItemId>& prompt,
                                          const EmbeddingMatrix& emb,
                                          const EmbeddingSimOptions& opts, int k) {
  if (prompt.empty()) throw Error("cannot recommend for an empty prompt");
  if (k < 1) throw Error("k must be positive");

  Eigen::MatrixXd rows = emb.rows_for(prompt);  // throws on missing embeddings
  Eigen::VectorXd pooled = pool_session(rows, opts.pooling);

  std::set<ItemId> exclude;
  if (!opts.allow_repeats) exclude.insert(prompt.begin(), prompt.end());

  std::vector<ScoredItem> scored;
  scored.reserve(emb.item_ids.size());
  for (std::size_t i = 0; i < emb.item_ids.size(); ++i) {
    if (exclude.count(emb.item_ids[i])) continue;
    double s = pair_similarity(pooled, emb.vectors.row(static_cast<Eigen::Index>(i)).transpose(),
                               opts.similarity);
    scored.push_back({emb.item_ids[i], s});
  }
  if (scored.empty()) throw Error("no candidates left after excluding prompt items");
  return top_k_ranked(std::move(scored), k, nullptr);
}

EmbeddingSimRecommender::EmbeddingSimRecommender(std::shared_ptr<const EmbeddingMatrix> embeddings,
                                                 EmbeddingSimOptions opts)
    : embeddings_(std::move(embeddings)), opts_(opts) {
  if (!embeddings_) throw Error("emb_sim requires an embedding matrix");
  embeddings_->validate();
}

RecommendationList EmbeddingSimRecommender::recommend(const std::vector<ItemId>& prompt,
                                                      int k) const {
  return recommend_by_embedding(prompt, *embeddings_, opts_, k);
}

std::string EmbeddingSimRecommender::config_summary() const {
  json j{{"type", "emb_sim"},
         {"pooling", opts_.pooling.to_string()},
         {"similarity", similarity_name(opts_.similarity)},
         {"allow_repeats", opts_.allow_repeats},
         {"provider", embeddings_->provider},
         {"dim", embeddings_->dim}};
  return j.dump();
}

// ---- sknn ----------------------------------------------------------------

namespace {

void fit_sknn_common(SknnModel& m, const Dataset& train) {
  if (train.sessions.empty()) throw Error("cannot fit on an empty training set");
  m.session_ids.reserve(train.sessions.size());
  m.item_sets.reserve(train.sessions.size());
  m.start_ts.reserve(train.sessions.size());
  for (std::size_t i = 0; i < train.sessions.size(); ++i) {
    const Session& s = train.sessions[i];
    std::vector<ItemId> items(s.items.begin(), s.items.end());
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
    for (const auto& it : items) m.item_to_sessions[it].push_back(i);
    m.session_ids.push_back(s.session_id);
    m.item_sets.push_back(std::move(items));
    m.start_ts.push_back(s.start_ts);
  }
  m.popularity = interaction_counts(train.sessions);
}

std::vector<ItemId> unique_sorted(const std::vector<ItemId>& items) {
  std::vector<ItemId> u(items.begin(), items.end());
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  return u;
}

double binary_cosine(const std::vector<ItemId>& sorted_a, const std::vector<ItemId>& sorted_b) {
  if (sorted_a.empty() || sorted_b.empty()) return 0.0;
  std::size_t inter = 0, i = 0, j = 0;
  while (i < sorted_a.size() && j < sorted_b.size()) {
    int c = sorted_a[i].compare(sorted_b[j]);
    if (c == 0) {
      ++inter;
      ++i;
      ++j;
    } else if (c < 0) {
      ++i;
    } else {
      ++j;
    }
  }
  if (inter == 0) return 0.0;
  return static_cast<double>(inter) /
         (std::sqrt(static_cast<double>(sorted_a.size())) *
          std::sqrt(static_cast<double>(sorted_b.size())));
}

// order: similarity desc, recency desc, id asc; truncate to k with sim > 0
std::vector<SknnNeighbour> take_top_neighbours(const SknnModel& m,
                                               std::vector<SknnNeighbour> cands) {
  std::sort(cands.begin(), cands.end(), [&](const SknnNeighbour& a, const SknnNeighbour& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    if (m.start_ts[a.session_index] != m.start_ts[b.session_index])
      return m.start_ts[a.session_index] > m.start_ts[b.session_index];
    return m.session_ids[a.session_index] < m.session_ids[b.session_index];
  });
  if (cands.size() > static_cast<std::size_t>(m.k_neighbours))
    cands.resize(static_cast<std::size_t>(m.k_neighbours));
  return cands;
}

}  // namespace

SknnModel fit_sknn(const Dataset& train, const SknnOptions& opts) {
  if (opts.k_neighbours < 1) throw Error("sknn needs k_neighbours >= 1");
  SknnModel m;
  m.k_neighbours = opts.k_neighbours;
  m.use_inverted_index = opts.use_inverted_index;
  fit_sknn_common(m, train);
  return m;
}

SknnModel fit_sknn_emb(const Dataset& train, std::shared_ptr<const EmbeddingMatrix> embeddings,
                       const SknnEmbOptions& opts) {
  if (opts.k_neighbours < 1) throw Error("sknn_emb needs k_neighbours >= 1");
  if (!embeddings) throw Error("sknn_emb requires an embedding matrix");
  embeddings->validate();
  SknnModel m;
  m.k_neighbours = opts.k_neighbours;
  m.use_embeddings = true;
  m.emb = opts;
  m.embeddings = std::move(embeddings);
  fit_sknn_common(m, train);

  m.session_vectors.resize(static_cast<Eigen::Index>(train.sessions.size()), m.embeddings->dim);
  for (std::size_t i = 0; i < train.sessions.size(); ++i) {
    Eigen::MatrixXd rows = m.embeddings->rows_for(train.sessions[i].items);
    m.session_vectors.row(static_cast<Eigen::Index>(i)) =
        pool_session(rows, opts.train_pooling).transpose();
  }
  return m;
}

std::vector<SknnNeighbour> sknn_neighbours(const SknnModel& m, const std::vector<ItemId>& prompt) {
  if (prompt.empty()) throw Error("cannot recommend for an empty prompt");

  std::vector<SknnNeighbour> cands;
  if (m.use_embeddings) {
    Eigen::MatrixXd rows = m.embeddings->rows_for(prompt);
    Eigen::VectorXd pooled = pool_session(rows, m.emb.prompt_pooling);
    double pn = pooled.norm();
    for (std::size_t i = 0; i < m.item_sets.size(); ++i) {
      Eigen::VectorXd sv = m.session_vectors.row(static_cast<Eigen::Index>(i)).transpose();
      double sn = sv.norm();
      double sim = (pn < 1e-300 || sn < 1e-300) ? 0.0 : pooled.dot(sv) / (pn * sn);
      if (sim > 0.0) cands.push_back({i, sim});
    }
  } else {
    std::vector<ItemId> p = unique_sorted(prompt);
    if (m.use_inverted_index) {
      std::set<std::size_t> touched;
      for (const auto& it : p) {
        auto idx = m.item_to_sessions.find(it);
        if (idx == m.item_to_sessions.end()) continue;
        touched.insert(idx->second.begin(), idx->second.end());
      }
      for (std::size_t i : touched) {
        double sim = binary_cosine(m.item_sets[i], p);
        if (sim > 0.0) cands.push_back({i, sim});
      }
    } else {
      for (std::size_t i = 0; i < m.item_sets.size(); ++i) {
        double sim = binary_cosine(m.item_sets[i], p);
        if (sim > 0.0) cands.push_back({i, sim});
      }
    }
  }
  return take_top_neighbours(m, std::move(cands));
}

std::unordered_map<ItemId, double> score_sknn(const SknnModel& m,
                                              const std::vector<ItemId>& prompt) {
  std::unordered_map<ItemId, double> scores;
  for (const auto& nb : sknn_neighbours(m, prompt))
    for (const auto& it : m.item_sets[nb.session_index]) scores[it] += nb.similarity;
  return scores;
}

void SknnRecommender::fit(const Dataset& train) {
  model_ = use_embeddings_ ? fit_sknn_emb(train, embeddings_, emb_opts_)
                           : fit_sknn(train, opts_);
  std::vector<ScoredItem> scored;
  scored.reserve(model_.popularity.size());
  for (const auto& [id, c] : model_.popularity) scored.push_back({id, static_cast<double>(c)});
  popularity_ranking_ =
      top_k_ranked(std::move(scored), static_cast<int>(model_.popularity.size()), nullptr);
}

RecommendationList SknnRecommender::recommend(const std::vector<ItemId>& prompt, int k) const {
  if (popularity_ranking_.empty()) throw Error(name() + ": fit() has not run");
  std::unordered_map<ItemId, double> scores = score_sknn(model_, prompt);
  if (scores.empty()) {
    // no overlapping neighbour: fall back to the popularity ranking
    fallbacks_.fetch_add(1);
    std::clog << name() << ": no neighbours for session prompt; falling back to popularity\n";
    RecommendationList out = popularity_ranking_;
    if (out.size() > static_cast<std::size_t>(k)) out.resize(static_cast<std::size_t>(k));
    return out;
  }
  std::vector<ScoredItem> scored;
  scored.reserve(scores.size());
  for (const auto& [id, s] : scores) scored.push_back({id, s});
  return top_k_ranked(std::move(scored), k, &model_.popularity);
}

std::string SknnRecommender::config_summary() const {
  json j;
  if (use_embeddings_) {
    j = json{{"type", "sknn_emb"},
             {"k_neighbours", emb_opts_.k_neighbours},
             {"train_pooling", emb_opts_.train_pooling.to_string()},
             {"prompt_pooling", emb_opts_.prompt_pooling.to_string()}};
  } else {
    j = json{{"type", "sknn"},
             {"k_neighbours", opts_.k_neighbours},
             {"inverted_index", opts_.use_inverted_index}};
  }
  return j.dump();
}

// ---- persistence -------------------------------------------------------------

void save_sknn_model(const SknnModel& m, const std::string& dir) {
  std::filesystem::create_directories(dir);
  json params{{"k_neighbours", m.k_neighbours},
              {"use_inverted_index", m.use_inverted_index},
              {"use_embeddings", m.use_embeddings}};
  if (m.use_embeddings) {
    params["train_pooling"] = m.emb.train_pooling.to_string();
    params["prompt_pooling"] = m.emb.prompt_pooling.to_string();
  }
  write_text_file(dir + "/params.json", params.dump(2) + "\n");

  std::ostringstream sess;
  for (std::size_t i = 0; i < m.session_ids.size(); ++i) {
    json j{{"session_id", m.session_ids[i]},
           {"items", m.item_sets[i]},
           {"start_ts", m.start_ts[i]}};
    if (m.use_embeddings) {
      // doubles round-trip exactly through json
      std::vector<double> v(static_cast<std::size_t>(m.session_vectors.cols()));
      for (Eigen::Index c = 0; c < m.session_vectors.cols(); ++c)
        v[static_cast<std::size_t>(c)] = m.session_vectors(static_cast<Eigen::Index>(i), c);
      j["vector"] = v;
    }
    sess << j.dump() << "\n";
  }
  write_text_file(dir + "/sessions.jsonl", sess.str());

  json pop = json::object();
  std::vector<ItemId> ids;
  ids.reserve(m.popularity.size());
  for (const auto& [id, c] : m.popularity) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  for (const auto& id : ids) pop[id] = m.popularity.at(id);
  write_text_file(dir + "/popularity.json", pop.dump() + "\n");
}

SknnModel load_sknn_model(const std::string& dir,
                          std::shared_ptr<const EmbeddingMatrix> embeddings) {
  SknnModel m;
  json params = json::parse(read_text_file(dir + "/params.json"));
  m.k_neighbours = params.at("k_neighbours").get<int>();
  m.use_inverted_index = params.value("use_inverted_index", true);
  m.use_embeddings = params.value("use_embeddings", false);
  if (m.use_embeddings) {
    m.emb.k_neighbours = m.k_neighbours;
    m.emb.train_pooling = PoolingStrategy::parse(params.at("train_pooling").get<std::string>());
    m.emb.prompt_pooling = PoolingStrategy::parse(params.at("prompt_pooling").get<std::string>());
    if (!embeddings) throw Error("loading an sknn_emb model requires the embedding matrix");
    m.embeddings = std::move(embeddings);
  }

  std::ifstream in(dir + "/sessions.jsonl");
  if (!in) throw Error("cannot open " + dir + "/sessions.jsonl");
  std::string line;
  std::vector<std::vector<double>> vectors;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    std::size_t idx = m.session_ids.size();
    m.session_ids.push_back(j.at("session_id").get<std::string>());
    m.item_sets.push_back(j.at("items").get<std::vector<ItemId>>());
    m.start_ts.push_back(j.at("start_ts").get<std::int64_t>());
    for (const auto& it : m.item_sets.back()) m.item_to_sessions[it].push_back(idx);
    if (m.use_embeddings) vectors.push_back(j.at("vector").get<std::vector<double>>());
  }
  if (m.use_embeddings) {
    if (vectors.empty()) throw Error("sknn_emb model has no session vectors");
    m.session_vectors.resize(static_cast<Eigen::Index>(vectors.size()),
                             static_cast<Eigen::Index>(vectors[0].size()));
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      if (vectors[i].size() != vectors[0].size())
        throw Error("sknn_emb session vector dim mismatch");
      for (std::size_t c = 0; c < vectors[i].size(); ++c)
        m.session_vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
            vectors[i][c];
    }
  }

  json pop = json::parse(read_text_file(dir + "/popularity.json"));
  for (auto it = pop.begin(); it != pop.end(); ++it) m.popularity[it.key()] = it.value().get<long long>();
  return m;
}

}  // namespace sessionlab
