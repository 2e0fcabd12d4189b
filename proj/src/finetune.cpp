#include "sessionlab/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace sessionlab {

using nlohmann::json;

namespace {

// item texts joined by the separator; empty text is an error
std::string session_text(const std::vector<ItemId>& items, const ItemCatalog& catalog,
                         const PromptTemplate& tpl) {
  std::vector<std::string> texts;
  texts.reserve(items.size());
  for (const auto& id : items) {
    const CatalogEntry& e = catalog.at(id);
    if (e.text.empty()) throw Error("item has no text: " + id);
    texts.push_back(e.text);
  }
  return join_strings(texts, tpl.item_separator);
}

const std::string& item_text(const ItemCatalog& catalog, const ItemId& id) {
  const CatalogEntry& e = catalog.at(id);
  if (e.text.empty()) throw Error("item has no text: " + id);
  return e.text;
}

}  // namespace

// ---- corpora -------------------------------------------------------------

std::vector<PromptPair> build_next_item_pairs(const Dataset& train, const PromptTemplate& tpl) {
  if (train.sessions.empty()) throw Error("cannot build pairs from an empty training set");
  std::vector<PromptPair> pairs;
  pairs.reserve(train.sessions.size());
  for (const auto& s : train.sessions) {
    TestCase tc = leave_one_out(s);
    PromptPair p;
    p.session_id = s.session_id;
    p.prompt = session_text(tc.prompt, train.catalog, tpl) + tpl.terminator;
    p.completion = item_text(train.catalog, tc.ground_truth);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

namespace {

// teacher list with the held-out item moved (or inserted) at the head,
// truncated to k
std::vector<ItemId> head_insert(const RecommendationList& teacher_list, const ItemId& gt, int k) {
  std::vector<ItemId> out;
  out.reserve(static_cast<std::size_t>(k));
  out.push_back(gt);
  for (const auto& si : teacher_list) {
    if (si.item_id == gt) continue;
    if (static_cast<int>(out.size()) >= k) break;
    out.push_back(si.item_id);
  }
  return out;
}

}  // namespace

std::vector<PromptPair> build_ranked_list_pairs(const Dataset& train, const Recommender& teacher,
                                                int k, const PromptTemplate& tpl,
                                                std::vector<std::string>* skip_log) {
  if (train.sessions.empty()) throw Error("cannot build pairs from an empty training set");
  if (k < 1) throw Error("list length k must be positive");
  std::vector<PromptPair> pairs;
  for (const auto& s : train.sessions) {
    TestCase tc = leave_one_out(s);
    RecommendationList teacher_list;
    try {
      teacher_list = teacher.recommend(tc.prompt, k);
    } catch (const std::exception& ex) {
      if (skip_log)
        skip_log->push_back("session " + s.session_id + ": teacher failed: " + ex.what());
      continue;
    }
    std::vector<ItemId> ordered = head_insert(teacher_list, tc.ground_truth, k);
    std::vector<std::string> texts;
    texts.reserve(ordered.size());
    for (const auto& id : ordered) texts.push_back(item_text(train.catalog, id));

    PromptPair p;
    p.session_id = s.session_id;
    p.prompt = session_text(tc.prompt, train.catalog, tpl) + tpl.terminator;
    p.completion = join_strings(texts, tpl.item_separator);
    pairs.push_back(std::move(p));
  }
  if (pairs.empty()) throw Error("teacher produced no usable sessions");
  return pairs;
}

std::vector<PromptPair> build_category_pairs(const Dataset& train, const EmbeddingMatrix& emb,
                                             int n_clusters, int top_c, std::uint64_t seed,
                                             const PromptTemplate& tpl) {
  if (top_c < 1) throw Error("top_c must be positive");
  KMeansResult km = kmeans(emb.vectors, n_clusters, seed);

  // each cluster is named by its most popular member (ties: lowest item id)
  PopularityCounts pop = interaction_counts(train.sessions);
  std::vector<ItemId> representative(static_cast<std::size_t>(n_clusters));
  for (int c = 0; c < n_clusters; ++c) {
    ItemId best;
    long long best_count = -1;
    for (std::size_t i = 0; i < km.assignment.size(); ++i) {
      if (km.assignment[i] != c) continue;
      const ItemId& id = emb.item_ids[i];
      auto it = pop.find(id);
      long long cnt = it == pop.end() ? 0 : it->second;
      if (cnt > best_count || (cnt == best_count && (best.empty() || id < best))) {
        best = id;
        best_count = cnt;
      }
    }
    if (best.empty()) throw Error("k-means produced an empty cluster");
    representative[static_cast<std::size_t>(c)] = best;
  }

  std::vector<std::string> category_names;
  category_names.reserve(representative.size());
  for (const auto& id : representative) category_names.push_back(item_text(train.catalog, id));
  std::string category_block =
      tpl.categories_header + tpl.item_separator + join_strings(category_names, tpl.item_separator);

  std::vector<PromptPair> pairs;
  pairs.reserve(train.sessions.size());
  for (const auto& s : train.sessions) {
    TestCase tc = leave_one_out(s);
    Eigen::VectorXd gt_vec = emb.row(tc.ground_truth);
    double gt_norm = gt_vec.norm();

    // rank categories by cosine between the held-out item and representatives
    std::vector<std::pair<double, std::size_t>> ranked;
    ranked.reserve(representative.size());
    for (std::size_t c = 0; c < representative.size(); ++c) {
      Eigen::VectorXd rv = emb.row(representative[c]);
      double rn = rv.norm();
      double cos = (gt_norm < 1e-300 || rn < 1e-300) ? 0.0 : gt_vec.dot(rv) / (gt_norm * rn);
      ranked.emplace_back(cos, c);
    }
    std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return representative[a.second] < representative[b.second];
    });

    std::vector<std::string> chosen;
    for (int i = 0; i < top_c && i < static_cast<int>(ranked.size()); ++i)
      chosen.push_back(category_names[ranked[static_cast<std::size_t>(i)].second]);

    PromptPair p;
    p.session_id = s.session_id;
    p.prompt = session_text(tc.prompt, train.catalog, tpl) + tpl.item_separator +
               tpl.item_separator + category_block + tpl.terminator;
    p.completion = join_strings(chosen, tpl.item_separator);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::vector<PromptPair> build_reorder_pairs(const Dataset& train, const Recommender& teacher,
                                            int k, std::uint64_t seed, const PromptTemplate& tpl,
                                            std::vector<std::string>* skip_log) {
  if (train.sessions.empty()) throw Error("cannot build pairs from an empty training set");
  if (k < 1) throw Error("list length k must be positive");
  std::vector<PromptPair> pairs;
  for (const auto& s : train.sessions) {
    TestCase tc = leave_one_out(s);
    RecommendationList teacher_list;
    try {
      teacher_list = teacher.recommend(tc.prompt, k);
    } catch (const std::exception& ex) {
      if (skip_log)
        skip_log->push_back("session " + s.session_id + ": teacher failed: " + ex.what());
      continue;
    }

    // options = teacher list plus the held-out item; completion = held-out
    // item first, then teacher order; prompt shows a seeded shuffle
    std::vector<ItemId> completion_order = head_insert(teacher_list, tc.ground_truth,
                                                       static_cast<int>(teacher_list.size()) + 1);
    std::vector<ItemId> options = completion_order;
    Rng rng(mix_seed(seed, "reorder:" + s.session_id));
    rng.shuffle(options);

    std::vector<std::string> option_texts, completion_texts;
    for (const auto& id : options) option_texts.push_back(item_text(train.catalog, id));
    for (const auto& id : completion_order)
      completion_texts.push_back(item_text(train.catalog, id));

    PromptPair p;
    p.session_id = s.session_id;
    p.prompt = session_text(tc.prompt, train.catalog, tpl) + tpl.item_separator +
               tpl.item_separator + tpl.options_header + tpl.item_separator +
               join_strings(option_texts, tpl.item_separator) + tpl.terminator;
    p.completion = join_strings(completion_texts, tpl.item_separator);
    pairs.push_back(std::move(p));
  }
  if (pairs.empty()) throw Error("teacher produced no usable sessions");
  return pairs;
}

void write_pairs_jsonl(const std::vector<PromptPair>& pairs, const std::string& path) {
  std::ostringstream out;
  for (const auto& p : pairs) {
    json j{{"prompt", p.prompt}, {"completion", p.completion}, {"session_id", p.session_id}};
    out << j.dump() << "\n";
  }
  write_text_file(path, out.str());
}

std::vector<PromptPair> read_pairs_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open pairs file: " + path);
  std::vector<PromptPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& ex) {
      throw Error("bad pair json at line " + std::to_string(line_no) + ": " + ex.what());
    }
    PromptPair p;
    p.prompt = j.at("prompt").get<std::string>();
    p.completion = j.at("completion").get<std::string>();
    p.session_id = j.value("session_id", std::string());
    pairs.push_back(std::move(p));
  }
  return pairs;
}

// ---- k-means ---------------------------------------------------------------

KMeansResult kmeans(const Eigen::MatrixXd& X, int n_clusters, std::uint64_t seed,
                    int max_iterations) {
  const Eigen::Index n = X.rows();
  if (n_clusters < 1) throw Error("k-means needs at least one cluster");
  if (n < n_clusters)
    throw Error("k-means: fewer points (" + std::to_string(n) + ") than clusters (" +
                std::to_string(n_clusters) + ")");
  if (!X.allFinite()) throw Error("k-means input contains NaN or Inf");

  Rng rng(mix_seed(seed, "kmeans"));

  // k-means++ seeding
  std::vector<Eigen::Index> centers;
  centers.push_back(rng.uniform_int(0, n - 1));
  Eigen::VectorXd d2 = (X.rowwise() - X.row(centers[0])).rowwise().squaredNorm();
  while (static_cast<int>(centers.size()) < n_clusters) {
    double total = d2.sum();
    Eigen::Index pick = 0;
    if (total <= 0.0) {
      pick = rng.uniform_int(0, n - 1);  // duplicate points: fall back to uniform
    } else {
      double target = rng.uniform() * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (acc >= target) {
          pick = i;
          break;
        }
        pick = i;
      }
    }
    centers.push_back(pick);
    Eigen::VectorXd nd = (X.rowwise() - X.row(pick)).rowwise().squaredNorm();
    d2 = d2.cwiseMin(nd);
  }

  KMeansResult res;
  res.centroids.resize(n_clusters, X.cols());
  for (int c = 0; c < n_clusters; ++c) res.centroids.row(c) = X.row(centers[static_cast<std::size_t>(c)]);
  res.assignment.assign(static_cast<std::size_t>(n), 0);

  double prev_obj = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iterations; ++iter) {
    // assign
    double obj = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int best_c = 0;
      for (int c = 0; c < n_clusters; ++c) {
        double dist = (X.row(i) - res.centroids.row(c)).squaredNorm();
        if (dist < best) {
          best = dist;
          best_c = c;
        }
      }
      res.assignment[static_cast<std::size_t>(i)] = best_c;
      obj += best;
    }
    res.objective_trace.push_back(obj);
    res.iterations = iter + 1;

    // update
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(n_clusters, X.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(n_clusters), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(res.assignment[static_cast<std::size_t>(i)]) += X.row(i);
      ++counts[static_cast<std::size_t>(res.assignment[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < n_clusters; ++c) {
      if (counts[static_cast<std::size_t>(c)] == 0) {
        // re-seed an empty cluster from the farthest point
        Eigen::Index far = 0;
        double far_d = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          double dist =
              (X.row(i) - res.centroids.row(res.assignment[static_cast<std::size_t>(i)]))
                  .squaredNorm();
          if (dist > far_d) {
            far_d = dist;
            far = i;
          }
        }
        res.centroids.row(c) = X.row(far);
      } else {
        res.centroids.row(c) =
            sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      }
    }

    if (prev_obj - obj <= 1e-12 * std::max(1.0, std::abs(prev_obj)) && iter > 0) break;
    prev_obj = obj;
  }
  return res;
}

// ---- providers ---------------------------------------------------------------

ReplayCompletionProvider::ReplayCompletionProvider(std::vector<std::vector<std::string>> responses)
    : responses_(std::move(responses)) {}

ReplayCompletionProvider ReplayCompletionProvider::from_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open replay file: " + path);
  std::vector<std::vector<std::string>> responses;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& ex) {
      throw Error("bad replay line " + std::to_string(line_no) + ": " + ex.what());
    }
    responses.push_back(j.at("responses").get<std::vector<std::string>>());
  }
  return ReplayCompletionProvider(std::move(responses));
}

std::vector<std::string> ReplayCompletionProvider::complete(const std::string& prompt,
                                                            double temperature, int n) {
  (void)prompt;
  (void)temperature;
  if (next_ >= responses_.size())
    throw Error("replay provider exhausted after " + std::to_string(next_) + " prompts");
  std::vector<std::string> out = responses_[next_++];
  if (static_cast<int>(out.size()) != n)
    throw Error("replay response has " + std::to_string(out.size()) + " completions, expected " +
                std::to_string(n));
  return out;
}

HttpCompletionProvider::HttpCompletionProvider(ProviderConfig config, Transport& transport)
    : config_(std::move(config)), transport_(transport) {}

std::vector<std::string> HttpCompletionProvider::complete(const std::string& prompt,
                                                          double temperature, int n) {
  json req{{"model", config_.model}, {"prompt", prompt}, {"temperature", temperature}, {"n", n}};
  std::vector<std::pair<std::string, std::string>> headers;
  if (!config_.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + config_.api_key);
  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    try {
      std::string body = transport_.post_json(config_.endpoint, req.dump(), headers);
      json resp = json::parse(body);
      std::vector<std::string> out;
      for (const auto& choice : resp.at("choices")) out.push_back(choice.at("text").get<std::string>());
      if (static_cast<int>(out.size()) != n)
        throw Error("completion response has " + std::to_string(out.size()) + " choices, expected " +
                    std::to_string(n));
      return out;
    } catch (const std::exception& ex) {
      last_error = ex.what();
    }
  }
  throw Error("completion request failed after " + std::to_string(config_.max_retries + 1) +
              " attempts: " + last_error);
}

Eigen::VectorXd SyntheticTextEmbedder::embed(const std::string& text) {
  return synthetic_text_vector(text, dim_, seed_);
}

Eigen::VectorXd HttpTextEmbedder::embed(const std::string& text) {
  return fetch_text_vector(text, config_, *transport_);
}

// ---- resolution ---------------------------------------------------------------

std::vector<Resolution> resolve_generations(const std::vector<std::string>& generations,
                                            const ItemCatalog& catalog,
                                            const EmbeddingMatrix& emb, TextEmbedder& embedder) {
  if (!emb.normalized) throw Error("resolution requires normalized catalog embeddings");
  // exact text match: lowest item id wins on duplicate texts
  std::map<std::string, ItemId> by_text;
  for (const auto& e : catalog.entries()) {
    auto it = by_text.find(e.text);
    if (it == by_text.end() || e.item_id < it->second) by_text[e.text] = e.item_id;
  }

  std::vector<Resolution> out;
  out.reserve(generations.size());
  for (const auto& raw : generations) {
    Resolution r;
    r.raw_text = raw;
    std::string trimmed = raw;
    auto b = trimmed.find_first_not_of(" \t\r\n");
    auto e = trimmed.find_last_not_of(" \t\r\n");
    trimmed = b == std::string::npos ? std::string() : trimmed.substr(b, e - b + 1);
    if (trimmed.empty()) {
      r.skipped = true;
      out.push_back(std::move(r));
      continue;
    }
    auto hit = by_text.find(trimmed);
    if (hit != by_text.end()) {
      r.item_id = hit->second;
      r.similarity = 1.0;
      out.push_back(std::move(r));
      continue;
    }
    // hallucinated title: nearest catalog item by dot product
    Eigen::VectorXd v = embedder.embed(trimmed);
    double vn = v.norm();
    if (vn < 1e-300) {
      r.skipped = true;
      out.push_back(std::move(r));
      continue;
    }
    v /= vn;
    Eigen::VectorXd sims = emb.vectors * v;
    Eigen::Index best = 0;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < sims.size(); ++i) {
      if (sims(i) > best_sim ||
          (sims(i) == best_sim && emb.item_ids[static_cast<std::size_t>(i)] <
                                      emb.item_ids[static_cast<std::size_t>(best)])) {
        best_sim = sims(i);
        best = i;
      }
    }
    r.item_id = emb.item_ids[static_cast<std::size_t>(best)];
    r.similarity = best_sim;
    r.hallucination = true;
    out.push_back(std::move(r));
  }
  return out;
}

ResolutionSummary summarize_resolutions(const std::vector<Resolution>& rs) {
  ResolutionSummary s;
  s.total = rs.size();
  double sim_sum = 0.0;
  std::size_t resolved = 0;
  for (const auto& r : rs) {
    if (r.skipped) {
      ++s.skipped;
      continue;
    }
    ++resolved;
    sim_sum += r.similarity;
    if (r.hallucination) ++s.hallucinations;
    else ++s.exact;
  }
  if (resolved > 0) {
    s.hallucination_rate = static_cast<double>(s.hallucinations) / static_cast<double>(resolved);
    s.mean_similarity = sim_sum / static_cast<double>(resolved);
  }
  return s;
}

void write_resolutions_jsonl(const std::vector<Resolution>& rs, const std::string& path) {
  std::ostringstream out;
  for (const auto& r : rs) {
    json j{{"raw_text", r.raw_text},
           {"item_id", r.item_id},
           {"similarity", r.similarity},
           {"hallucination", r.hallucination},
           {"skipped", r.skipped}};
    out << j.dump() << "\n";
  }
  write_text_file(path, out.str());
}

RecommendationList aggregate_generations(const std::vector<ItemId>& resolved_items, int k) {
  if (k < 1) throw Error("k must be positive");
  std::unordered_map<ItemId, long long> counts;
  std::unordered_map<ItemId, std::size_t> first_seen;
  for (std::size_t i = 0; i < resolved_items.size(); ++i) {
    const ItemId& id = resolved_items[i];
    if (id.empty()) continue;
    if (++counts[id] == 1) first_seen[id] = i;
  }
  std::vector<ItemId> ids;
  ids.reserve(counts.size());
  for (const auto& [id, c] : counts) ids.push_back(id);
  std::sort(ids.begin(), ids.end(), [&](const ItemId& a, const ItemId& b) {
    if (counts[a] != counts[b]) return counts[a] > counts[b];
    return first_seen[a] < first_seen[b];  // earlier generation wins ties
  });
  RecommendationList out;
  for (const auto& id : ids) {
    if (static_cast<int>(out.size()) >= k) break;
    out.push_back({id, static_cast<double>(counts[id])});
  }
  return out;
}

RecommendationList recommend_from_generations(const std::string& prompt,
                                              CompletionProvider& provider, double temperature,
                                              int n, const ItemCatalog& catalog,
                                              const EmbeddingMatrix& emb, TextEmbedder& embedder,
                                              int k) {
  std::vector<std::string> generations = provider.complete(prompt, temperature, n);
  std::vector<Resolution> rs = resolve_generations(generations, catalog, emb, embedder);
  std::vector<ItemId> items;
  items.reserve(rs.size());
  for (const auto& r : rs)
    if (!r.skipped) items.push_back(r.item_id);
  return aggregate_generations(items, k);
}

}  // namespace sessionlab
