// Acceptance gate: eleven checks, each printing one [PASS]/[FAIL]/[SKIP] line.
//
//   sessionlab_acceptance                 run everything
//   sessionlab_acceptance --criterion 4   run one check
//
// Exit 0 = all requested checks passed (skips allowed), 1 = a check failed,
// 77 = the requested check was skipped (reserved for the Amazon Beauty checks,
// which need SESSIONLAB_BEAUTY_RATINGS pointing at the public ratings CSV
// with user,item,rating,timestamp rows).

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../unit/helpers.hpp"
#include "sessionlab/dataset.hpp"
#include "sessionlab/embeddings.hpp"
#include "sessionlab/finetune.hpp"
#include "sessionlab/gru.hpp"
#include "sessionlab/hybrid.hpp"
#include "sessionlab/metrics.hpp"
#include "sessionlab/pipeline.hpp"
#include "sessionlab/pooling.hpp"
#include "sessionlab/recommenders.hpp"
#include "sessionlab/reduction.hpp"
#include "sessionlab/tune.hpp"

using namespace sessionlab;
using testutil::TempDir;

namespace {

#ifndef SESSIONLAB_TEST_DATA_DIR
#define SESSIONLAB_TEST_DATA_DIR "tests/data"
#endif

constexpr int kPass = 0, kFail = 1, kSkip = 77;

// Locked end-to-end scores for check 10, frozen from the first full run.
// Negative = not frozen yet: the check then only enforces the 2x margin and
// prints the observed values so they can be locked here.
constexpr double kLockedSeqsimNdcg20 = 0.16636619403068434;
constexpr double kLockedSknnEmbNdcg20 = 0.2808571931234406;
constexpr double kLockedPopNdcg20 = 0.027466973646695036;

struct Check {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& why) {
    if (!cond && ok) {
      ok = false;
      detail = why;
    }
  }
  void note(const std::string& text) {
    if (ok) detail = text;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool within_pct(double value, double reference, double pct) {
  return std::abs(value - reference) <= std::abs(reference) * pct / 100.0;
}

// ---- Amazon Beauty (checks 1 and 2) -----------------------------------------------

// The public ratings CSV holds user,item,rating,timestamp rows. Users stand in
// for sessions: each user's chronological review sequence is one session.
Dataset load_beauty(const std::string& ratings_csv, const TempDir& tmp) {
  std::ifstream in(ratings_csv);
  if (!in) throw Error("cannot open ratings file: " + ratings_csv);

  std::ofstream log(tmp.file("interactions.csv"));
  log << "session_id,item_id,timestamp\n";
  std::set<std::string> items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_string(line, ',');
    if (fields.size() != 4)
      throw Error("ratings line " + std::to_string(line_no) + " does not have 4 fields");
    // tolerate a header row ("user_id,item_id,rating,timestamp" or similar)
    if (line_no == 1 && fields[3].find_first_not_of("0123456789") != std::string::npos) continue;
    log << fields[0] << ',' << fields[1] << ',' << fields[3] << '\n';
    items.insert(fields[1]);
  }
  log.close();

  std::ofstream cat(tmp.file("catalog.jsonl"));
  for (const auto& id : items)
    cat << "{\"item_id\": \"" << id << "\", \"item_text\": \"" << id << "\"}\n";
  cat.close();

  Dataset raw = ingest(tmp.file("interactions.csv"), tmp.file("catalog.jsonl"), {});
  return p_core_filter(raw, 5);
}

int check_beauty_preprocessing() {
  const char* env = std::getenv("SESSIONLAB_BEAUTY_RATINGS");
  if (!env) {
    std::printf("[SKIP] criterion 1: Beauty 5-core counts (set SESSIONLAB_BEAUTY_RATINGS)\n");
    return kSkip;
  }
  auto t0 = std::chrono::steady_clock::now();
  TempDir tmp("beauty_prep");
  Dataset ds = load_beauty(env, tmp);
  double secs = seconds_since(t0);

  Check c;
  c.require(within_pct(static_cast<double>(ds.stats.sessions), 22363, 1.0),
            "sessions = " + std::to_string(ds.stats.sessions) + ", want 22363 +-1%");
  c.require(within_pct(static_cast<double>(ds.stats.items), 12101, 1.0),
            "items = " + std::to_string(ds.stats.items) + ", want 12101 +-1%");
  c.require(within_pct(static_cast<double>(ds.stats.interactions), 198502, 1.0),
            "interactions = " + std::to_string(ds.stats.interactions) + ", want 198502 +-1%");
  c.require(within_pct(ds.stats.avg_session_length, 8.9, 2.0),
            "avg session length = " + std::to_string(ds.stats.avg_session_length) +
                ", want 8.9 +-2%");
  c.require(within_pct(ds.stats.density, 0.00073, 3.0),
            "density = " + std::to_string(ds.stats.density) + ", want 0.00073 +-3%");
  c.require(secs < 300.0, "took " + std::to_string(secs) + "s, limit 300s");
  c.note(std::to_string(ds.stats.sessions) + " sessions / " + std::to_string(ds.stats.items) +
         " items / " + std::to_string(ds.stats.interactions) + " interactions in " +
         std::to_string(secs) + "s");

  std::printf("[%s] criterion 1: Beauty 5-core counts match the reference statistics — %s\n",
              c.ok ? "PASS" : "FAIL", c.detail.c_str());
  return c.ok ? kPass : kFail;
}

int check_beauty_coverage() {
  const char* env = std::getenv("SESSIONLAB_BEAUTY_RATINGS");
  if (!env) {
    std::printf("[SKIP] criterion 2: Beauty MostPopular coverage (set SESSIONLAB_BEAUTY_RATINGS)\n");
    return kSkip;
  }
  TempDir tmp("beauty_cov");
  Dataset ds = load_beauty(env, tmp);
  SplitSpec split = temporal_split(ds, 0.2);

  auto t0 = std::chrono::steady_clock::now();
  MostPopularRecommender pop;
  pop.fit(split.train);
  EvalOptions opts;
  opts.cutoffs = {20};
  MetricsReport rep = evaluate(pop, split.train, split.test, opts);
  double secs = seconds_since(t0);

  double cov = rep.at.at(20).catalog_coverage;
  double n_items = static_cast<double>(ds.stats.items);

  Check c;
  // the same 20-item list goes to every prompt, so coverage is exactly 20/|catalog|
  c.require(std::abs(cov * n_items - 20.0) < 1e-6,
            "coverage*items = " + std::to_string(cov * n_items) + ", want exactly 20");
  c.require(within_pct(n_items, 12101, 1.0),
            "items = " + std::to_string(ds.stats.items) + ", want 12101 +-1%");
  c.require(cov > 0.0015 && cov < 0.0025,
            "coverage@20 = " + std::to_string(cov) + ", outside the published band");
  c.require(secs < 60.0, "took " + std::to_string(secs) + "s, limit 60s");
  c.note("coverage@20 = " + std::to_string(cov) + " = 20/" + std::to_string(ds.stats.items) +
         " in " + std::to_string(secs) + "s");

  std::printf("[%s] criterion 2: MostPopular catalog coverage@20 on Beauty — %s\n",
              c.ok ? "PASS" : "FAIL", c.detail.c_str());
  return c.ok ? kPass : kFail;
}

// ---- check 3: metric formulas vs naive re-implementations ----------------------

int check_metric_oracles() {
  Check c;
  Rng rng(301);
  int instances = 0;

  for (int trial = 0; trial < 500 && c.ok; ++trial) {
    // a tiny universe and a handful of ranked lists
    int catalog_n = 5 + static_cast<int>(rng.uniform_int(0, 25));
    std::vector<ItemId> universe;
    for (int i = 0; i < catalog_n; ++i) universe.push_back("c" + std::to_string(i));

    auto random_list = [&](int len) {
      std::vector<ItemId> pool = universe;
      rng.shuffle(pool);
      RecommendationList list;
      double score = 10.0;
      for (int i = 0; i < len && i < static_cast<int>(pool.size()); ++i) {
        score -= rng.uniform(0.01, 1.0);
        list.push_back({pool[static_cast<std::size_t>(i)], score});
      }
      return list;
    };

    int n_lists = 2 + static_cast<int>(rng.uniform_int(0, 3));
    int k = 1 + static_cast<int>(rng.uniform_int(0, 9));
    std::vector<RecommendationList> lists;
    std::vector<ItemId> gts;
    for (int l = 0; l < n_lists; ++l) {
      lists.push_back(random_list(1 + static_cast<int>(rng.uniform_int(0, 11))));
      gts.push_back(universe[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<long long>(universe.size()) - 1))]);
    }

    // rank metrics against direct formula evaluation
    for (int l = 0; l < n_lists; ++l) {
      int rank = 0;
      for (std::size_t i = 0; i < lists[l].size() && i < static_cast<std::size_t>(k); ++i)
        if (lists[l][i].item_id == gts[l]) {
          rank = static_cast<int>(i) + 1;
          break;
        }
      double want_hr = rank > 0 ? 1.0 : 0.0;
      double want_mrr = rank > 0 ? 1.0 / rank : 0.0;
      double want_ndcg = rank > 0 ? 1.0 / std::log2(rank + 1.0) : 0.0;
      c.require(std::abs(hr_at_k(lists[l], gts[l], k) - want_hr) < 1e-9, "hr mismatch");
      c.require(std::abs(mrr_at_k(lists[l], gts[l], k) - want_mrr) < 1e-9, "mrr mismatch");
      c.require(std::abs(ndcg_at_k(lists[l], gts[l], k) - want_ndcg) < 1e-9, "ndcg mismatch");
    }

    // coverage: distinct ids in the top-k slots over the catalog size
    std::set<ItemId> distinct;
    for (const auto& list : lists)
      for (std::size_t i = 0; i < list.size() && i < static_cast<std::size_t>(k); ++i)
        distinct.insert(list[i].item_id);
    double want_cov = static_cast<double>(distinct.size()) / catalog_n;
    c.require(std::abs(catalog_coverage(lists, static_cast<std::size_t>(catalog_n), k) -
                       want_cov) < 1e-9,
              "coverage mismatch");

    // serendipity: sessions whose hit is an item the popularity list omits,
    // over all sessions
    RecommendationList pop_list = random_list(k);
    int unexpected = 0;
    for (int l = 0; l < n_lists; ++l) {
      bool hit = false;
      for (std::size_t i = 0; i < lists[l].size() && i < static_cast<std::size_t>(k); ++i)
        if (lists[l][i].item_id == gts[l]) hit = true;
      if (!hit) continue;
      bool in_pop = false;
      for (std::size_t i = 0; i < pop_list.size() && i < static_cast<std::size_t>(k); ++i)
        if (pop_list[i].item_id == gts[l]) in_pop = true;
      if (!in_pop) ++unexpected;
    }
    double want_ser = static_cast<double>(unexpected) / n_lists;
    c.require(std::abs(serendipity(lists, gts, pop_list, k) - want_ser) < 1e-9,
              "serendipity mismatch");

    // novelty: mean self-information over recommended slots
    PopularityCounts presence;
    std::size_t n_train = 16;
    for (const auto& id : universe)
      if (rng.uniform() < 0.7) presence[id] = rng.uniform_int(1, 12);
    double total = 0.0;
    std::size_t slots = 0;
    for (const auto& list : lists)
      for (std::size_t i = 0; i < list.size() && i < static_cast<std::size_t>(k); ++i) {
        auto it = presence.find(list[i].item_id);
        double seen = it == presence.end() ? 1.0 : static_cast<double>(it->second);
        total += -std::log2(seen / static_cast<double>(n_train));
        ++slots;
      }
    double want_nov = slots == 0 ? 0.0 : total / static_cast<double>(slots);
    c.require(std::abs(novelty(lists, presence, n_train, k) - want_nov) < 1e-9,
              "novelty mismatch");
    ++instances;
  }

  c.note(std::to_string(instances) + " random instances, six metrics each, within 1e-9");
  std::printf("[%s] criterion 3: ranking metrics match brute-force formulas — %s\n",
              c.ok ? "PASS" : "FAIL", c.detail.c_str());
  return c.ok ? kPass : kFail;
}

// ---- check 4: session-kNN scoring vs exhaustive references ---------------------

int check_sknn_oracles() {
  Check c;
  Rng rng(401);

  for (int corpus = 0; corpus < 10 && c.ok; ++corpus) {
    int n_sessions = 10 + static_cast<int>(rng.uniform_int(0, 40));  // <= 50
    int n_items = 12;
    std::vector<std::vector<ItemId>> raw;
    for (int s = 0; s < n_sessions; ++s) {
      int len = 2 + static_cast<int>(rng.uniform_int(0, 5));
      std::vector<ItemId> items;
      for (int i = 0; i < len; ++i)
        items.push_back("i" + std::to_string(rng.uniform_int(0, n_items - 1)));
      raw.push_back(items);
    }
    Dataset ds = testutil::make_dataset(raw);
    int k_n = corpus % 3 == 0 ? 3 : (corpus % 3 == 1 ? 10 : 50);

    SknnOptions opts;
    opts.k_neighbours = k_n;
    SknnModel model = fit_sknn(ds, opts);

    for (int p = 0; p < 15 && c.ok; ++p) {
      int len = 1 + static_cast<int>(rng.uniform_int(0, 3));
      std::vector<ItemId> prompt;
      for (int i = 0; i < len; ++i)
        prompt.push_back("i" + std::to_string(rng.uniform_int(0, n_items - 1)));

      // exhaustive reference: binary cosine against every training session,
      // truncation by (similarity desc, recency desc, id asc), then summation
      std::set<ItemId> pset(prompt.begin(), prompt.end());
      struct Ref {
        double sim;
        std::int64_t ts;
        SessionId id;
        std::size_t index;
      };
      std::vector<Ref> sims;
      for (std::size_t s = 0; s < ds.sessions.size(); ++s) {
        std::set<ItemId> train_set(ds.sessions[s].items.begin(), ds.sessions[s].items.end());
        std::size_t inter = 0;
        for (const auto& id : pset) inter += train_set.count(id);
        if (inter == 0) continue;
        double sim = static_cast<double>(inter) /
                     (std::sqrt(static_cast<double>(pset.size())) *
                      std::sqrt(static_cast<double>(train_set.size())));
        sims.push_back({sim, ds.sessions[s].start_ts, ds.sessions[s].session_id, s});
      }
      std::sort(sims.begin(), sims.end(), [](const Ref& a, const Ref& b) {
        if (a.sim != b.sim) return a.sim > b.sim;
        if (a.ts != b.ts) return a.ts > b.ts;
        return a.id < b.id;
      });
      if (static_cast<int>(sims.size()) > k_n) sims.resize(static_cast<std::size_t>(k_n));

      std::map<ItemId, double> want;
      for (const auto& r : sims) {
        std::set<ItemId> train_set(ds.sessions[r.index].items.begin(),
                                   ds.sessions[r.index].items.end());
        for (const auto& id : train_set) want[id] += r.sim;
      }

      auto got = score_sknn(model, prompt);
      c.require(got.size() == want.size(), "candidate set size mismatch");
      for (const auto& [id, score] : want) {
        auto it = got.find(id);
        c.require(it != got.end() && std::abs(it->second - score) < 1e-9,
                  "score mismatch for " + id);
      }
    }

    // embedding variant: neighbour sets against a brute-force cosine scan
    auto emb = std::make_shared<EmbeddingMatrix>(
        normalize_rows(synthetic_embeddings(ds.catalog, 8, 77 + corpus)));
    SknnEmbOptions eopts;
    eopts.k_neighbours = k_n;
    eopts.train_pooling = PoolingStrategy::parse("mean");
    eopts.prompt_pooling = PoolingStrategy::parse("mean");
    SknnModel emodel = fit_sknn_emb(ds, emb, eopts);

    for (int p = 0; p < 10 && c.ok; ++p) {
      const Session& probe = ds.sessions[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<long long>(ds.sessions.size()) - 1))];

      auto mean_pool = [&](const std::vector<ItemId>& items) {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(emb->dim);
        for (const auto& id : items) v += emb->row(id);
        return Eigen::VectorXd(v / static_cast<double>(items.size()));
      };
      Eigen::VectorXd pv = mean_pool(probe.items);

      struct Ref {
        double sim;
        std::int64_t ts;
        SessionId id;
        std::size_t index;
      };
      std::vector<Ref> sims;
      for (std::size_t s = 0; s < ds.sessions.size(); ++s) {
        Eigen::VectorXd sv = mean_pool(ds.sessions[s].items);
        double denom = pv.norm() * sv.norm();
        double sim = denom < 1e-300 ? 0.0 : pv.dot(sv) / denom;
        if (sim <= 0.0) continue;
        sims.push_back({sim, ds.sessions[s].start_ts, ds.sessions[s].session_id, s});
      }
      std::sort(sims.begin(), sims.end(), [](const Ref& a, const Ref& b) {
        if (a.sim != b.sim) return a.sim > b.sim;
        if (a.ts != b.ts) return a.ts > b.ts;
        return a.id < b.id;
      });
      std::size_t keep = std::min(sims.size(), static_cast<std::size_t>(k_n));

      // set equivalence with a tolerance band at the truncation boundary:
      // sessions with mathematically equal pooled means can differ by one ulp
      // depending on summation order, so exact rank among ties is undefined
      std::map<std::size_t, double> oracle_sim;
      for (const auto& r : sims) oracle_sim[r.index] = r.sim;
      double boundary = keep == 0 ? 0.0 : sims[keep - 1].sim;

      auto got = sknn_neighbours(emodel, probe.items);
      c.require(got.size() == keep, "neighbour count mismatch");
      for (std::size_t i = 0; i < got.size() && c.ok; ++i) {
        auto it = oracle_sim.find(got[i].session_index);
        c.require(it != oracle_sim.end(), "neighbour outside the positive-cosine candidates");
        if (!c.ok) break;
        c.require(std::abs(got[i].similarity - it->second) < 1e-9,
                  "neighbour similarity mismatch");
        c.require(it->second >= boundary - 1e-9, "kept a neighbour below the top-k boundary");
        if (i > 0)
          c.require(got[i - 1].similarity >= got[i].similarity - 1e-9,
                    "neighbours not ordered by similarity");
      }
      // everything strictly above the boundary must have been kept
      std::set<std::size_t> got_set;
      for (const auto& nb : got) got_set.insert(nb.session_index);
      for (const auto& r : sims)
        if (r.sim > boundary + 1e-9)
          c.require(got_set.count(r.index) == 1, "dropped a clear top-k neighbour");
    }
  }

  c.note("10 corpora, binary scoring + embedding neighbour sets, within 1e-9");
  std::printf("[%s] criterion 4: session-kNN matches exhaustive double-loop references — %s\n",
              c.ok ? "PASS" : "FAIL", c.detail.c_str());
  return c.ok ? kPass : kFail;
}

// ---- check 5: PCA eigendecomposition + random-projection distortion ---------------

int check_reduction_oracles() {
  Check c;
  Rng rng(501);

  for (int dim : {16, 64}) {
    int rows = dim == 16 ? 30 : 80;
    Eigen::MatrixXd X(rows, dim);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < dim; ++j) X(i, j) = rng.gaussian() * (1.0 + j % 3);

    int k = dim / 2;
    ReductionModel pca = fit_pca(X, k);

    // dense covariance eigendecomposition as the reference
    Eigen::RowVectorXd mean = X.colwise().mean();
    Eigen::MatrixXd centered = X.rowwise() - mean;
    Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(rows - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    c.require(solver.info() == Eigen::Success, "reference eigensolver failed");

    for (int i = 0; i < k; ++i) {
      double ref_val = solver.eigenvalues()(dim - 1 - i);  // descending
      c.require(std::abs(pca.eigenvalues[static_cast<std::size_t>(i)] - ref_val) <=
                    1e-6 * std::max(1.0, std::abs(ref_val)),
                "eigenvalue " + std::to_string(i) + " drifts from the dense reference");
      Eigen::VectorXd ref_vec = solver.eigenvectors().col(dim - 1 - i);
      double align = std::abs(pca.projection.row(i).dot(ref_vec));
      c.require(std::abs(align - 1.0) < 1e-6,
                "component " + std::to_string(i) + " not aligned up to sign");
    }
    // ratios share one positive denominator, so the eigenvalue order decides
    double total_var = cov.trace();
    c.require(total_var > 0.0, "degenerate covariance");
    for (Eigen::Index i = 1; i < pca.eigenvalues.size(); ++i)
      c.require(pca.eigenvalues[i] / total_var <= pca.eigenvalues[i - 1] / total_var + 1e-12,
                "explained variance ratio increases");
  }

  // distance preservation of the Gaussian projection: 50 points, 100 -> 40
  int n = 50, d = 100, k = 40;
  Eigen::MatrixXd P(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) P(i, j) = rng.gaussian();
  ReductionModel rp = fit_random_projection(d, k, 505);
  Eigen::MatrixXd Q = reduce_transform(rp, P);

  int ok_pairs = 0, pairs = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double before = (P.row(i) - P.row(j)).norm();
      double after = (Q.row(i) - Q.row(j)).norm();
      ++pairs;
      if (std::abs(after / before - 1.0) <= 0.30) ++ok_pairs;
    }
  double frac = static_cast<double>(ok_pairs) / pairs;
  c.require(frac >= 0.95, "only " + std::to_string(frac * 100) +
                              "% of pairs kept distance within +-30%");
  c.note("PCA vs dense eigensolver at 1e-6; " + std::to_string(ok_pairs) + "/" +
         std::to_string(pairs) + " projected pairs within +-30% distortion");

  std::printf("[%s] criterion 5: PCA matches a dense eigendecomposition; random projection "
              "preserves distances — %s\n",
              c.ok ? "PASS" : "FAIL", c.detail.c_str());
  return c.ok ? kPass : kFail;
}

// ---- check 6: recurrent model gradients, overfit, embedding init ----------------

int check_gru() {
  Check c;

  Dataset tiny = testutil::make_dataset({{"a", "b", "c", "d"}, {"b", "d", "a"}, {"c", "a", "b"}});
  GruConfig cfg;
  cfg.embedding_dim = 3;
  cfg.hidden_dim = 4;
  cfg.max_session_length = 6;
  cfg.batch_size = 2;
  cfg.seed = 5;

  double err_untied = gru_gradient_check(cfg, tiny);
  c.require(err_untied < 1e-3,
            "untied gradient check error " + std::to_string(err_untied));
  GruConfig tied = cfg;
  tied.tied_output = true;
  tied.embedding_dim = tied.hidden_dim = 4;
  double err_tied = gru_gradient_check(tied, tiny);
  c.require(err_tied < 1e-3, "tied gradient check error " + std::to_string(err_tied));

  // two repeated patterns must be memorized within 200 epochs
  std::vector<std::vector<ItemId>> patterns;
  for (int r = 0; r < 6; ++r) {
    patterns.push_back({"a", "b", "c"});
    patterns.push_back({"d", "e", "f"});
  }
  Dataset fixture = testutil::make_dataset(patterns);
  GruConfig ocfg;
  ocfg.embedding_dim = 8;
  ocfg.hidden_dim = 12;
  ocfg.learning_rate = 0.5;
  ocfg.epochs = 200;
  ocfg.batch_size = 4;
  ocfg.seed = 3;
  GruModel m = train_gru(ocfg, {}, fixture);
  auto top1 = [&](const std::vector<ItemId>& prompt) {
    return gru_recommend(m, prompt, 1).at(0).item_id;
  };
  c.require(top1({"a", "b"}) == "c", "overfit model missed a->b->c");
  c.require(top1({"d", "e"}) == "f", "overfit model missed d->e->f");

  // init-from-matrix rows equal the reduction transform applied per item
  ItemCatalog catalog = testutil::make_catalog(12);
  EmbeddingMatrix emb = synthetic_embeddings(catalog, 16, 61);
  ReductionModel pca = fit_pca(emb.vectors, 6);
  std::vector<ItemId> vocab = emb.item_ids;
  GruConfig icfg;
  icfg.embedding_dim = 6;
  GruInitSpec init;
  init.kind = GruInitSpec::Kind::from_matrix;
  init.matrix = &emb;
  init.reduction = &pca;
  Eigen::MatrixXd table = init_embedding_table(vocab, icfg, init);
  for (std::size_t r = 0; r < vocab.size(); ++r) {
    Eigen::VectorXd want = reduce_transform_vector(pca, emb.row(vocab[r]));
    c.require((table.row(static_cast<Eigen::Index>(r)).transpose() - want).cwiseAbs().maxCoeff() <
                  1e-9,
              "initialized row " + std::to_string(r) + " drifts from the reduction oracle");
  }

  c.note("gradient errors " + std::to_string(err_untied) + " / " + std::to_string(err_tied) +
         "; both patterns memorized; init rows at 1e-9");
  std::printf("[%s] criterion 6: recurrent model gradients, overfit, and embedding init — %s\n",
              c.ok ? "PASS" : "FAIL", c.detail.c_str());
  return c.ok ? kPass : kFail;
}

// ---- check 7: pooling weights ------------------------------------------------

int check_pooling() {
  Check c;
  const DecayTechnique techniques[] = {
      DecayTechnique::constant_linear, DecayTechnique::scaling_linear,
      DecayTechnique::scaling_quadratic, DecayTechnique::scaling_cubic,
      DecayTechnique::log_decay, DecayTechnique::harmonic,
      DecayTechnique::squared_harmonic};

  for (DecayTechnique t : techniques) {
    for (int n : {1, 2, 3, 5, 8, 13, 21, 40}) {
      std::vector<double> w = decay_weights(t, n);
      c.require(static_cast<int>(w.size()) == n, "weight count mismatch");
      double sum = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        c.require(w[i] >= 0.0, "negative weight");
        // weights are stored oldest-first, so recency means non-decreasing here
        if (i > 0) c.require(w[i] + 1e-12 >= w[i - 1], "older item outweighs newer one");
        sum += w[i];
      }
      c.require(std::abs(sum - 1.0) < 1e-9, "weights not normalized");
    }
  }

  // pooled vectors match an explicit weighted sum
  Rng rng(701);
  Eigen::MatrixXd rows(6, 5);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 5; ++j) rows(i, j) = rng.uniform(-2.0, 2.0);
  for (DecayTechnique t : techniques) {
    PoolingStrategy strat;
    strat.kind = PoolKind::weighted;
    strat.technique = t;
    Eigen::VectorXd got = pool_session(rows, strat);
    std::vector<double> w = decay_weights(t, 6);
    Eigen::VectorXd want = Eigen::VectorXd::Zero(5);
    for (int i = 0; i < 6; ++i) want += w[static_cast<std::size_t>(i)] * rows.row(i).transpose();
    c.require((got - want).cwiseAbs().maxCoeff() < 1e-9, "pooled vector drifts from manual sum");
  }

  c.note("7 techniques x 8 lengths normalized/non-negative/recency-ordered; sums at 1e-9");
  std::printf("[%s] criterion 7: decay-weight pooling properties and weighted sums — %s\n",
              c.ok ? "PASS" : "FAIL", c.detail.c_str());
  return c.ok ? kPass : kFail;
}

// ---- check 8: hybrid identities ---------------------------------------------

int check_hybrids() {
  Check c;
  Rng rng(801);

  std::vector<std::vector<ItemId>> raw;
  for (int s = 0; s < 40; ++s) {
    int len = 2 + static_cast<int>(rng.uniform_int(0, 4));
    std::vector<ItemId> items;
    for (int i = 0; i < len; ++i) {
      // zipf-ish popularity so the quantile router has real spread
      long long x = std::min(rng.uniform_int(0, 14), rng.uniform_int(0, 14));
      items.push_back("i" + std::to_string(x));
    }
    raw.push_back(items);
  }
  Dataset ds = testutil::make_dataset(raw);
  auto emb = std::make_shared<EmbeddingMatrix>(
      normalize_rows(synthetic_embeddings(ds.catalog, 8, 88, &ds.sessions)));

  EmbeddingSimOptions sim_opts;
  sim_opts.pooling = PoolingStrategy::parse("weighted:harmonic");
  SknnOptions knn_opts;
  knn_opts.k_neighbours = 10;

  auto unpopular = std::make_shared<EmbeddingSimRecommender>(emb, sim_opts);
  auto popular = std::make_shared<SknnRecommender>(knn_opts);
  SwitchHybrid hybrid(0.5, unpopular, popular);
  hybrid.fit(ds);

  EmbeddingSimRecommender solo_sim(emb, sim_opts);
  solo_sim.fit(ds);
  SknnRecommender solo_knn(knn_opts);
  solo_knn.fit(ds);

  int routed_unpopular = 0;
  for (int p = 0; p < 30; ++p) {
    const Session& s = ds.sessions[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<long long>(ds.sessions.size()) - 1))];
    RecommendationList got = hybrid.recommend(s.items, 10);
    bool unpop = hybrid.routes_to_unpopular(s.items);
    routed_unpopular += unpop ? 1 : 0;
    RecommendationList want = unpop ? solo_sim.recommend(s.items, 10)
                                    : solo_knn.recommend(s.items, 10);
    c.require(got.size() == want.size(), "routed list length mismatch");
    for (std::size_t i = 0; i < got.size() && c.ok; ++i) {
      c.require(got[i].item_id == want[i].item_id, "routed item mismatch");
      c.require(got[i].score == want[i].score, "routed score mismatch");
    }
  }
  c.require(routed_unpopular > 0 && routed_unpopular < 30,
            "router never exercised both sides (" + std::to_string(routed_unpopular) + "/30)");

  // degenerate cutoffs: 0 routes everything to the popular side, 1 the other way
  SwitchHybrid always_pop(0.0, unpopular, popular);
  always_pop.fit(ds);
  SwitchHybrid always_unpop(1.0, unpopular, popular);
  always_unpop.fit(ds);
  for (const auto& s : ds.sessions) {
    c.require(!always_pop.routes_to_unpopular(s.items), "cutoff 0 routed to the unpopular side");
    c.require(always_unpop.routes_to_unpopular(s.items), "cutoff 1 routed to the popular side");
  }

  // filtered hybrid output must be an ordered subsequence of the raw ranking
  FilteredHybrid filtered(emb, sim_opts, 0.5, std::nullopt);
  filtered.fit(ds);
  for (int p = 0; p < 20 && c.ok; ++p) {
    const Session& s = ds.sessions[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<long long>(ds.sessions.size()) - 1))];
    int k = 5;
    RecommendationList got = filtered.recommend(s.items, k);
    RecommendationList base = solo_sim.recommend(s.items, 5 * k);
    std::size_t cursor = 0;
    for (const auto& si : got) {
      while (cursor < base.size() && base[cursor].item_id != si.item_id) ++cursor;
      c.require(cursor < base.size(), "filtered output is not a subsequence of the base list");
      ++cursor;
    }
  }

  c.note("switch routes identically to its parts on 30 prompts; filter keeps base order");
  std::printf("[%s] criterion 8: hybrid routing and filtering identities — %s\n",
              c.ok ? "PASS" : "FAIL", c.detail.c_str());
  return c.ok ? kPass : kFail;
}

// ---- check 9: prompt/completion corpora against frozen bytes ---------------------

// Mirrors the fixture the unit suite froze its goldens from.
ItemCatalog corpus_catalog() {
  std::vector<CatalogEntry> entries{
      {"i1", "walnut desk lamp", {"lighting"}},   {"i2", "oak reading chair", {"furniture"}},
      {"i3", "brass floor lamp", {"lighting"}},   {"i4", "linen throw pillow", {"textile"}},
      {"i5", "wool area rug", {"textile"}},       {"i6", "ceramic table vase", {"decor"}},
  };
  return ItemCatalog(std::move(entries));
}

int check_finetune_corpora() {
  Check c;
  Dataset ds = testutil::make_dataset({{"i1", "i3", "i6"},
                                       {"i2", "i4", "i5"},
                                       {"i4", "i5", "i2", "i6"},
                                       {"i3", "i1"},
                                       {"i6", "i5", "i4"}},
                                      corpus_catalog());
  auto emb = std::make_shared<EmbeddingMatrix>(
      normalize_rows(synthetic_embeddings(ds.catalog, 12, 11, &ds.sessions)));
  EmbeddingSimOptions teacher_opts;
  teacher_opts.pooling = PoolingStrategy::parse("weighted:harmonic");
  EmbeddingSimRecommender teacher(emb, teacher_opts);
  teacher.fit(ds);

  std::map<std::string, std::vector<PromptPair>> corpora;
  corpora["next_item.jsonl"] = build_next_item_pairs(ds);
  corpora["ranked_list.jsonl"] = build_ranked_list_pairs(ds, teacher, 4);
  corpora["category.jsonl"] = build_category_pairs(ds, *emb, 3, 2, 7);
  corpora["reorder.jsonl"] = build_reorder_pairs(ds, teacher, 4, 7);

  TempDir tmp("acceptance_corpora");
  for (const auto& [name, pairs] : corpora) {
    std::string golden = std::string(SESSIONLAB_TEST_DATA_DIR) + "/golden/" + name;
    if (!std::filesystem::exists(golden)) {
      c.require(false, "golden file missing: " + golden);
      break;
    }
    write_pairs_jsonl(pairs, tmp.file(name));
    c.require(read_text_file(golden) == read_text_file(tmp.file(name)),
              "byte drift against " + name);
  }

  // every reorder completion = permutation of the prompt options, truth first
  for (const auto& pair : corpora["reorder.jsonl"]) {
    std::size_t start = pair.prompt.find("Options:\n");
    std::size_t stop = pair.prompt.rfind("\n\n###\n\n");
    c.require(start != std::string::npos && stop != std::string::npos, "options block missing");
    if (!c.ok) break;
    std::multiset<std::string> options;
    for (const auto& line :
         split_string(pair.prompt.substr(start + 9, stop - start - 9), '\n'))
      if (!line.empty()) options.insert(line);
    auto completion = split_string(pair.completion, '\n');
    c.require(std::multiset<std::string>(completion.begin(), completion.end()) == options,
              "completion is not a permutation of the options");
    const Session* s = nullptr;
    for (const auto& cand : ds.sessions)
      if (cand.session_id == pair.session_id) s = &cand;
    c.require(s && completion.front() == ds.catalog.at(s->items.back()).text,
              "ground truth is not at the head of the completion");
  }
  for (const auto& pair : corpora["ranked_list.jsonl"]) {
    const Session* s = nullptr;
    for (const auto& cand : ds.sessions)
      if (cand.session_id == pair.session_id) s = &cand;
    c.require(s && split_string(pair.completion, '\n').front() ==
                       ds.catalog.at(s->items.back()).text,
              "ranked completion does not start with the ground truth");
  }

  // exact catalog names resolve to themselves at similarity 1
  SyntheticTextEmbedder embedder(12, 11);
  std::vector<std::string> names;
  for (const auto& e : ds.catalog.entries()) names.push_back(e.text);
  auto rs = resolve_generations(names, ds.catalog, *emb, embedder);
  for (std::size_t i = 0; i < rs.size(); ++i) {
    c.require(rs[i].item_id == ds.catalog.entries()[i].item_id, "exact name resolved elsewhere");
    c.require(std::abs(rs[i].similarity - 1.0) <= 1e-6, "exact-match similarity drifts from 1");
    c.require(!rs[i].hallucination, "exact name flagged as hallucination");
  }

  c.note("4 corpora byte-identical; reorder permutations verified on 100% of pairs; "
         "resolver exact at 1.0");
  std::printf("[%s] criterion 9: fine-tune corpora frozen byte-for-byte — %s\n",
              c.ok ? "PASS" : "FAIL", c.detail.c_str());
  return c.ok ? kPass : kFail;
}

// ---- check 10: end-to-end separation on the synthetic corpus ---------------------

int check_end_to_end() {
  Check c;
  auto t0 = std::chrono::steady_clock::now();

  TempDir tmp("acceptance_e2e");
  SyntheticSpec spec;  // 1000 sessions, 200 items, topic-structured
  generate_synthetic_corpus(spec, tmp.file("interactions.csv"), tmp.file("catalog.jsonl"));
  Dataset ds = ingest(tmp.file("interactions.csv"), tmp.file("catalog.jsonl"), {});
  SplitSpec split = temporal_split(ds, 0.2);
  auto emb = std::make_shared<EmbeddingMatrix>(normalize_rows(
      synthetic_embeddings(ds.catalog, 32, 7, &split.train.sessions)));

  EvalOptions opts;
  opts.cutoffs = {20};
  auto ndcg20 = [&](Recommender& model) {
    model.fit(split.train);
    return evaluate(model, split.train, split.test, opts).at.at(20).ndcg;
  };

  MostPopularRecommender pop;
  double pop_ndcg = ndcg20(pop);

  EmbeddingSimOptions sim_opts;
  sim_opts.pooling = PoolingStrategy::parse("weighted:harmonic");
  EmbeddingSimRecommender seqsim(emb, sim_opts);
  double seqsim_ndcg = ndcg20(seqsim);

  SknnEmbOptions knn_opts;
  knn_opts.train_pooling = PoolingStrategy::parse("mean");
  knn_opts.prompt_pooling = PoolingStrategy::parse("mean");
  SknnRecommender sknn_emb(knn_opts, emb);
  double sknn_ndcg = ndcg20(sknn_emb);

  double secs = seconds_since(t0);

  c.require(pop_ndcg > 0.0, "popularity baseline scored zero");
  c.require(seqsim_ndcg >= 2.0 * pop_ndcg,
            "embedding similarity " + std::to_string(seqsim_ndcg) + " < 2x popularity " +
                std::to_string(pop_ndcg));
  c.require(sknn_ndcg >= 2.0 * pop_ndcg,
            "embedding kNN " + std::to_string(sknn_ndcg) + " < 2x popularity " +
                std::to_string(pop_ndcg));
  c.require(secs < 600.0, "took " + std::to_string(secs) + "s, limit 600s");

  // regression lock: once frozen, the exact scores must reproduce
  if (kLockedPopNdcg20 >= 0.0) {
    c.require(std::abs(pop_ndcg - kLockedPopNdcg20) < 1e-9, "popularity score drifted");
    c.require(std::abs(seqsim_ndcg - kLockedSeqsimNdcg20) < 1e-9,
              "embedding-similarity score drifted");
    c.require(std::abs(sknn_ndcg - kLockedSknnEmbNdcg20) < 1e-9, "embedding-kNN score drifted");
  }

  std::ostringstream note;
  note.precision(17);
  note << "ndcg@20 pop=" << pop_ndcg << " seqsim=" << seqsim_ndcg << " sknn_emb=" << sknn_ndcg
       << " in " << secs << "s";
  c.note(note.str());

  std::printf("[%s] criterion 10: similarity models beat popularity 2x end to end — %s\n",
              c.ok ? "PASS" : "FAIL", c.detail.c_str());
  return c.ok ? kPass : kFail;
}

// ---- check 11: tuner recovery -------------------------------------------------

int check_tuner() {
  Check c;
  SearchSpace space{{"x", ParamDomain::int_range(0, 20)}};
  auto objective = [](const nlohmann::json& cfg, int) {
    double x = cfg.at("x").get<double>();
    return -(x - 7.0) * (x - 7.0);
  };

  SearchOptions opts;
  opts.budget = 200;
  opts.seed = 17;
  opts.early_stop_patience = 1000;
  SearchResult res = random_search(space, opts, objective);
  c.require(res.best.config.at("x").get<int>() == 7,
            "winner x = " + res.best.config.at("x").dump() + ", want 7");

  for (std::size_t i = 0; i < 10 && i < res.trials.size(); ++i)
    c.require(res.trials[i].status != Trial::Status::pruned,
              "trial " + std::to_string(i + 1) + " was pruned during warm-up");

  SearchResult res2 = random_search(space, opts, objective);
  c.require(res2.best.config == res.best.config, "same seed found a different winner");
  c.require(res2.trials.size() == res.trials.size(), "same seed ran a different trial count");

  c.note("optimum x=7 recovered over " + std::to_string(res.trials.size()) +
         " trials; warm-up unpruned; seed-stable");
  std::printf("[%s] criterion 11: random search recovers the planted optimum — %s\n",
              c.ok ? "PASS" : "FAIL", c.detail.c_str());
  return c.ok ? kPass : kFail;
}

int run_criterion(int n) {
  try {
    switch (n) {
      case 1: return check_beauty_preprocessing();
      case 2: return check_beauty_coverage();
      case 3: return check_metric_oracles();
      case 4: return check_sknn_oracles();
      case 5: return check_reduction_oracles();
      case 6: return check_gru();
      case 7: return check_pooling();
      case 8: return check_hybrids();
      case 9: return check_finetune_corpora();
      case 10: return check_end_to_end();
      case 11: return check_tuner();
      default:
        std::fprintf(stderr, "unknown criterion %d (valid: 1-11)\n", n);
        return kFail;
    }
  } catch (const std::exception& ex) {
    std::printf("[FAIL] criterion %d: unexpected error — %s\n", n, ex.what());
    return kFail;
  }
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg == "--criterion" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else if (arg == "--help" || arg == "-h") {
      std::printf("usage: %s [--criterion N]\n", argv[0]);
      return 0;
    } else {
      std::fprintf(stderr, "unknown argument: %s\n", arg.c_str());
      return 2;
    }
  }

  if (only != 0) return run_criterion(only);

  int failed = 0, skipped = 0, passed = 0;
  for (int n = 1; n <= 11; ++n) {
    int rc = run_criterion(n);
    if (rc == kSkip) ++skipped;
    else if (rc == kPass) ++passed;
    else ++failed;
  }
  std::printf("%d passed, %d failed, %d skipped\n", passed, failed, skipped);
  return failed == 0 ? 0 : 1;
}
