#include "sessionlab/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace sessionlab {

using nlohmann::json;

int rank_of(const RecommendationList& list, const ItemId& gt) {
  for (std::size_t i = 0; i < list.size(); ++i)
    if (list[i].item_id == gt) return static_cast<int>(i) + 1;
  return 0;
}

double hr_at_k(const RecommendationList& list, const ItemId& gt, int k) {
  int r = rank_of(list, gt);
  return (r >= 1 && r <= k) ? 1.0 : 0.0;
}

double mrr_at_k(const RecommendationList& list, const ItemId& gt, int k) {
  int r = rank_of(list, gt);
  return (r >= 1 && r <= k) ? 1.0 / r : 0.0;
}

double ndcg_at_k(const RecommendationList& list, const ItemId& gt, int k) {
  int r = rank_of(list, gt);
  // single relevant item: ideal DCG is 1, so NDCG = 1/log2(rank+1)
  return (r >= 1 && r <= k) ? 1.0 / std::log2(static_cast<double>(r) + 1.0) : 0.0;
}

double catalog_coverage(const std::vector<RecommendationList>& lists, std::size_t catalog_size,
                        int k) {
  if (catalog_size == 0) throw Error("catalog_coverage: empty catalog");
  std::set<ItemId> seen;
  for (const auto& list : lists) {
    std::size_t limit = std::min(list.size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < limit; ++i) seen.insert(list[i].item_id);
  }
  return static_cast<double>(seen.size()) / static_cast<double>(catalog_size);
}

double serendipity(const std::vector<RecommendationList>& lists, const std::vector<ItemId>& gts,
                   const RecommendationList& popularity_top_k, int k) {
  if (lists.size() != gts.size()) throw Error("serendipity: list/gt size mismatch");
  if (lists.empty()) return 0.0;
  std::set<ItemId> pop;
  std::size_t limit = std::min(popularity_top_k.size(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < limit; ++i) pop.insert(popularity_top_k[i].item_id);
  double sum = 0.0;
  for (std::size_t i = 0; i < lists.size(); ++i) {
    if (hr_at_k(lists[i], gts[i], k) > 0.0 && !pop.count(gts[i])) sum += 1.0;
  }
  return sum / static_cast<double>(lists.size());
}

double novelty(const std::vector<RecommendationList>& lists, const PopularityCounts& presence,
               std::size_t n_train_sessions, int k) {
  if (n_train_sessions == 0) throw Error("novelty: no training sessions");
  double sum = 0.0;
  std::size_t slots = 0;
  for (const auto& list : lists) {
    std::size_t limit = std::min(list.size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < limit; ++i) {
      auto it = presence.find(list[i].item_id);
      long long c = it == presence.end() ? 1 : std::max<long long>(1, it->second);
      sum += -std::log2(static_cast<double>(c) / static_cast<double>(n_train_sessions));
      ++slots;
    }
  }
  return slots == 0 ? 0.0 : sum / static_cast<double>(slots);
}

// ---- report ---------------------------------------------------------------

std::string MetricsReport::to_json_string() const {
  json at_j = json::object();
  for (const auto& [k, m] : at) {
    at_j[std::to_string(k)] = json{{"ndcg", m.ndcg},
                                   {"hr", m.hr},
                                   {"mrr", m.mrr},
                                   {"catalog_coverage", m.catalog_coverage},
                                   {"serendipity", m.serendipity},
                                   {"novelty", m.novelty}};
  }
  json j{{"model", model_name},
         {"config_hash", config_hash},
         {"version", version},
         {"at", at_j},
         {"n_test", n_test},
         {"n_excluded", n_excluded},
         {"runtime_seconds", runtime_seconds},
         {"exclusion_reasons", exclusion_reasons}};
  return j.dump(2) + "\n";
}

MetricsReport MetricsReport::from_json_string(const std::string& text) {
  json j = json::parse(text);
  MetricsReport r;
  r.model_name = j.at("model").get<std::string>();
  r.config_hash = j.value("config_hash", std::string());
  r.version = j.value("version", std::string());
  for (auto it = j.at("at").begin(); it != j.at("at").end(); ++it) {
    CutoffMetrics m;
    m.ndcg = it.value().at("ndcg").get<double>();
    m.hr = it.value().at("hr").get<double>();
    m.mrr = it.value().at("mrr").get<double>();
    m.catalog_coverage = it.value().at("catalog_coverage").get<double>();
    m.serendipity = it.value().at("serendipity").get<double>();
    m.novelty = it.value().at("novelty").get<double>();
    r.at[std::stoi(it.key())] = m;
  }
  r.n_test = j.at("n_test").get<std::size_t>();
  r.n_excluded = j.at("n_excluded").get<std::size_t>();
  r.runtime_seconds = j.value("runtime_seconds", 0.0);
  if (j.contains("exclusion_reasons"))
    r.exclusion_reasons = j["exclusion_reasons"].get<std::vector<std::string>>();
  return r;
}

MetricsReport evaluate(const Recommender& model, const Dataset& train,
                       const std::vector<TestCase>& test, const EvalOptions& opts) {
  if (test.empty()) throw Error("evaluate: empty test set");
  if (opts.cutoffs.empty()) throw Error("evaluate: no cutoffs requested");
  for (int k : opts.cutoffs)
    if (k < 1) throw Error("evaluate: cutoffs must be positive");
  int max_k = *std::max_element(opts.cutoffs.begin(), opts.cutoffs.end());

  auto t0 = std::chrono::steady_clock::now();

  // one recommendation per test case at max cutoff; slot-indexed for
  // determinism under any job count
  std::vector<RecommendationList> lists(test.size());
  std::vector<std::string> errors(test.size());
  std::vector<char> failed(test.size(), 0);

  auto worker = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      try {
        lists[i] = model.recommend(test[i].prompt, max_k);
      } catch (const std::exception& ex) {
        failed[i] = 1;
        errors[i] = ex.what();
      }
    }
  };

  int jobs = std::max(1, opts.jobs);
  if (jobs == 1 || test.size() < 2) {
    worker(0, test.size());
  } else {
    std::vector<std::thread> threads;
    std::size_t chunk = (test.size() + jobs - 1) / static_cast<std::size_t>(jobs);
    for (std::size_t b = 0; b < test.size(); b += chunk)
      threads.emplace_back(worker, b, std::min(test.size(), b + chunk));
    for (auto& t : threads) t.join();
  }

  MetricsReport report;
  report.model_name = model.name();
  report.config_hash = fnv1a64_hex(model.config_summary());
  report.version = kVersion;
  report.n_test = test.size();

  std::vector<RecommendationList> ok_lists;
  std::vector<ItemId> ok_gts;
  std::set<std::string> reasons;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (failed[i]) {
      ++report.n_excluded;
      if (reasons.size() < 5) reasons.insert(errors[i]);
      continue;
    }
    ok_lists.push_back(std::move(lists[i]));
    ok_gts.push_back(test[i].ground_truth);
  }
  report.exclusion_reasons.assign(reasons.begin(), reasons.end());
  if (ok_lists.empty()) throw Error("evaluate: every test prompt failed");

  // duplicate check: a list with repeats is a contract violation, not a metric
  for (const auto& list : ok_lists) {
    std::set<ItemId> seen;
    for (const auto& si : list)
      if (!seen.insert(si.item_id).second)
        throw Error("model emitted a duplicate item: " + si.item_id);
  }

  PopularityCounts inter_counts = interaction_counts(train.sessions);
  PopularityCounts pres_counts = presence_counts(train.sessions);
  std::vector<ScoredItem> pop_scored;
  pop_scored.reserve(inter_counts.size());
  for (const auto& [id, c] : inter_counts) pop_scored.push_back({id, static_cast<double>(c)});
  RecommendationList pop_ranking = top_k_ranked(std::move(pop_scored), max_k, nullptr);

  std::size_t catalog_size = train.catalog.size();
  if (catalog_size == 0) throw Error("evaluate: train catalog is empty");

  double n_eval = static_cast<double>(ok_lists.size());
  for (int k : opts.cutoffs) {
    CutoffMetrics m;
    for (std::size_t i = 0; i < ok_lists.size(); ++i) {
      m.hr += hr_at_k(ok_lists[i], ok_gts[i], k);
      m.mrr += mrr_at_k(ok_lists[i], ok_gts[i], k);
      m.ndcg += ndcg_at_k(ok_lists[i], ok_gts[i], k);
    }
    m.hr /= n_eval;
    m.mrr /= n_eval;
    m.ndcg /= n_eval;
    m.catalog_coverage = catalog_coverage(ok_lists, catalog_size, k);
    m.serendipity = serendipity(ok_lists, ok_gts, pop_ranking, k);
    m.novelty = novelty(ok_lists, pres_counts, train.sessions.size(), k);
    report.at[k] = m;
  }

  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

void write_leaderboard(const std::vector<MetricsReport>& reports, const std::string& csv_path,
                       const std::string& md_path) {
  if (reports.empty()) throw Error("leaderboard: no reports");
  // the sort key must exist for every row, not just the pairs the sort compares
  for (const auto& r : reports)
    if (!r.at.count(20)) throw Error("leaderboard: report lacks cutoff 20: " + r.model_name);
  std::vector<const MetricsReport*> order;
  order.reserve(reports.size());
  for (const auto& r : reports) order.push_back(&r);
  auto ndcg20 = [](const MetricsReport* r) { return r->at.at(20).ndcg; };
  std::sort(order.begin(), order.end(), [&](const MetricsReport* a, const MetricsReport* b) {
    double na = ndcg20(a), nb = ndcg20(b);
    if (na != nb) return na > nb;
    return a->model_name < b->model_name;
  });

  std::ostringstream csv, md;
  csv << "model,cutoff,ndcg,hr,mrr,catalog_coverage,serendipity,novelty,n_test,n_excluded,"
         "config_hash,version\n";
  md << "| model | k | NDCG | HR | MRR | CatCov | Seren | Novelty |\n";
  md << "|---|---|---|---|---|---|---|---|\n";
  csv.setf(std::ios::fixed);
  md.setf(std::ios::fixed);
  csv.precision(6);
  md.precision(4);
  for (const MetricsReport* r : order) {
    for (const auto& [k, m] : r->at) {
      csv << r->model_name << ',' << k << ',' << m.ndcg << ',' << m.hr << ',' << m.mrr << ','
          << m.catalog_coverage << ',' << m.serendipity << ',' << m.novelty << ',' << r->n_test
          << ',' << r->n_excluded << ',' << r->config_hash << ',' << r->version << "\n";
      md << "| " << r->model_name << " | " << k << " | " << m.ndcg << " | " << m.hr << " | "
         << m.mrr << " | " << m.catalog_coverage << " | " << m.serendipity << " | " << m.novelty
         << " |\n";
    }
  }
  write_text_file(csv_path, csv.str());
  write_text_file(md_path, md.str());
}

}  // namespace sessionlab
