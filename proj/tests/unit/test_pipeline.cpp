#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "helpers.hpp"
#include "sessionlab/pipeline.hpp"

using namespace sessionlab;
using nlohmann::json;
using testutil::TempDir;

namespace fs = std::filesystem;

namespace {

// Small enough to run in seconds, large enough for non-degenerate folds.
void write_corpus(const TempDir& dir, std::uint64_t seed = 42) {
  SyntheticSpec spec;
  spec.n_sessions = 120;
  spec.n_items = 40;
  spec.n_topics = 4;
  spec.seed = seed;
  generate_synthetic_corpus(spec, dir.file("interactions.csv"), dir.file("catalog.jsonl"));
}

json base_config(const TempDir& dir) {
  return json{
      {"dataset",
       {{"interactions", dir.file("interactions.csv")},
        {"catalog", dir.file("catalog.jsonl")},
        {"format", "csv"},
        {"p_core", 2},
        {"test_fraction", 0.2}}},
      {"embeddings", {{"provider", "synthetic"}, {"dim", 16}, {"seed", 7}, {"normalize", true}}},
      {"models",
       json::array({json{{"name", "pop"}, {"type", "most_popular"}},
                    json{{"name", "seqsim"},
                         {"type", "emb_sim"},
                         {"pooling", "weighted:harmonic"}},
                    json{{"name", "sknn"}, {"type", "sknn"}, {"k_neighbours", 30}}})},
      {"eval", {{"cutoffs", {1, 5, 20}}}},
  };
}

}  // namespace

TEST_SUITE_BEGIN("pipeline");

TEST_CASE("synthetic corpus is deterministic and shaped to spec") {
  TempDir a("synth_a"), b("synth_b"), c("synth_c");
  write_corpus(a);
  write_corpus(b);
  write_corpus(c, /*seed=*/43);

  std::string csv_a = read_text_file(a.file("interactions.csv"));
  CHECK(csv_a == read_text_file(b.file("interactions.csv")));
  CHECK(read_text_file(a.file("catalog.jsonl")) == read_text_file(b.file("catalog.jsonl")));
  CHECK(csv_a != read_text_file(c.file("interactions.csv")));

  auto lines = split_string(csv_a, '\n');
  CHECK(lines[0] == "session_id,item_id,timestamp");

  // ingest it back: every session within declared length bounds, catalog full
  Dataset ds = ingest(a.file("interactions.csv"), a.file("catalog.jsonl"), {});
  CHECK(ds.sessions.size() == 120);
  CHECK(ds.catalog.size() == 40);
  for (const auto& s : ds.sessions) {
    CHECK(s.items.size() >= 3);
    CHECK(s.items.size() <= 10);
    for (std::size_t i = 1; i < s.items.size(); ++i)
      CHECK(s.items[i] != s.items[i - 1]);  // no immediate repeats
  }

  SyntheticSpec bad;
  bad.min_session_length = 5;
  bad.max_session_length = 3;
  TempDir d("synth_d");
  CHECK_THROWS_AS(generate_synthetic_corpus(bad, d.file("x.csv"), d.file("x.jsonl")),
                  ConfigError);
}

TEST_CASE("model factory reports the offending block on bad configs") {
  CHECK_THROWS_WITH_AS(make_recommender(json{{"type", "nonsense"}}, nullptr, "models[0]"),
                       doctest::Contains("models[0]"), ConfigError);
  CHECK_THROWS_WITH_AS(make_recommender(json{{"name", "x"}}, nullptr, "models[2]"),
                       doctest::Contains("models[2]"), ConfigError);
  CHECK_THROWS_AS(make_recommender(json{{"type", "emb_sim"}}, nullptr, "models[0]"), ConfigError);
}

TEST_CASE("full run produces a leaderboard, reports, and run metadata") {
  TempDir dir("pipe_full");
  write_corpus(dir);
  RunConfig cfg = RunConfig::from_json(base_config(dir), "test-config");
  std::string out = dir.file("out");

  run_pipeline(cfg, out);

  CHECK(fs::exists(out + "/dataset/sessions.jsonl"));
  CHECK(fs::exists(out + "/split/train/sessions.jsonl"));
  CHECK(fs::exists(out + "/split/test.jsonl"));
  CHECK(fs::exists(out + "/reports/pop.json"));
  CHECK(fs::exists(out + "/reports/seqsim.json"));
  CHECK(fs::exists(out + "/reports/sknn.json"));
  CHECK(!fs::exists(out + "/FAILED"));

  // leaderboard covers all three models and is sorted best-first on ndcg@20
  std::string board = read_text_file(out + "/leaderboard.csv");
  auto rows = split_string(board, '\n');
  REQUIRE(rows.size() >= 4);
  CHECK(rows[0].rfind("model,", 0) == 0);
  std::set<std::string> names;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (!rows[i].empty()) names.insert(split_string(rows[i], ',')[0]);
  CHECK(names == std::set<std::string>{"pop", "seqsim", "sknn"});

  json meta = json::parse(read_text_file(out + "/run_meta.json"));
  CHECK(meta.at("config_hash").get<std::string>() == cfg.config_hash);
  CHECK(meta.at("version").get<std::string>() == std::string(kVersion));
  CHECK(meta.at("models").size() == 3);

  // each report round-trips and carries the evaluated cutoffs
  MetricsReport rep = MetricsReport::from_json_string(read_text_file(out + "/reports/sknn.json"));
  CHECK(rep.model_name == "sknn");
  CHECK(rep.at.count(1) == 1);
  CHECK(rep.at.count(20) == 1);
  CHECK(rep.at.at(20).hr >= rep.at.at(1).hr);  // cutoff monotone
}

TEST_CASE("re-running skips finished stages and reproduces the leaderboard byte for byte") {
  TempDir dir("pipe_rerun");
  write_corpus(dir);
  RunConfig cfg = RunConfig::from_json(base_config(dir), "test-config");
  std::string out = dir.file("out");

  run_pipeline(cfg, out);
  std::string board_first = read_text_file(out + "/leaderboard.csv");
  std::string sessions_first = read_text_file(out + "/dataset/sessions.jsonl");
  auto ds_time_first = fs::last_write_time(out + "/dataset/sessions.jsonl");
  auto split_time_first = fs::last_write_time(out + "/split/test.jsonl");

  run_pipeline(cfg, out);
  CHECK(read_text_file(out + "/leaderboard.csv") == board_first);
  // stamp hits: neither the dataset nor the split was rewritten
  CHECK(fs::last_write_time(out + "/dataset/sessions.jsonl") == ds_time_first);
  CHECK(fs::last_write_time(out + "/split/test.jsonl") == split_time_first);

  // a stricter core filter invalidates the ingest stamp and rebuilds the data
  // (this corpus has no item below 9 interactions, so the bite comes from the
  // session-length side: p=4 drops every three-event session)
  json modified = base_config(dir);
  modified["dataset"]["p_core"] = 4;
  run_pipeline(RunConfig::from_json(modified, "test-config-2"), out);
  CHECK(read_text_file(out + "/dataset/sessions.jsonl") != sessions_first);
}

TEST_CASE("a failing stage leaves a FAILED marker naming the problem") {
  TempDir dir("pipe_fail");
  write_corpus(dir);
  json cfg_json = base_config(dir);
  cfg_json["models"][1]["pooling"] = "median";  // not a pooling strategy
  RunConfig cfg = RunConfig::from_json(cfg_json, "broken");
  std::string out = dir.file("out");

  CHECK_THROWS_AS(run_pipeline(cfg, out), ConfigError);
  REQUIRE(fs::exists(out + "/FAILED"));
  CHECK(read_text_file(out + "/FAILED").find("median") != std::string::npos);

  // fixing the config clears the marker on the next successful run
  run_pipeline(RunConfig::from_json(base_config(dir), "fixed"), out);
  CHECK(!fs::exists(out + "/FAILED"));
}

TEST_CASE("duplicate model names are rejected before any fitting happens") {
  TempDir dir("pipe_dup");
  write_corpus(dir);
  json cfg_json = base_config(dir);
  cfg_json["models"][1]["name"] = "pop";
  CHECK_THROWS_WITH_AS(run_pipeline(RunConfig::from_json(cfg_json, "dup"), dir.file("out")),
                       doctest::Contains("pop"), ConfigError);
}

TEST_CASE("reduction stage shrinks the model matrix and survives round-trips") {
  TempDir dir("pipe_reduce");
  write_corpus(dir);
  json cfg_json = base_config(dir);
  cfg_json["reduction"] = {{"method", "pca"}, {"k", 8}, {"renormalize", true}};
  RunConfig cfg = RunConfig::from_json(cfg_json, "reduced");
  std::string out = dir.file("out");

  PipelineState state;
  run_ingest_stage(cfg, out, state);
  run_split_stage(cfg, out, state);
  run_embed_stage(cfg, out, state);
  run_reduce_stage(cfg, out, state);

  REQUIRE(state.reduced_embeddings != nullptr);
  CHECK(state.reduced_embeddings->dim == 8);
  CHECK(state.embeddings->dim == 16);
  CHECK(state.reduced_embeddings->normalized);
  CHECK(fs::exists(out + "/reduction_model.bin"));

  ReductionModel back = load_reduction_model(out + "/reduction_model.bin");
  CHECK(back.output_dim == 8);
}

TEST_CASE("tune stage returns the winning config and logs every trial") {
  TempDir dir("pipe_tune");
  write_corpus(dir);
  json cfg_json = base_config(dir);
  cfg_json["tune"] = {{"model", "sknn"},
                      {"space", {{"k_neighbours", {{"int", {5, 60}}}}}},
                      {"budget", 6},
                      {"seed", 3}};
  RunConfig cfg = RunConfig::from_json(cfg_json, "tuned");
  std::string out = dir.file("out");

  PipelineState state;
  run_ingest_stage(cfg, out, state);
  run_split_stage(cfg, out, state);
  run_embed_stage(cfg, out, state);
  run_reduce_stage(cfg, out, state);
  json result = run_tune_stage(cfg, out, state);

  CHECK(result.at("best_config").contains("k_neighbours"));
  CHECK(result.at("trials").get<int>() <= 6);
  CHECK(result.at("stop_reason").get<std::string>() == "budget");
  CHECK(fs::exists(out + "/trials.jsonl"));
  CHECK(fs::exists(out + "/best_config.json"));

  long long best_k = result.at("best_config").at("k_neighbours").get<long long>();
  CHECK(best_k >= 5);
  CHECK(best_k <= 60);

  // tuning an unknown model name is a config error
  cfg_json["tune"]["model"] = "ghost";
  PipelineState s2;
  RunConfig bad = RunConfig::from_json(cfg_json, "tuned-bad");
  run_ingest_stage(bad, out, s2);
  run_split_stage(bad, out, s2);
  run_embed_stage(bad, out, s2);
  run_reduce_stage(bad, out, s2);
  CHECK_THROWS_WITH_AS(run_tune_stage(bad, out, s2), doctest::Contains("ghost"), ConfigError);
}

TEST_CASE("config loading rejects missing files and bad json with exit-worthy errors") {
  CHECK_THROWS_AS(RunConfig::load("/nonexistent/config.json"), ConfigError);
  TempDir dir("cfg_bad");
  write_text_file(dir.file("bad.json"), "{not json");
  CHECK_THROWS_AS(RunConfig::load(dir.file("bad.json")), ConfigError);

  write_text_file(dir.file("ok.json"), "{\"a\": 1}");
  RunConfig ok = RunConfig::load(dir.file("ok.json"));
  CHECK(!ok.config_hash.empty());
  CHECK(ok.raw.at("a").get<int>() == 1);
}

TEST_SUITE_END();
