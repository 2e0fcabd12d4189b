// sessionlab command line: ingest -> embed -> reduce -> tune/evaluate plus
// fine-tune corpus prep and diagnostics. One json config drives the pipeline
// subcommands; the ingest/stats/split trio also works standalone on plain
// paths. Exit codes: 0 ok, 1 runtime failure, 2 bad config/usage.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sessionlab/dataset.hpp"
#include "sessionlab/finetune.hpp"
#include "sessionlab/gru.hpp"
#include "sessionlab/hybrid.hpp"
#include "sessionlab/pipeline.hpp"
#include "sessionlab/tune.hpp"

using nlohmann::json;
using namespace sessionlab;

namespace {

json stats_to_json(const Dataset& ds) {
  return json{{"sessions", ds.stats.sessions},
              {"items", ds.stats.items},
              {"interactions", ds.stats.interactions},
              {"avg_session_length", ds.stats.avg_session_length},
              {"density", ds.stats.density},
              {"catalog_items", ds.catalog.size()}};
}

// Load the config file, apply any command line overrides, and re-hash.
RunConfig load_config(const std::string& path, const std::function<void(json&)>& patch) {
  RunConfig cfg = RunConfig::load(path);
  json j = cfg.raw;
  patch(j);
  return RunConfig::from_json(j, path);
}

struct StageCut {
  PipelineState state;
};

// Run the pipeline up to and including `last` ("split", "embed", "reduce").
PipelineState run_until(const RunConfig& cfg, const std::string& out_dir,
                        const std::string& last) {
  std::filesystem::create_directories(out_dir);
  PipelineState state;
  run_ingest_stage(cfg, out_dir, state);
  run_split_stage(cfg, out_dir, state);
  if (last == "split") return state;
  run_embed_stage(cfg, out_dir, state);
  if (last == "embed") return state;
  run_reduce_stage(cfg, out_dir, state);
  return state;
}

const json* find_model_block(const json& raw, const std::string& name) {
  if (!raw.contains("models")) return nullptr;
  for (const auto& block : raw.at("models"))
    if (block.value("name", std::string()) == name) return &block;
  return nullptr;
}

int cmd_ingest(const std::string& interactions, const std::string& catalog,
               const std::string& format, bool append_keywords, int pcore,
               const std::string& out) {
  IngestOptions opts;
  if (format == "csv") opts.format = LogFormat::csv;
  else if (format == "jsonl") opts.format = LogFormat::jsonl;
  else throw ConfigError("--format must be csv or jsonl, got: " + format);
  opts.append_keywords = append_keywords;

  Dataset ds = ingest(interactions, catalog, opts);
  if (pcore > 1) ds = p_core_filter(ds, pcore);
  save_dataset(ds, out);
  std::cout << stats_to_json(ds).dump(2) << "\n";
  return 0;
}

int cmd_stats(const std::string& dir) {
  Dataset ds = load_dataset(dir);
  std::cout << stats_to_json(ds).dump(2) << "\n";
  return 0;
}

int cmd_split(const std::string& dir, double test_frac, const std::string& out) {
  Dataset ds = load_dataset(dir);
  SplitSpec split = temporal_split(ds, test_frac);
  std::string dest = out.empty() ? dir + "/split" : out;
  save_split(split, dest);
  std::cout << json{{"train_sessions", split.train.stats.sessions},
                    {"test_cases", split.test.size()},
                    {"out", dest}}
                   .dump(2)
            << "\n";
  return 0;
}

int cmd_embed(const RunConfig& cfg, const std::string& out_dir) {
  PipelineState state = run_until(cfg, out_dir, "embed");
  const EmbeddingMatrix& m = *state.embeddings;
  json meta{{"provider", m.provider},
            {"dim", m.dim},
            {"items", m.item_ids.size()},
            {"normalized", m.normalized},
            {"config_hash", cfg.config_hash},
            {"version", kVersion}};
  write_text_file(out_dir + "/embed_meta.json", meta.dump(2) + "\n");
  std::cout << meta.dump(2) << "\n";
  return 0;
}

int cmd_reduce(const RunConfig& cfg, const std::string& out_dir) {
  if (!cfg.raw.contains("reduction"))
    throw ConfigError("reduce needs a 'reduction' section (or --method/--k overrides)");
  PipelineState state = run_until(cfg, out_dir, "reduce");
  if (!state.reduction) throw Error("reduce stage produced no model");
  json meta{{"method", reduction_method_name(state.reduction->method)},
            {"input_dim", state.reduction->input_dim},
            {"output_dim", state.reduction->output_dim},
            {"model", out_dir + "/reduction_model.bin"},
            {"config_hash", cfg.config_hash},
            {"version", kVersion}};
  std::cout << meta.dump(2) << "\n";
  return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& out_dir,
                 const std::vector<std::string>& only_models) {
  if (only_models.empty()) {
    run_pipeline(cfg, out_dir);
  } else {
    PipelineState state = run_until(cfg, out_dir, "reduce");
    run_evaluate_stage(cfg, out_dir, state, only_models);
  }
  std::cout << "leaderboard: " << out_dir << "/leaderboard.csv\n";
  std::cout << read_text_file(out_dir + "/leaderboard.md");
  return 0;
}

int cmd_tune(const RunConfig& cfg, const std::string& out_dir) {
  PipelineState state = run_until(cfg, out_dir, "reduce");
  json best = run_tune_stage(cfg, out_dir, state);
  std::cout << best.dump(2) << "\n";
  return 0;
}

int cmd_finetune_prep(const RunConfig& cfg, const std::string& out_dir, const std::string& task,
                      const std::string& out_file, int k, int categories, std::uint64_t seed) {
  PipelineState state = run_until(cfg, out_dir, "embed");
  const Dataset& train = state.split.train;

  std::vector<PromptPair> pairs;
  std::vector<std::string> skip_log;
  if (task == "genitem") {
    pairs = build_next_item_pairs(train);
  } else if (task == "class") {
    pairs = build_category_pairs(train, *state.embeddings, categories, /*top_c=*/3, seed);
  } else if (task == "genlist" || task == "rank") {
    EmbeddingSimOptions teacher_opts;  // harmonic-decay cosine ranker as the teacher
    teacher_opts.pooling = PoolingStrategy::parse("weighted:harmonic");
    EmbeddingSimRecommender teacher(state.embeddings, teacher_opts);
    teacher.fit(train);
    pairs = task == "genlist" ? build_ranked_list_pairs(train, teacher, k, {}, &skip_log)
                              : build_reorder_pairs(train, teacher, k, seed, {}, &skip_log);
  } else {
    throw ConfigError("--task must be genitem, genlist, class, or rank; got: " + task);
  }

  write_pairs_jsonl(pairs, out_file);
  for (const auto& line : skip_log) std::cerr << "skip: " << line << "\n";
  std::cout << json{{"task", task}, {"pairs", pairs.size()}, {"skipped", skip_log.size()},
                    {"out", out_file}}
                   .dump(2)
            << "\n";
  return 0;
}

int cmd_resolve(const RunConfig& cfg, const std::string& out_dir,
                const std::string& generations_path, const std::string& out_file) {
  PipelineState state = run_until(cfg, out_dir, "embed");
  if (!state.embeddings->normalized)
    throw ConfigError("resolve needs embeddings.normalize=true (similarity is cosine)");

  // one generated text per line; json lines may carry {"text": ...}
  std::vector<std::string> generations;
  for (const auto& line : split_string(read_text_file(generations_path), '\n')) {
    if (line.empty()) continue;
    if (line.front() == '{') {
      json j = json::parse(line);
      generations.push_back(j.value("text", j.value("raw_text", std::string())));
    } else {
      generations.push_back(line);
    }
  }

  const json& em = cfg.raw.at("embeddings");
  std::string provider = em.value("provider", std::string("synthetic"));
  std::unique_ptr<TextEmbedder> embedder;
  std::unique_ptr<Transport> transport;
  if (provider == "synthetic") {
    embedder = std::make_unique<SyntheticTextEmbedder>(em.value("dim", 32),
                                                       em.value("seed", std::uint64_t{7}));
  } else {
    ProviderConfig pc;
    pc.model = em.value("model", std::string("text-embedding-3-small"));
    pc.endpoint = em.value("endpoint", std::string());
    if (pc.endpoint.empty() && std::getenv("EMBEDDING_API_URL"))
      pc.endpoint = std::getenv("EMBEDDING_API_URL");
    if (std::getenv("EMBEDDING_API_KEY")) pc.api_key = std::getenv("EMBEDDING_API_KEY");
    transport = make_http_transport();
    embedder = std::make_unique<HttpTextEmbedder>(pc, *transport);
  }

  std::vector<Resolution> rs =
      resolve_generations(generations, state.dataset.catalog, *state.embeddings, *embedder);
  write_resolutions_jsonl(rs, out_file);
  ResolutionSummary s = summarize_resolutions(rs);
  std::cout << json{{"total", s.total},
                    {"exact", s.exact},
                    {"hallucinations", s.hallucinations},
                    {"skipped", s.skipped},
                    {"hallucination_rate", s.hallucination_rate},
                    {"mean_similarity", s.mean_similarity},
                    {"out", out_file}}
                   .dump(2)
            << "\n";
  return 0;
}

int cmd_diagnose(const RunConfig& cfg, const std::string& out_dir, const std::string& model_name,
                 int buckets, int positions, int k, const std::string& out_file) {
  PipelineState state = run_until(cfg, out_dir, "reduce");
  const json& models = cfg.raw.at("models");
  const json* block = model_name.empty() ? &models.at(0) : find_model_block(cfg.raw, model_name);
  if (!block) throw ConfigError("diagnose: no model named '" + model_name + "' in the config");

  std::shared_ptr<const EmbeddingMatrix> emb =
      block->value("use_reduced", true) && state.reduced_embeddings ? state.reduced_embeddings
                                                                    : state.embeddings;
  std::shared_ptr<Recommender> model =
      make_recommender(*block, emb, "diagnose." + block->value("name", std::string("model")));
  model->fit(state.split.train);

  PopularityTable table(state.split.train);
  BucketDiagnostics bd = hit_rate_by_popularity_bucket(*model, state.split.test, table, buckets, k);
  PositionDiagnostics pd = hit_rate_by_prompt_position(*model, state.split.test, positions, k);

  auto opt_vec = [](const std::vector<std::optional<double>>& v) {
    json a = json::array();
    for (const auto& x : v) a.push_back(x ? json(*x) : json(nullptr));
    return a;
  };
  json out{{"model", block->value("name", std::string())},
           {"k", k},
           {"popularity_buckets",
            {{"hit_rate", opt_vec(bd.hit_rate)},
             {"sizes", bd.sizes},
             {"edges", bd.edges},
             {"global_hit_rate", bd.global_hit_rate}}},
           {"prompt_positions", {{"hit_rate", opt_vec(pd.hit_rate)}, {"sizes", pd.sizes}}}};
  write_text_file(out_file, out.dump(2) + "\n");
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_synth(const SyntheticSpec& spec, const std::string& interactions,
              const std::string& catalog) {
  generate_synthetic_corpus(spec, interactions, catalog);
  std::cout << json{{"interactions", interactions},
                    {"catalog", catalog},
                    {"sessions", spec.n_sessions},
                    {"items", spec.n_items}}
                   .dump(2)
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"session-based recommendation toolkit"};
  app.require_subcommand(1);

  // ---- ingest ----
  auto* ingest_cmd = app.add_subcommand("ingest", "parse an interaction log into a dataset dir");
  std::string in_interactions, in_catalog, in_format = "csv", in_out;
  bool in_append_kw = false;
  int in_pcore = 1;
  ingest_cmd->add_option("--interactions", in_interactions, "interaction log (csv or jsonl)")
      ->required();
  ingest_cmd->add_option("--catalog", in_catalog, "item catalog jsonl")->required();
  ingest_cmd->add_option("--format", in_format, "csv|jsonl (default csv)");
  ingest_cmd->add_flag("--append-keywords", in_append_kw,
                       "append keywords to each item's embedding text");
  ingest_cmd->add_option("--pcore", in_pcore, "iterative p-core filter threshold (default off)");
  ingest_cmd->add_option("--out", in_out, "output dataset directory")->required();

  // ---- stats ----
  auto* stats_cmd = app.add_subcommand("stats", "print stats for a dataset directory");
  std::string st_dir;
  stats_cmd->add_option("dir", st_dir, "dataset directory")->required();

  // ---- split ----
  auto* split_cmd = app.add_subcommand("split", "temporal train/test split of a dataset dir");
  std::string sp_dir, sp_out;
  double sp_frac = 0.2;
  split_cmd->add_option("dir", sp_dir, "dataset directory")->required();
  split_cmd->add_option("--test-frac", sp_frac, "fraction of latest sessions held out");
  split_cmd->add_option("--out", sp_out, "output split directory (default <dir>/split)");

  // ---- config-driven subcommands ----
  std::string cfg_path, out_dir = "runs/out";
  auto add_cfg = [&](CLI::App* cmd) {
    cmd->add_option("--config", cfg_path, "run config json")->required();
    cmd->add_option("--out", out_dir, "artifacts directory (default runs/out)");
  };

  auto* embed_cmd = app.add_subcommand("embed", "build/fetch item embeddings");
  add_cfg(embed_cmd);
  std::string ov_provider, ov_model, ov_endpoint, ov_cache;
  int ov_dim = 0;
  std::uint64_t ov_seed = 0;
  auto* o_provider = embed_cmd->add_option("--provider", ov_provider, "synthetic|http|openai|google");
  auto* o_dim = embed_cmd->add_option("--dim", ov_dim, "embedding width");
  auto* o_seed = embed_cmd->add_option("--seed", ov_seed, "synthetic provider seed");
  auto* o_model = embed_cmd->add_option("--model", ov_model, "provider model name");
  auto* o_endpoint = embed_cmd->add_option("--endpoint", ov_endpoint, "provider endpoint url");
  auto* o_cache = embed_cmd->add_option("--cache", ov_cache, "embedding cache file");

  auto* reduce_cmd = app.add_subcommand("reduce", "fit a dimensionality reduction model");
  add_cfg(reduce_cmd);
  std::string ov_method;
  int ov_k = 0;
  std::uint64_t ov_rseed = 0;
  auto* o_method = reduce_cmd->add_option("--method", ov_method, "pca|lda|rp|identity");
  auto* o_k = reduce_cmd->add_option("--k", ov_k, "output dimensions");
  auto* o_rseed = reduce_cmd->add_option("--seed", ov_rseed, "projection seed");

  auto* eval_cmd = app.add_subcommand("evaluate", "run the pipeline and score the models");
  add_cfg(eval_cmd);
  std::vector<std::string> ev_models;
  int ev_jobs = 0;
  eval_cmd->add_option("--model", ev_models, "only evaluate these model names");
  auto* o_jobs = eval_cmd->add_option("--jobs", ev_jobs, "parallel recommendation workers");

  auto* run_cmd = app.add_subcommand("run", "alias for evaluate over the full config");
  add_cfg(run_cmd);

  auto* tune_cmd = app.add_subcommand("tune", "random-search a model's hyper-parameters");
  add_cfg(tune_cmd);
  std::string tn_model;
  int tn_budget = 0;
  std::uint64_t tn_seed = 0;
  auto* o_tmodel = tune_cmd->add_option("--model", tn_model, "model name from the config");
  auto* o_budget = tune_cmd->add_option("--budget", tn_budget, "trial budget");
  auto* o_tseed = tune_cmd->add_option("--seed", tn_seed, "search seed");

  auto* ft_cmd = app.add_subcommand("finetune-prep", "emit a fine-tuning corpus");
  add_cfg(ft_cmd);
  std::string ft_task, ft_out = "pairs.jsonl";
  int ft_k = 10, ft_categories = 10;
  std::uint64_t ft_seed = 7;
  ft_cmd->add_option("--task", ft_task, "genitem|genlist|class|rank")->required();
  ft_cmd->add_option("--out-file", ft_out, "output jsonl (default pairs.jsonl)");
  ft_cmd->add_option("--k", ft_k, "teacher list length (genlist/rank)");
  ft_cmd->add_option("--categories", ft_categories, "k-means cluster count (class)");
  ft_cmd->add_option("--seed", ft_seed, "clustering/shuffle seed");

  auto* res_cmd = app.add_subcommand("resolve", "map generated texts back to catalog items");
  add_cfg(res_cmd);
  std::string rs_generations, rs_out = "resolutions.jsonl";
  res_cmd->add_option("--generations", rs_generations, "file of generated texts (one per line)")
      ->required();
  res_cmd->add_option("--out-file", rs_out, "resolution report jsonl");

  auto* diag_cmd = app.add_subcommand("diagnose", "hit-rate breakdowns for one model");
  add_cfg(diag_cmd);
  std::string dg_model, dg_out = "diagnostics.json";
  int dg_buckets = 10, dg_positions = 5, dg_k = 20;
  diag_cmd->add_option("--model", dg_model, "model name (default: first in config)");
  diag_cmd->add_option("--buckets", dg_buckets, "popularity buckets");
  diag_cmd->add_option("--positions", dg_positions, "prompt positions from the end");
  diag_cmd->add_option("--k", dg_k, "cutoff");
  diag_cmd->add_option("--out-file", dg_out, "output json");

  auto* synth_cmd = app.add_subcommand("synth", "generate a topic-structured synthetic corpus");
  SyntheticSpec spec;
  std::string sy_interactions = "interactions.csv", sy_catalog = "catalog.jsonl";
  synth_cmd->add_option("--interactions", sy_interactions, "output csv");
  synth_cmd->add_option("--catalog", sy_catalog, "output jsonl");
  synth_cmd->add_option("--sessions", spec.n_sessions, "session count");
  synth_cmd->add_option("--items", spec.n_items, "item count");
  synth_cmd->add_option("--topics", spec.n_topics, "topic count");
  synth_cmd->add_option("--min-len", spec.min_session_length, "min session length");
  synth_cmd->add_option("--max-len", spec.max_session_length, "max session length");
  synth_cmd->add_option("--noise", spec.noise_prob, "off-topic event probability");
  synth_cmd->add_option("--seed", spec.seed, "corpus seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the message
    return 2;     // usage problems are config errors
  }

  try {
    if (*ingest_cmd)
      return cmd_ingest(in_interactions, in_catalog, in_format, in_append_kw, in_pcore, in_out);
    if (*stats_cmd) return cmd_stats(st_dir);
    if (*split_cmd) return cmd_split(sp_dir, sp_frac, sp_out);

    if (*embed_cmd) {
      RunConfig cfg = load_config(cfg_path, [&](json& j) {
        if (o_provider->count()) j["embeddings"]["provider"] = ov_provider;
        if (o_dim->count()) j["embeddings"]["dim"] = ov_dim;
        if (o_seed->count()) j["embeddings"]["seed"] = ov_seed;
        if (o_model->count()) j["embeddings"]["model"] = ov_model;
        if (o_endpoint->count()) j["embeddings"]["endpoint"] = ov_endpoint;
        if (o_cache->count()) j["embeddings"]["cache"] = ov_cache;
      });
      return cmd_embed(cfg, out_dir);
    }
    if (*reduce_cmd) {
      RunConfig cfg = load_config(cfg_path, [&](json& j) {
        if (o_method->count()) j["reduction"]["method"] = ov_method;
        if (o_k->count()) j["reduction"]["k"] = ov_k;
        if (o_rseed->count()) j["reduction"]["seed"] = ov_rseed;
      });
      return cmd_reduce(cfg, out_dir);
    }
    if (*eval_cmd || *run_cmd) {
      RunConfig cfg = load_config(cfg_path, [&](json& j) {
        if (o_jobs->count()) j["eval"]["jobs"] = ev_jobs;
      });
      return cmd_evaluate(cfg, out_dir, *run_cmd ? std::vector<std::string>{} : ev_models);
    }
    if (*tune_cmd) {
      RunConfig cfg = load_config(cfg_path, [&](json& j) {
        if (o_tmodel->count()) j["tune"]["model"] = tn_model;
        if (o_budget->count()) j["tune"]["budget"] = tn_budget;
        if (o_tseed->count()) j["tune"]["seed"] = tn_seed;
      });
      return cmd_tune(cfg, out_dir);
    }
    if (*ft_cmd) {
      RunConfig cfg = load_config(cfg_path, [](json&) {});
      return cmd_finetune_prep(cfg, out_dir, ft_task, ft_out, ft_k, ft_categories, ft_seed);
    }
    if (*res_cmd) {
      RunConfig cfg = load_config(cfg_path, [](json&) {});
      return cmd_resolve(cfg, out_dir, rs_generations, rs_out);
    }
    if (*diag_cmd) {
      RunConfig cfg = load_config(cfg_path, [](json&) {});
      return cmd_diagnose(cfg, out_dir, dg_model, dg_buckets, dg_positions, dg_k, dg_out);
    }
    if (*synth_cmd) return cmd_synth(spec, sy_interactions, sy_catalog);

    std::cerr << "no subcommand given\n";
    return 2;
  } catch (const ConfigError& ex) {
    std::cerr << "config error: " << ex.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
}
