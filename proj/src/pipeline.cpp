#include "sessionlab/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "sessionlab/gru.hpp"
#include "sessionlab/hybrid.hpp"
#include "sessionlab/tune.hpp"

namespace sessionlab {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- RunConfig ---------------------------------------------------------------

RunConfig RunConfig::load(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const Error&) {
    throw ConfigError("cannot open config file: " + path);
  } catch (const std::exception& ex) {
    throw ConfigError("config is not valid json (" + path + "): " + ex.what());
  }
  return from_json(j, path);
}

RunConfig RunConfig::from_json(const json& j, const std::string& label) {
  if (!j.is_object()) throw ConfigError("config root must be a json object: " + label);
  RunConfig cfg;
  cfg.raw = j;
  cfg.path = label;
  cfg.config_hash = fnv1a64_hex(j.dump());
  return cfg;
}

// ---- stage stamps ---------------------------------------------------------------

namespace {

json load_stamps(const std::string& out_dir) {
  std::string path = out_dir + "/.stages.json";
  if (!fs::exists(path)) return json::object();
  try {
    return json::parse(read_text_file(path));
  } catch (...) {
    return json::object();  // corrupt stamp file: recompute everything
  }
}

void save_stamp(const std::string& out_dir, const std::string& stage, const std::string& hash) {
  json stamps = load_stamps(out_dir);
  stamps[stage] = hash;
  write_text_file(out_dir + "/.stages.json", stamps.dump(2) + "\n");
}

bool stamp_matches(const std::string& out_dir, const std::string& stage,
                   const std::string& hash) {
  json stamps = load_stamps(out_dir);
  return stamps.contains(stage) && stamps[stage] == hash;
}

std::string file_content_hash(const std::string& path) {
  return fnv1a64_hex(read_text_file(path));
}

const json& require_section(const RunConfig& cfg, const std::string& name) {
  if (!cfg.raw.contains(name))
    throw ConfigError("config is missing the '" + name + "' section (" + cfg.path + ")");
  return cfg.raw.at(name);
}

std::string resolve_path(const std::string& p, const std::string& out_dir) {
  if (p.empty()) return p;
  fs::path fp(p);
  if (fp.is_absolute()) return p;
  return (fs::path(out_dir) / fp).string();
}

}  // namespace

// ---- stages ---------------------------------------------------------------

void run_ingest_stage(const RunConfig& cfg, const std::string& out_dir, PipelineState& state) {
  const json& ds = require_section(cfg, "dataset");
  std::string interactions = ds.value("interactions", std::string());
  std::string catalog = ds.value("catalog", std::string());
  if (interactions.empty() || catalog.empty())
    throw ConfigError("dataset.interactions and dataset.catalog are required");
  if (!fs::exists(interactions)) throw ConfigError("interactions file not found: " + interactions);
  if (!fs::exists(catalog)) throw ConfigError("catalog file not found: " + catalog);

  std::string input_hash = fnv1a64_hex(ds.dump() + file_content_hash(interactions) +
                                       file_content_hash(catalog));
  std::string dataset_dir = out_dir + "/dataset";
  if (stamp_matches(out_dir, "ingest", input_hash) && fs::exists(dataset_dir + "/manifest.json")) {
    state.dataset = load_dataset(dataset_dir);
    return;
  }

  IngestOptions opts;
  std::string format = ds.value("format", std::string("csv"));
  if (format == "csv") opts.format = LogFormat::csv;
  else if (format == "jsonl") opts.format = LogFormat::jsonl;
  else throw ConfigError("dataset.format must be csv or jsonl, got: " + format);
  opts.append_keywords = ds.value("append_keywords", false);

  Dataset raw = ingest(interactions, catalog, opts);
  int p = ds.value("p_core", 1);
  state.dataset = p <= 1 ? std::move(raw) : p_core_filter(raw, p);
  save_dataset(state.dataset, dataset_dir);
  save_stamp(out_dir, "ingest", input_hash);
}

void run_split_stage(const RunConfig& cfg, const std::string& out_dir, PipelineState& state) {
  const json& ds = require_section(cfg, "dataset");
  double frac = ds.value("test_fraction", 0.2);
  state.split = temporal_split(state.dataset, frac);
  std::string input_hash =
      fnv1a64_hex(json{{"test_fraction", frac}}.dump() + load_stamps(out_dir).value("ingest", ""));
  std::string split_dir = out_dir + "/split";
  if (!(stamp_matches(out_dir, "split", input_hash) && fs::exists(split_dir + "/test.jsonl"))) {
    save_split(state.split, split_dir);
    save_stamp(out_dir, "split", input_hash);
  }
}

void run_embed_stage(const RunConfig& cfg, const std::string& out_dir, PipelineState& state,
                     Transport* transport) {
  const json& em = require_section(cfg, "embeddings");
  std::string provider = em.value("provider", std::string("synthetic"));
  bool normalize = em.value("normalize", true);

  EmbeddingMatrix matrix;
  if (provider == "synthetic") {
    int dim = em.value("dim", 32);
    std::uint64_t seed = em.value("seed", std::uint64_t{7});
    bool semantic = em.value("semantic", false);
    matrix = synthetic_embeddings(state.dataset.catalog, dim, seed,
                                  semantic ? &state.split.train.sessions : nullptr);
  } else if (provider == "http" || provider == "openai" || provider == "google") {
    ProviderConfig pc;
    pc.model = em.value("model", std::string("text-embedding-3-small"));
    pc.endpoint = em.value("endpoint", std::string());
    if (pc.endpoint.empty()) {
      const char* env = std::getenv("EMBEDDING_API_URL");
      if (env) pc.endpoint = env;
    }
    if (pc.endpoint.empty())
      throw ConfigError("embeddings.endpoint (or EMBEDDING_API_URL) is required for provider " +
                        provider);
    const char* key = std::getenv("EMBEDDING_API_KEY");
    if (key) pc.api_key = key;
    pc.batch_size = em.value("batch_size", 64);
    pc.dim = em.value("dim", 0);
    std::string cache = resolve_path(em.value("cache", std::string("embedding_cache.jsonl")),
                                     out_dir);
    std::unique_ptr<Transport> owned;
    if (!transport) {
      owned = make_http_transport();
      transport = owned.get();
    }
    matrix = fetch_embeddings(state.dataset.catalog, pc, cache, *transport).matrix;
  } else {
    throw ConfigError("embeddings.provider must be synthetic, http, openai, or google; got: " +
                      provider);
  }

  state.embeddings =
      std::make_shared<EmbeddingMatrix>(normalize ? normalize_rows(matrix) : matrix);
  save_stamp(out_dir, "embed", fnv1a64_hex(em.dump() + load_stamps(out_dir).value("split", "")));
}

void run_reduce_stage(const RunConfig& cfg, const std::string& out_dir, PipelineState& state) {
  if (!cfg.raw.contains("reduction")) {
    state.reduced_embeddings = state.embeddings;  // no reduction requested
    return;
  }
  if (!state.embeddings) throw Error("reduce stage needs the embed stage first");
  const json& rd = cfg.raw.at("reduction");
  std::string method = rd.value("method", std::string("identity"));
  bool renormalize = rd.value("renormalize", true);
  std::string model_path = out_dir + "/reduction_model.bin";
  std::string input_hash = fnv1a64_hex(rd.dump() + load_stamps(out_dir).value("embed", ""));

  ReductionModel model;
  if (stamp_matches(out_dir, "reduce", input_hash) && fs::exists(model_path)) {
    model = load_reduction_model(model_path);
  } else {
    ReductionMethod rm = reduction_method_from_string(method);
    int k = rd.value("k", state.embeddings->dim);
    switch (rm) {
      case ReductionMethod::pca:
        model = fit_pca(state.embeddings->vectors, k);
        break;
      case ReductionMethod::lda: {
        LdaClassMap cm = build_lda_classes(state.dataset.catalog);
        std::vector<std::string> labels;
        labels.reserve(state.embeddings->item_ids.size());
        for (const auto& id : state.embeddings->item_ids) {
          auto it = cm.classes.find(id);
          if (it == cm.classes.end())
            throw Error("item lacks keywords needed for supervised reduction: " + id);
          labels.push_back(it->second);
        }
        model = fit_lda(state.embeddings->vectors, labels, k);
        break;
      }
      case ReductionMethod::random_projection:
        model = fit_random_projection(state.embeddings->dim, k,
                                      rd.value("seed", std::uint64_t{7}));
        break;
      case ReductionMethod::identity:
        model = identity_reduction(state.embeddings->dim);
        break;
    }
    save_reduction_model(model, model_path);
    save_stamp(out_dir, "reduce", input_hash);
  }
  state.reduction = model;

  EmbeddingMatrix reduced;
  reduced.item_ids = state.embeddings->item_ids;
  reduced.vectors = reduce_transform(model, state.embeddings->vectors);
  reduced.dim = model.output_dim;
  reduced.provider = state.embeddings->provider + "+" + reduction_method_name(model.method);
  reduced.rebuild_index();
  state.reduced_embeddings =
      std::make_shared<EmbeddingMatrix>(renormalize ? normalize_rows(reduced) : reduced);
}

// ---- model factory ---------------------------------------------------------------

namespace {

PoolingStrategy pooling_from(const json& params, const char* field, const std::string& ctx,
                             const std::string& fallback) {
  std::string text = params.value(field, fallback);
  try {
    return PoolingStrategy::parse(text);
  } catch (const ConfigError& ex) {
    throw ConfigError(ctx + "." + field + ": " + ex.what());
  }
}

std::shared_ptr<Recommender> build_model_block(const json& params,
                                               std::shared_ptr<const EmbeddingMatrix> embeddings,
                                               const json* all_models,
                                               const std::string& ctx);

std::shared_ptr<Recommender> component_by_name(const std::string& name, const json* all_models,
                                               std::shared_ptr<const EmbeddingMatrix> embeddings,
                                               const std::string& ctx) {
  if (!all_models) throw ConfigError(ctx + ": hybrid components need the full models list");
  for (const auto& block : *all_models) {
    if (block.value("name", std::string()) == name)
      return build_model_block(block, embeddings, all_models, ctx + "->" + name);
  }
  throw ConfigError(ctx + ": no model named '" + name + "' in the models list");
}

std::shared_ptr<Recommender> build_model_block(const json& params,
                                               std::shared_ptr<const EmbeddingMatrix> embeddings,
                                               const json* all_models, const std::string& ctx) {
  std::string type = params.value("type", std::string());
  if (type.empty()) throw ConfigError(ctx + ": model block is missing 'type'");

  if (type == "most_popular") return std::make_shared<MostPopularRecommender>();

  if (type == "emb_sim") {
    if (!embeddings) throw ConfigError(ctx + ": emb_sim needs embeddings");
    EmbeddingSimOptions opts;
    opts.pooling = pooling_from(params, "pooling", ctx, "weighted:harmonic");
    opts.similarity = similarity_from_string(params.value("similarity", std::string("cosine")));
    opts.allow_repeats = params.value("allow_repeats", true);
    return std::make_shared<EmbeddingSimRecommender>(std::move(embeddings), opts);
  }

  if (type == "sknn") {
    SknnOptions opts;
    opts.k_neighbours = params.value("k_neighbours", 100);
    opts.use_inverted_index = params.value("inverted_index", true);
    return std::make_shared<SknnRecommender>(opts);
  }

  if (type == "sknn_emb") {
    if (!embeddings) throw ConfigError(ctx + ": sknn_emb needs embeddings");
    SknnEmbOptions opts;
    opts.k_neighbours = params.value("k_neighbours", 100);
    opts.train_pooling = pooling_from(params, "train_pooling", ctx, "mean");
    opts.prompt_pooling = pooling_from(params, "prompt_pooling", ctx, "mean");
    return std::make_shared<SknnRecommender>(opts, std::move(embeddings));
  }

  if (type == "gru") {
    GruConfig gc;
    gc.embedding_dim = params.value("embedding_dim", 32);
    gc.hidden_dim = params.value("hidden_dim", 32);
    gc.max_session_length = params.value("max_session_length", 20);
    gc.learning_rate = params.value("learning_rate", 0.1);
    gc.momentum = params.value("momentum", 0.0);
    gc.epochs = params.value("epochs", 5);
    gc.batch_size = params.value("batch_size", 16);
    gc.seed = params.value("seed", std::uint64_t{1});
    gc.init_scale = params.value("init_scale", 0.05);
    gc.embeddings_trainable = params.value("trainable", true);
    gc.tied_output = params.value("tied_output", false);

    GruInitSpec init;
    std::string init_kind = params.value("init", std::string("random"));
    if (init_kind == "random") {
      init.kind = GruInitSpec::Kind::random;
    } else if (init_kind == "embeddings") {
      if (!embeddings) throw ConfigError(ctx + ": gru init=embeddings needs embeddings");
      init.kind = GruInitSpec::Kind::from_matrix;
      init.matrix = embeddings.get();
      gc.embedding_dim = embeddings->dim;  // layer width follows the matrix
    } else {
      throw ConfigError(ctx + ": gru init must be random or embeddings, got: " + init_kind);
    }
    // keep the matrix alive alongside the recommender
    struct GruWithDeps : GruRecommender {
      GruWithDeps(GruConfig c, GruInitSpec i, std::shared_ptr<const EmbeddingMatrix> dep)
          : GruRecommender(c, i), keep(std::move(dep)) {}
      std::shared_ptr<const EmbeddingMatrix> keep;
    };
    return std::make_shared<GruWithDeps>(gc, init, std::move(embeddings));
  }

  if (type == "hybrid_switch") {
    double cutoff = params.value("cutoff", 0.5);
    std::string unpop = params.value("unpopular_model", std::string());
    std::string pop = params.value("popular_model", std::string());
    if (unpop.empty() || pop.empty())
      throw ConfigError(ctx + ": hybrid_switch needs unpopular_model and popular_model names");
    return std::make_shared<SwitchHybrid>(
        cutoff, component_by_name(unpop, all_models, embeddings, ctx),
        component_by_name(pop, all_models, embeddings, ctx));
  }

  if (type == "hybrid_filter") {
    if (!embeddings) throw ConfigError(ctx + ": hybrid_filter needs embeddings");
    EmbeddingSimOptions base;
    base.pooling = pooling_from(params, "pooling", ctx, "weighted:harmonic");
    base.similarity = similarity_from_string(params.value("similarity", std::string("cosine")));
    base.allow_repeats = params.value("allow_repeats", true);
    std::optional<double> diversity;
    if (params.contains("diversity_threshold") && !params.at("diversity_threshold").is_null())
      diversity = params.at("diversity_threshold").get<double>();
    return std::make_shared<FilteredHybrid>(std::move(embeddings), base,
                                            params.value("popularity_quantile", 0.0), diversity,
                                            params.value("overfetch", 5));
  }

  throw ConfigError(ctx + ": unknown model type '" + type + "'");
}

}  // namespace

std::shared_ptr<Recommender> make_recommender(const json& params,
                                              std::shared_ptr<const EmbeddingMatrix> embeddings,
                                              const std::string& error_context) {
  return build_model_block(params, std::move(embeddings), nullptr, error_context);
}

// ---- evaluate ---------------------------------------------------------------

namespace {

std::shared_ptr<const EmbeddingMatrix> embeddings_for_block(const json& block,
                                                            const PipelineState& state) {
  bool use_reduced = block.value("use_reduced", true);
  if (use_reduced && state.reduced_embeddings) return state.reduced_embeddings;
  return state.embeddings;
}

}  // namespace

void run_evaluate_stage(const RunConfig& cfg, const std::string& out_dir, PipelineState& state,
                        const std::vector<std::string>& only_models) {
  const json& models = require_section(cfg, "models");
  if (!models.is_array() || models.empty())
    throw ConfigError("config.models must be a non-empty array");

  EvalOptions eopts;
  if (cfg.raw.contains("eval")) {
    const json& ev = cfg.raw.at("eval");
    if (ev.contains("cutoffs")) eopts.cutoffs = ev.at("cutoffs").get<std::vector<int>>();
    eopts.jobs = ev.value("jobs", 1);
  }

  std::set<std::string> seen_names;
  std::set<std::string> wanted(only_models.begin(), only_models.end());
  state.reports.clear();
  fs::create_directories(out_dir + "/reports");

  for (std::size_t i = 0; i < models.size(); ++i) {
    const json& block = models.at(i);
    std::string ctx = "models[" + std::to_string(i) + "]";
    std::string name = block.value("name", std::string());
    if (name.empty()) throw ConfigError(ctx + ": model block is missing 'name'");
    if (!seen_names.insert(name).second)
      throw ConfigError(ctx + ": duplicate model name '" + name + "'");
    if (!wanted.empty() && !wanted.count(name)) continue;

    std::shared_ptr<Recommender> model =
        build_model_block(block, embeddings_for_block(block, state), &models, ctx);
    model->fit(state.split.train);
    MetricsReport report = evaluate(*model, state.split.train, state.split.test, eopts);
    report.model_name = name;  // config name, not type, so leaderboards stay readable
    write_text_file(out_dir + "/reports/" + name + ".json", report.to_json_string());
    state.models[name] = model;
    state.reports.push_back(std::move(report));
  }
  if (state.reports.empty()) throw ConfigError("no models matched the requested names");
  write_leaderboard(state.reports, out_dir + "/leaderboard.csv", out_dir + "/leaderboard.md");
}

// ---- tune ---------------------------------------------------------------

json run_tune_stage(const RunConfig& cfg, const std::string& out_dir, PipelineState& state) {
  const json& tn = require_section(cfg, "tune");
  std::string model_name = tn.value("model", std::string());
  if (model_name.empty()) throw ConfigError("tune.model is required");
  if (!tn.contains("space")) throw ConfigError("tune.space is required");

  const json& models = require_section(cfg, "models");
  const json* base_block = nullptr;
  for (const auto& block : models)
    if (block.value("name", std::string()) == model_name) base_block = &block;
  if (!base_block) throw ConfigError("tune.model '" + model_name + "' is not in the models list");

  SearchSpace space = parse_search_space(tn.at("space"));
  SearchOptions opts;
  opts.budget = tn.value("budget", 40);
  opts.seed = tn.value("seed", std::uint64_t{1});
  opts.early_stop_patience = tn.value("early_stop_patience", 100);
  opts.wall_clock_limit_seconds = tn.value("wall_clock_limit_seconds", 0.0);
  opts.n_folds = 3;

  std::array<Fold, 3> folds = make_validation_folds(state.split.train);

  TrialObjective objective = [&](const json& sampled, int fold_idx) {
    json merged = *base_block;
    for (auto it = sampled.begin(); it != sampled.end(); ++it) merged[it.key()] = it.value();
    std::shared_ptr<Recommender> model = build_model_block(
        merged, embeddings_for_block(merged, state), &models, "tune." + model_name);
    const Fold& fold = folds[static_cast<std::size_t>(fold_idx)];
    model->fit(fold.train);
    EvalOptions eopts;
    eopts.cutoffs = {20};
    MetricsReport rep = evaluate(*model, fold.train, fold.test, eopts);
    return rep.at.at(20).ndcg;
  };

  SearchResult result = random_search(space, opts, objective);
  write_trials_jsonl(result, out_dir + "/trials.jsonl");

  json best_block = *base_block;
  for (auto it = result.best.config.begin(); it != result.best.config.end(); ++it)
    best_block[it.key()] = it.value();
  json out{{"best_config", best_block},
           {"best_total_ndcg20", result.best.total},
           {"trials", result.trials.size()},
           {"stop_reason", result.stop_reason}};
  write_text_file(out_dir + "/best_config.json", out.dump(2) + "\n");
  return out;
}

// ---- full pipeline ---------------------------------------------------------------

void run_pipeline(const RunConfig& cfg, const std::string& out_dir, Transport* transport) {
  fs::create_directories(out_dir);
  auto started = std::chrono::system_clock::now();
  try {
    PipelineState state;
    run_ingest_stage(cfg, out_dir, state);
    run_split_stage(cfg, out_dir, state);
    run_embed_stage(cfg, out_dir, state, transport);
    run_reduce_stage(cfg, out_dir, state);
    run_evaluate_stage(cfg, out_dir, state);

    auto finished = std::chrono::system_clock::now();
    json meta{{"config_hash", cfg.config_hash},
              {"version", kVersion},
              {"config_path", cfg.path},
              {"runtime_seconds",
               std::chrono::duration<double>(finished - started).count()},
              {"models", json::array()}};
    for (const auto& r : state.reports) meta["models"].push_back(r.model_name);
    write_text_file(out_dir + "/run_meta.json", meta.dump(2) + "\n");
    if (fs::exists(out_dir + "/FAILED")) fs::remove(out_dir + "/FAILED");
  } catch (const std::exception& ex) {
    write_text_file(out_dir + "/FAILED", std::string(ex.what()) + "\n");
    throw;
  }
}

// ---- synthetic corpus ---------------------------------------------------------------

void generate_synthetic_corpus(const SyntheticSpec& spec, const std::string& interactions_csv,
                               const std::string& catalog_jsonl) {
  if (spec.n_items < spec.n_topics || spec.n_topics < 1)
    throw ConfigError("synthetic corpus needs n_items >= n_topics >= 1");
  if (spec.min_session_length < 2 || spec.max_session_length < spec.min_session_length)
    throw ConfigError("synthetic corpus needs 2 <= min_session_length <= max_session_length");

  static const char* kTopicWords[] = {"aurora", "breeze", "cobalt", "dune",   "ember",
                                      "fjord",  "glade",  "harbor", "indigo", "juniper",
                                      "krill",  "lagoon", "meadow", "nectar", "onyx"};
  const int n_named = static_cast<int>(sizeof(kTopicWords) / sizeof(kTopicWords[0]));

  auto topic_word = [&](int t) {
    std::string w = kTopicWords[t % n_named];
    if (t >= n_named) w += std::to_string(t / n_named);
    return w;
  };

  // catalog: item i belongs to topic i % n_topics
  std::ostringstream cat;
  for (int i = 0; i < spec.n_items; ++i) {
    int t = i % spec.n_topics;
    char id[16];
    std::snprintf(id, sizeof(id), "i%04d", i);
    json j{{"item_id", id},
           {"item_text", "Item " + std::to_string(i) + " " + topic_word(t)},
           {"keywords", {topic_word(t)}}};
    cat << j.dump() << "\n";
  }
  write_text_file(catalog_jsonl, cat.str());

  Rng rng(mix_seed(spec.seed, "synthetic_corpus"));
  std::ostringstream csv;
  csv << "session_id,item_id,timestamp\n";
  for (int s = 0; s < spec.n_sessions; ++s) {
    int topic = static_cast<int>(rng.uniform_int(0, spec.n_topics - 1));
    int len = static_cast<int>(
        rng.uniform_int(spec.min_session_length, spec.max_session_length));
    std::int64_t base_ts = 1'000'000 + static_cast<std::int64_t>(s) * 100;
    char sid[16];
    std::snprintf(sid, sizeof(sid), "s%05d", s);
    int prev = -1;
    for (int e = 0; e < len; ++e) {
      int item;
      for (int attempt = 0;; ++attempt) {
        if (rng.uniform() < spec.noise_prob) {
          item = static_cast<int>(rng.uniform_int(0, spec.n_items - 1));
        } else {
          // uniform over the topic's items
          int per_topic = (spec.n_items + spec.n_topics - 1 - topic) / spec.n_topics;
          int pick = static_cast<int>(rng.uniform_int(0, per_topic - 1));
          item = topic + pick * spec.n_topics;
        }
        if (item != prev || attempt >= 4) break;  // avoid immediate repeats
      }
      prev = item;
      char iid[16];
      std::snprintf(iid, sizeof(iid), "i%04d", item);
      csv << sid << ',' << iid << ',' << (base_ts + e) << "\n";
    }
  }
  write_text_file(interactions_csv, csv.str());
}

}  // namespace sessionlab
