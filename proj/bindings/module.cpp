// python surface: enough of the toolkit to drive experiments from a notebook
// (corpus generation, full pipeline runs, pooling/metrics/reduction helpers).

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sessionlab/dataset.hpp"
#include "sessionlab/metrics.hpp"
#include "sessionlab/pipeline.hpp"
#include "sessionlab/pooling.hpp"
#include "sessionlab/reduction.hpp"

namespace py = pybind11;
using namespace sessionlab;
using nlohmann::json;

namespace {

RecommendationList to_list(const std::vector<std::pair<std::string, double>>& ranked) {
  RecommendationList out;
  out.reserve(ranked.size());
  for (const auto& [id, score] : ranked) out.push_back({id, score});
  return out;
}

}  // namespace

PYBIND11_MODULE(_sessionlab, m) {
  m.doc() = "session-based recommendation toolkit (native core)";
  m.attr("__version__") = kVersion;

  // translators run newest-first, so the derived type must be registered last
  auto base_exc = py::register_exception<Error>(m, "SessionlabError");
  py::register_exception<ConfigError>(m, "ConfigError", base_exc.ptr());

  m.def(
      "generate_synthetic_corpus",
      [](const std::string& interactions_csv, const std::string& catalog_jsonl, int sessions,
         int items, int topics, int min_len, int max_len, double noise, std::uint64_t seed) {
        SyntheticSpec spec;
        spec.n_sessions = sessions;
        spec.n_items = items;
        spec.n_topics = topics;
        spec.min_session_length = min_len;
        spec.max_session_length = max_len;
        spec.noise_prob = noise;
        spec.seed = seed;
        generate_synthetic_corpus(spec, interactions_csv, catalog_jsonl);
      },
      py::arg("interactions_csv"), py::arg("catalog_jsonl"), py::arg("sessions") = 1000,
      py::arg("items") = 200, py::arg("topics") = 10, py::arg("min_len") = 3,
      py::arg("max_len") = 10, py::arg("noise") = 0.1, py::arg("seed") = 42,
      "Write a topic-structured interaction log + catalog.");

  m.def(
      "run",
      [](const std::string& config_json, const std::string& out_dir) {
        RunConfig cfg = RunConfig::from_json(json::parse(config_json), "<python>");
        run_pipeline(cfg, out_dir);
        // hand back the leaderboard as {model: ndcg@20}; rows are
        // model,cutoff,ndcg,... with one row per cutoff
        py::dict board;
        std::string csv = read_text_file(out_dir + "/leaderboard.csv");
        auto lines = split_string(csv, '\n');
        for (std::size_t i = 1; i < lines.size(); ++i) {
          if (lines[i].empty()) continue;
          auto cols = split_string(lines[i], ',');
          if (cols.size() >= 3 && cols[1] == "20") board[py::str(cols[0])] = std::stod(cols[2]);
        }
        return board;
      },
      py::arg("config_json"), py::arg("out_dir"),
      "Run a full pipeline from a json config string; returns {model: ndcg@20}.");

  m.def(
      "ingest_stats",
      [](const std::string& interactions, const std::string& catalog, const std::string& format,
         bool append_keywords, int p_core) {
        IngestOptions opts;
        opts.format = format == "jsonl" ? LogFormat::jsonl : LogFormat::csv;
        opts.append_keywords = append_keywords;
        Dataset ds = ingest(interactions, catalog, opts);
        if (p_core > 1) ds = p_core_filter(ds, p_core);
        py::dict d;
        d["sessions"] = ds.stats.sessions;
        d["items"] = ds.stats.items;
        d["interactions"] = ds.stats.interactions;
        d["avg_session_length"] = ds.stats.avg_session_length;
        d["density"] = ds.stats.density;
        return d;
      },
      py::arg("interactions"), py::arg("catalog"), py::arg("format") = "csv",
      py::arg("append_keywords") = false, py::arg("p_core") = 1,
      "Parse + filter an interaction log and return its statistics.");

  m.def(
      "decay_weights",
      [](const std::string& technique, int n) {
        return decay_weights(decay_technique_from_string(technique), n);
      },
      py::arg("technique"), py::arg("n"),
      "Normalized recency weights, oldest position first.");

  m.def(
      "pool",
      [](const Eigen::MatrixXd& rows, const std::string& strategy) {
        return pool_session(rows, PoolingStrategy::parse(strategy));
      },
      py::arg("rows"), py::arg("strategy") = "mean",
      "Pool session rows (oldest first) into one vector.");

  m.def(
      "pca_fit",
      [](const Eigen::MatrixXd& X, int k) {
        ReductionModel mdl = fit_pca(X, k);
        return py::make_tuple(mdl.projection, mdl.mean, mdl.eigenvalues);
      },
      py::arg("X"), py::arg("k"), "Fit PCA; returns (projection k x d, mean, eigenvalues).");

  m.def(
      "pca_transform",
      [](const Eigen::MatrixXd& X, const Eigen::MatrixXd& projection,
         const Eigen::VectorXd& mean) {
        ReductionModel mdl;
        mdl.method = ReductionMethod::pca;
        mdl.input_dim = static_cast<int>(projection.cols());
        mdl.output_dim = static_cast<int>(projection.rows());
        mdl.projection = projection;
        mdl.mean = mean;
        return reduce_transform(mdl, X);
      },
      py::arg("X"), py::arg("projection"), py::arg("mean"));

  m.def(
      "ndcg_at_k",
      [](const std::vector<std::pair<std::string, double>>& ranked, const std::string& gt,
         int k) { return ndcg_at_k(to_list(ranked), gt, k); },
      py::arg("ranked"), py::arg("ground_truth"), py::arg("k"));
  m.def(
      "hr_at_k",
      [](const std::vector<std::pair<std::string, double>>& ranked, const std::string& gt,
         int k) { return hr_at_k(to_list(ranked), gt, k); },
      py::arg("ranked"), py::arg("ground_truth"), py::arg("k"));
  m.def(
      "mrr_at_k",
      [](const std::vector<std::pair<std::string, double>>& ranked, const std::string& gt,
         int k) { return mrr_at_k(to_list(ranked), gt, k); },
      py::arg("ranked"), py::arg("ground_truth"), py::arg("k"));
}
