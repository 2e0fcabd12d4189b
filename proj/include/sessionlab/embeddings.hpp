#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "sessionlab/dataset.hpp"

namespace sessionlab {

// Item embedding matrix, rows aligned with item_ids. Values live in double in
// memory; every vector that crosses the cache file is quantized through f32
// first, so matrices rebuilt from cache match the original bytes.
struct EmbeddingMatrix {
  std::vector<ItemId> item_ids;
  Eigen::MatrixXd vectors;  // one row per item
  std::string provider;     // provenance tag, e.g. "synthetic" or a model name
  int dim = 0;
  bool normalized = false;

  std::unordered_map<ItemId, Eigen::Index> index;

  void rebuild_index();
  bool has(const ItemId& id) const { return index.count(id) != 0; }
  Eigen::Index row_of(const ItemId& id) const;  // throws when absent
  Eigen::VectorXd row(const ItemId& id) const { return vectors.row(row_of(id)).transpose(); }

  // Rows for a session's items, oldest first. Throws naming the first item
  // without an embedding.
  Eigen::MatrixXd rows_for(const std::vector<ItemId>& items) const;

  void validate() const;  // finite values, index/row agreement, unit rows when normalized
};

// L2-normalize rows. All-zero rows are an error (lists the offenders).
EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m);

// ---- synthetic provider ---------------------------------------------------

// Deterministic Gaussian embeddings keyed by the item's embedding text (same
// text => same vector, matching the text-resolution path). When `corpus` is
// given, items additionally receive the latent directions of the sessions
// they appear in, so items that co-occur land near each other ("semantic"
// mode).
EmbeddingMatrix synthetic_embeddings(const ItemCatalog& catalog, int dim, std::uint64_t seed,
                                     const std::vector<Session>* corpus = nullptr);

// Embeds free text in the same space as the non-semantic synthetic provider.
Eigen::VectorXd synthetic_text_vector(const std::string& text, int dim, std::uint64_t seed);

// ---- HTTP provider ----------------------------------------------------------

// Injectable transport so providers can be tested without a network.
class Transport {
 public:
  virtual ~Transport() = default;
  // POST a JSON body; returns the response body. Throws Error on failure.
  virtual std::string post_json(const std::string& url, const std::string& body,
                                const std::vector<std::pair<std::string, std::string>>& headers) = 0;
};

std::unique_ptr<Transport> make_http_transport();

struct ProviderConfig {
  std::string endpoint;              // e.g. http://host/v1/embeddings
  std::string model;                 // provider model name; part of the cache key
  int dim = 0;                       // expected dimension; 0 = accept first response
  int batch_size = 64;
  int max_retries = 3;
  int retry_base_ms = 100;           // backoff: base * 2^attempt
  std::string api_key;               // sent as Bearer token when non-empty
  // response field names (OpenAI-compatible by default)
  std::string data_field = "data";
  std::string embedding_field = "embedding";
  std::string index_field = "index";
};

struct CacheEntry {
  ItemId item_id;
  std::string model;
  std::string text_hash;  // fnv1a64 hex of the exact input text
  int dim = 0;
  std::vector<float> vector;
};

std::vector<CacheEntry> read_embedding_cache(const std::string& path);  // missing file => empty
void append_embedding_cache(const std::string& path, const std::vector<CacheEntry>& entries);

// Drop duplicate (item, model, text_hash) rows, keeping the newest, and
// rewrite the file. Returns the number of rows removed.
std::size_t compact_embedding_cache(const std::string& path);

struct FetchResult {
  EmbeddingMatrix matrix;
  std::size_t cache_hits = 0;
  std::size_t fetched = 0;
};

// Cache-first fetch: items whose (id, model, text-hash) is cached are reused;
// the rest are requested in batches and appended to the cache after each
// batch, so progress survives a mid-run failure. The assembled matrix is
// always built from the f32 cache representation.
FetchResult fetch_embeddings(const ItemCatalog& catalog, const ProviderConfig& provider,
                             const std::string& cache_path, Transport& transport);

// Embed one free-text string through the provider (used by resolution).
Eigen::VectorXd fetch_text_vector(const std::string& text, const ProviderConfig& provider,
                                  Transport& transport);

}  // namespace sessionlab
