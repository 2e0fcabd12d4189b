#include "sessionlab/embeddings.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include <httplib.h>

namespace sessionlab {

using nlohmann::json;

// ---- EmbeddingMatrix --------------------------------------------------------

void EmbeddingMatrix::rebuild_index() {
  index.clear();
  index.reserve(item_ids.size());
  for (std::size_t i = 0; i < item_ids.size(); ++i) {
    auto [it, inserted] = index.emplace(item_ids[i], static_cast<Eigen::Index>(i));
    if (!inserted) throw Error("duplicate item in embedding matrix: " + item_ids[i]);
  }
}

Eigen::Index EmbeddingMatrix::row_of(const ItemId& id) const {
  auto it = index.find(id);
  if (it == index.end()) throw Error("missing embedding for item: " + id);
  return it->second;
}

Eigen::MatrixXd EmbeddingMatrix::rows_for(const std::vector<ItemId>& items) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(items.size()), vectors.cols());
  for (std::size_t i = 0; i < items.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = vectors.row(row_of(items[i]));
  return out;
}

void EmbeddingMatrix::validate() const {
  if (vectors.rows() != static_cast<Eigen::Index>(item_ids.size()))
    throw Error("embedding matrix row count disagrees with item list");
  if (vectors.cols() != dim) throw Error("embedding matrix dim disagrees with header");
  if (!vectors.allFinite()) throw Error("embedding matrix contains NaN or Inf");
  if (normalized) {
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
      double n = vectors.row(i).norm();
      if (std::abs(n - 1.0) > 1e-6)
        throw Error("row not unit-norm for item " + item_ids[static_cast<std::size_t>(i)]);
    }
  }
}

EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m) {
  EmbeddingMatrix out = m;
  std::vector<ItemId> zero_rows;
  for (Eigen::Index i = 0; i < out.vectors.rows(); ++i) {
    double n = out.vectors.row(i).norm();
    if (n < 1e-12) {
      zero_rows.push_back(out.item_ids[static_cast<std::size_t>(i)]);
      continue;
    }
    out.vectors.row(i) /= n;
  }
  if (!zero_rows.empty()) {
    std::string msg = "cannot normalize all-zero embedding rows: ";
    for (std::size_t i = 0; i < zero_rows.size() && i < 10; ++i) {
      if (i) msg += ", ";
      msg += zero_rows[i];
    }
    throw Error(msg);
  }
  out.normalized = true;
  return out;
}

// ---- synthetic provider -------------------------------------------------------

namespace {

Eigen::VectorXd gaussian_vector(int dim, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v(i) = rng.gaussian();
  return v;
}

}  // namespace

Eigen::VectorXd synthetic_text_vector(const std::string& text, int dim, std::uint64_t seed) {
  if (dim <= 0) throw Error("embedding dim must be positive");
  return gaussian_vector(dim, mix_seed(seed, "text:" + text));
}

EmbeddingMatrix synthetic_embeddings(const ItemCatalog& catalog, int dim, std::uint64_t seed,
                                     const std::vector<Session>* corpus) {
  if (dim <= 0) throw Error("embedding dim must be positive");
  if (catalog.empty()) throw Error("cannot embed an empty catalog");

  EmbeddingMatrix m;
  m.dim = dim;
  m.provider = corpus ? "synthetic-semantic" : "synthetic";
  m.item_ids.reserve(catalog.size());
  m.vectors.resize(static_cast<Eigen::Index>(catalog.size()), dim);

  // co-occurrence structure: each session contributes one latent direction to
  // every item it contains
  std::unordered_map<ItemId, Eigen::VectorXd> latent_sum;
  if (corpus) {
    for (const auto& s : *corpus) {
      Eigen::VectorXd dir = gaussian_vector(dim, mix_seed(seed, "session:" + s.session_id));
      dir.normalize();
      std::set<ItemId> uniq(s.items.begin(), s.items.end());
      for (const auto& it : uniq) {
        auto [pos, inserted] = latent_sum.try_emplace(it, Eigen::VectorXd::Zero(dim));
        pos->second += dir;
      }
    }
  }

  Eigen::Index r = 0;
  for (const auto& e : catalog.entries()) {
    Eigen::VectorXd noise = synthetic_text_vector(catalog.embedding_text(e.item_id), dim, seed);
    Eigen::VectorXd v = noise;
    if (corpus) {
      auto it = latent_sum.find(e.item_id);
      if (it != latent_sum.end() && it->second.norm() > 0) {
        Eigen::VectorXd topic = it->second.normalized();
        v = topic + 0.25 * noise.normalized();
      }
    }
    m.item_ids.push_back(e.item_id);
    m.vectors.row(r++) = v.transpose();
  }
  m.rebuild_index();
  m.validate();
  return m;
}

// ---- cache ----------------------------------------------------------------

std::vector<CacheEntry> read_embedding_cache(const std::string& path) {
  std::vector<CacheEntry> entries;
  std::ifstream in(path);
  if (!in) return entries;  // absent cache = empty cache
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& ex) {
      throw Error("bad cache line " + std::to_string(line_no) + " in " + path + ": " + ex.what());
    }
    CacheEntry e;
    try {
      e.item_id = j.at("item_id").get<std::string>();
      e.model = j.at("model").get<std::string>();
      e.text_hash = j.at("text_hash").get<std::string>();
      e.dim = j.at("dim").get<int>();
      e.vector = j.at("vector").get<std::vector<float>>();
    } catch (const std::exception& ex) {
      throw Error("bad cache entry at line " + std::to_string(line_no) + ": " + ex.what());
    }
    if (static_cast<int>(e.vector.size()) != e.dim)
      throw Error("cache entry dim mismatch at line " + std::to_string(line_no));
    entries.push_back(std::move(e));
  }
  return entries;
}

namespace {

json cache_entry_to_json(const CacheEntry& e) {
  return json{{"item_id", e.item_id},
              {"model", e.model},
              {"text_hash", e.text_hash},
              {"dim", e.dim},
              {"vector", e.vector}};
}

}  // namespace

void append_embedding_cache(const std::string& path, const std::vector<CacheEntry>& entries) {
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  // one buffered write per batch keeps partial progress intact on failure
  std::ostringstream buf;
  for (const auto& e : entries) buf << cache_entry_to_json(e).dump() << "\n";
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error("cannot open cache for append: " + path);
  out << buf.str();
  out.flush();
  if (!out) throw Error("cache append failed: " + path);
}

std::size_t compact_embedding_cache(const std::string& path) {
  std::vector<CacheEntry> entries = read_embedding_cache(path);
  // newest entry wins per (item, model, text_hash)
  std::unordered_map<std::string, std::size_t> last;
  for (std::size_t i = 0; i < entries.size(); ++i)
    last[entries[i].item_id + "\x1f" + entries[i].model + "\x1f" + entries[i].text_hash] = i;
  std::ostringstream buf;
  std::size_t kept = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto key = entries[i].item_id + "\x1f" + entries[i].model + "\x1f" + entries[i].text_hash;
    if (last[key] != i) continue;
    buf << cache_entry_to_json(entries[i]).dump() << "\n";
    ++kept;
  }
  write_text_file(path, buf.str());
  return entries.size() - kept;
}

// ---- HTTP transport ---------------------------------------------------------

namespace {

struct ParsedUrl {
  std::string host_port;  // scheme://host[:port]
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint missing scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl p;
  if (path_start == std::string::npos) {
    p.host_port = url;
    p.path = "/";
  } else {
    p.host_port = url.substr(0, path_start);
    p.path = url.substr(path_start);
  }
  return p;
}

class HttpTransport : public Transport {
 public:
  std::string post_json(const std::string& url, const std::string& body,
                        const std::vector<std::pair<std::string, std::string>>& headers) override {
    ParsedUrl p = parse_url(url);
    httplib::Client client(p.host_port);
    client.set_connection_timeout(10);
    client.set_read_timeout(120);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = client.Post(p.path, h, body, "application/json");
    if (!res) throw Error("HTTP request to " + url + " failed: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
      throw Error("HTTP " + std::to_string(res->status) + " from " + url + ": " + res->body);
    return res->body;
  }
};

}  // namespace

std::unique_ptr<Transport> make_http_transport() { return std::make_unique<HttpTransport>(); }

// ---- fetch ----------------------------------------------------------------

namespace {

std::vector<std::pair<std::string, std::string>> auth_headers(const ProviderConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> h;
  if (!cfg.api_key.empty()) h.emplace_back("Authorization", "Bearer " + cfg.api_key);
  return h;
}

// one POST with retries; returns vectors in input order
std::vector<std::vector<float>> request_batch(const std::vector<std::string>& texts,
                                              const ProviderConfig& cfg, Transport& transport) {
  json req{{"model", cfg.model}, {"input", texts}};
  std::string last_error;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(
          std::chrono::milliseconds(static_cast<long long>(cfg.retry_base_ms) << (attempt - 1)));
    try {
      std::string body = transport.post_json(cfg.endpoint, req.dump(), auth_headers(cfg));
      json resp = json::parse(body);
      const json& data = resp.at(cfg.data_field);
      if (!data.is_array() || data.size() != texts.size())
        throw Error("embedding response size " + std::to_string(data.size()) + " != batch size " +
                    std::to_string(texts.size()));
      std::vector<std::vector<float>> out(texts.size());
      std::vector<bool> filled(texts.size(), false);
      for (std::size_t pos = 0; pos < data.size(); ++pos) {
        const json& row = data[pos];
        std::size_t idx =
            row.contains(cfg.index_field) ? row.at(cfg.index_field).get<std::size_t>() : pos;
        if (idx >= texts.size()) throw Error("embedding response index out of range");
        out[idx] = row.at(cfg.embedding_field).get<std::vector<float>>();
        filled[idx] = true;
      }
      for (std::size_t i = 0; i < texts.size(); ++i)
        if (!filled[i]) throw Error("embedding response missing index " + std::to_string(i));
      return out;
    } catch (const std::exception& ex) {
      last_error = ex.what();
    }
  }
  throw Error("embedding request failed after " + std::to_string(cfg.max_retries + 1) +
              " attempts: " + last_error);
}

}  // namespace

FetchResult fetch_embeddings(const ItemCatalog& catalog, const ProviderConfig& cfg,
                             const std::string& cache_path, Transport& transport) {
  if (catalog.empty()) throw Error("cannot embed an empty catalog");
  if (cfg.endpoint.empty()) throw ConfigError("embedding provider endpoint is empty");
  if (cfg.batch_size <= 0) throw ConfigError("embedding batch_size must be positive");

  // newest cache entry wins per (item, model, text_hash)
  std::unordered_map<std::string, CacheEntry> cached;
  for (auto& e : read_embedding_cache(cache_path))
    cached[e.item_id + "\x1f" + e.model + "\x1f" + e.text_hash] = std::move(e);

  FetchResult result;
  EmbeddingMatrix& m = result.matrix;
  m.provider = cfg.model;
  int dim = cfg.dim;

  struct Pending {
    ItemId item_id;
    std::string text;
    std::string text_hash;
  };
  std::vector<Pending> missing;
  std::unordered_map<ItemId, CacheEntry*> resolved;

  for (const auto& e : catalog.entries()) {
    std::string text = catalog.embedding_text(e.item_id);
    std::string th = fnv1a64_hex(text);
    auto it = cached.find(e.item_id + "\x1f" + cfg.model + "\x1f" + th);
    if (it != cached.end()) {
      resolved[e.item_id] = &it->second;
      ++result.cache_hits;
    } else {
      missing.push_back({e.item_id, std::move(text), std::move(th)});
    }
  }

  for (std::size_t start = 0; start < missing.size();
       start += static_cast<std::size_t>(cfg.batch_size)) {
    std::size_t end = std::min(missing.size(), start + static_cast<std::size_t>(cfg.batch_size));
    std::vector<std::string> texts;
    texts.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) texts.push_back(missing[i].text);

    std::vector<std::vector<float>> vecs;
    try {
      vecs = request_batch(texts, cfg, transport);
    } catch (const std::exception& ex) {
      std::string ids;
      for (std::size_t i = start; i < end && i < start + 5; ++i) {
        if (i > start) ids += ", ";
        ids += missing[i].item_id;
      }
      throw Error(std::string("embedding fetch failed for batch starting at item ") + ids + ": " +
                  ex.what());
    }

    std::vector<CacheEntry> batch_entries;
    for (std::size_t i = start; i < end; ++i) {
      CacheEntry ce;
      ce.item_id = missing[i].item_id;
      ce.model = cfg.model;
      ce.text_hash = missing[i].text_hash;
      ce.vector = std::move(vecs[i - start]);
      ce.dim = static_cast<int>(ce.vector.size());
      if (dim == 0) dim = ce.dim;
      if (ce.dim != dim)
        throw Error("embedding dimension mismatch for item " + ce.item_id + ": got " +
                    std::to_string(ce.dim) + ", expected " + std::to_string(dim));
      batch_entries.push_back(std::move(ce));
    }
    append_embedding_cache(cache_path, batch_entries);  // persist before the next batch
    for (auto& ce : batch_entries) {
      std::string key = ce.item_id + "\x1f" + ce.model + "\x1f" + ce.text_hash;
      auto [it, ok] = cached.emplace(std::move(key), std::move(ce));
      resolved[it->second.item_id] = &it->second;
    }
    result.fetched += end - start;
  }

  // assemble, enforcing one consistent dimension across cache hits and fetches
  for (const auto& e : catalog.entries()) {
    const CacheEntry* ce = resolved.at(e.item_id);
    if (dim == 0) dim = ce->dim;
    if (ce->dim != dim)
      throw Error("embedding dimension mismatch across cache entries: item " + e.item_id +
                  " has dim " + std::to_string(ce->dim) + ", expected " + std::to_string(dim));
  }
  m.dim = dim;
  m.item_ids.reserve(catalog.size());
  m.vectors.resize(static_cast<Eigen::Index>(catalog.size()), dim);
  Eigen::Index r = 0;
  for (const auto& e : catalog.entries()) {
    const CacheEntry* ce = resolved.at(e.item_id);
    for (int c = 0; c < dim; ++c)
      m.vectors(r, c) = static_cast<double>(ce->vector[static_cast<std::size_t>(c)]);
    m.item_ids.push_back(e.item_id);
    ++r;
  }
  m.rebuild_index();
  m.validate();
  return result;
}

Eigen::VectorXd fetch_text_vector(const std::string& text, const ProviderConfig& cfg,
                                  Transport& transport) {
  auto vecs = request_batch({text}, cfg, transport);
  Eigen::VectorXd v(static_cast<Eigen::Index>(vecs[0].size()));
  for (std::size_t i = 0; i < vecs[0].size(); ++i)
    v(static_cast<Eigen::Index>(i)) = static_cast<double>(vecs[0][i]);
  return v;
}

}  // namespace sessionlab
