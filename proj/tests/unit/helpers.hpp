#pragma once

// Shared fixture builders for the unit suites.

#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "sessionlab/dataset.hpp"
#include "sessionlab/embeddings.hpp"

namespace testutil {

using namespace sessionlab;

// Catalog of n items: ids i00..i<n>, text "item <k> <id>", no keywords.
inline ItemCatalog make_catalog(int n) {
  std::vector<CatalogEntry> entries;
  for (int k = 0; k < n; ++k) {
    char id[8];
    std::snprintf(id, sizeof(id), "i%02d", k);
    entries.push_back({id, "item " + std::to_string(k) + " " + id, {}});
  }
  return ItemCatalog(std::move(entries));
}

inline ItemCatalog catalog_for(const std::vector<std::vector<ItemId>>& sessions) {
  std::set<ItemId> ids;
  for (const auto& s : sessions) ids.insert(s.begin(), s.end());
  std::vector<CatalogEntry> entries;
  for (const auto& id : ids) entries.push_back({id, "text of " + id, {}});
  return ItemCatalog(std::move(entries));
}

// Dataset from item lists; session k starts at ts 1000*k+1000, one tick per
// event, ids s00, s01, ... in the given order.
inline Dataset make_dataset(const std::vector<std::vector<ItemId>>& sessions,
                            ItemCatalog catalog = {}) {
  Dataset ds;
  for (std::size_t k = 0; k < sessions.size(); ++k) {
    Session s;
    char sid[8];
    std::snprintf(sid, sizeof(sid), "s%02d", static_cast<int>(k));
    s.session_id = sid;
    s.items = sessions[k];
    s.start_ts = 1000 * static_cast<std::int64_t>(k) + 1000;
    s.end_ts = s.start_ts + static_cast<std::int64_t>(s.items.size()) - 1;
    ds.sessions.push_back(std::move(s));
  }
  ds.catalog = catalog.empty() ? catalog_for(sessions) : std::move(catalog);
  ds.stats = compute_stats(ds.sessions);
  return ds;
}

// One-hot embedding per catalog item, dim = catalog size (row order = entry order).
inline EmbeddingMatrix one_hot_embeddings(const ItemCatalog& catalog) {
  EmbeddingMatrix m;
  const auto& entries = catalog.entries();
  m.dim = static_cast<int>(entries.size());
  m.vectors = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(entries.size()), m.dim);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    m.item_ids.push_back(entries[i].item_id);
    m.vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 1.0;
  }
  m.provider = "one_hot";
  m.normalized = true;
  m.rebuild_index();
  return m;
}

// Fresh scratch directory under the build tree's temp space.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("sessionlab_test_" + tag + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
