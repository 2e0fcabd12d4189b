#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "sessionlab/common.hpp"

namespace sessionlab {

struct CatalogEntry {
  ItemId item_id;
  std::string text;                   // human-readable item text (title etc.)
  std::vector<std::string> keywords;  // categorical tags; may be empty
};

// Ordered item catalog with id lookup. Order is the source file order and is
// preserved through filtering so serialization is deterministic.
class ItemCatalog {
 public:
  ItemCatalog() = default;
  explicit ItemCatalog(std::vector<CatalogEntry> entries, bool append_keywords = false);

  const CatalogEntry* find(const ItemId& id) const;
  const CatalogEntry& at(const ItemId& id) const;  // throws Error when absent
  bool has(const ItemId& id) const { return index_.count(id) != 0; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<CatalogEntry>& entries() const { return entries_; }
  bool append_keywords() const { return append_keywords_; }

  // Text handed to embedding providers: item text, optionally followed by the
  // keyword list (ingest flag).
  std::string embedding_text(const ItemId& id) const;

  // New catalog containing only ids present in `keep`, original order.
  ItemCatalog filtered(const std::unordered_map<ItemId, long long>& keep) const;

 private:
  std::vector<CatalogEntry> entries_;
  std::unordered_map<ItemId, std::size_t> index_;
  bool append_keywords_ = false;
};

struct DatasetStats {
  std::size_t sessions = 0;
  std::size_t items = 0;         // distinct items appearing in sessions
  std::size_t interactions = 0;  // total session-item events
  double avg_session_length = 0.0;
  double density = 0.0;  // interactions / (sessions * items)
};

struct Dataset {
  std::vector<Session> sessions;  // sorted by (start_ts, session_id)
  ItemCatalog catalog;
  DatasetStats stats;
};

DatasetStats compute_stats(const std::vector<Session>& sessions);

// Interaction counts (total events per item) and presence counts (number of
// sessions containing the item at least once).
PopularityCounts interaction_counts(const std::vector<Session>& sessions);
PopularityCounts presence_counts(const std::vector<Session>& sessions);

struct TestCase {
  SessionId session_id;
  std::vector<ItemId> prompt;  // all but the final item
  ItemId ground_truth;         // the final item
};

struct SplitSpec {
  Dataset train;
  std::vector<TestCase> test;
};

struct Fold {
  Dataset train;
  std::vector<TestCase> test;
};

enum class LogFormat { csv, jsonl };

struct IngestOptions {
  LogFormat format = LogFormat::csv;
  bool append_keywords = false;  // append keywords to embedding text
};

// Parse an interaction log + catalog into a Dataset: group by session, order
// events chronologically (stable on ties), drop single-event sessions, prune
// the catalog to items that remain. Malformed rows and log items missing from
// the catalog raise Error with line context.
Dataset ingest(const std::string& interactions_path, const std::string& catalog_path,
               const IngestOptions& opts = {});

// Iterated p-core: drop items with < p interactions and sessions with < p
// items until a fixpoint. p=1 is the identity on an ingested dataset.
Dataset p_core_filter(const Dataset& ds, int p);

TestCase leave_one_out(const Session& s);

// Chronological holdout: last ceil(frac*N) sessions by start time become the
// test set (leave-one-out form); the rest train. Train keeps the full catalog.
SplitSpec temporal_split(const Dataset& ds, double test_fraction);

// Three train/validation folds from four chronological quartile bins:
// fold i trains on bins [0..i] and validates on bin i+1.
std::array<Fold, 3> make_validation_folds(const Dataset& train);

struct LdaClassMap {
  std::map<ItemId, std::string> classes;  // item -> class label
  std::vector<ItemId> missing;            // items without keywords
  std::size_t n_classes = 0;
};

// Class label per item = sorted keywords joined with "_". Items lacking
// keywords are reported; an empty class map is an error.
LdaClassMap build_lda_classes(const ItemCatalog& catalog);

// Directory round-trip: manifest.json + sessions.jsonl + catalog.jsonl.
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

void save_split(const SplitSpec& split, const std::string& dir);
SplitSpec load_split(const std::string& dir);

}  // namespace sessionlab
