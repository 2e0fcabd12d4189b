#include "sessionlab/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace sessionlab {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- ItemCatalog ---------------------------------------------------------

ItemCatalog::ItemCatalog(std::vector<CatalogEntry> entries, bool append_keywords)
    : entries_(std::move(entries)), append_keywords_(append_keywords) {
  index_.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto [it, inserted] = index_.emplace(entries_[i].item_id, i);
    if (!inserted) throw Error("duplicate catalog item_id: " + entries_[i].item_id);
  }
}

const CatalogEntry* ItemCatalog::find(const ItemId& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &entries_[it->second];
}

const CatalogEntry& ItemCatalog::at(const ItemId& id) const {
  const CatalogEntry* e = find(id);
  if (!e) throw Error("item not in catalog: " + id);
  return *e;
}

std::string ItemCatalog::embedding_text(const ItemId& id) const {
  const CatalogEntry& e = at(id);
  if (!append_keywords_ || e.keywords.empty()) return e.text;
  return e.text + " " + join_strings(e.keywords, " ");
}

ItemCatalog ItemCatalog::filtered(const std::unordered_map<ItemId, long long>& keep) const {
  std::vector<CatalogEntry> kept;
  kept.reserve(keep.size());
  for (const auto& e : entries_)
    if (keep.count(e.item_id)) kept.push_back(e);
  return ItemCatalog(std::move(kept), append_keywords_);
}

// ---- stats ----------------------------------------------------------------

DatasetStats compute_stats(const std::vector<Session>& sessions) {
  DatasetStats st;
  st.sessions = sessions.size();
  std::set<ItemId> distinct;
  for (const auto& s : sessions) {
    st.interactions += s.items.size();
    distinct.insert(s.items.begin(), s.items.end());
  }
  st.items = distinct.size();
  if (st.sessions > 0) st.avg_session_length = static_cast<double>(st.interactions) / st.sessions;
  if (st.sessions > 0 && st.items > 0)
    st.density = static_cast<double>(st.interactions) /
                 (static_cast<double>(st.sessions) * static_cast<double>(st.items));
  return st;
}

PopularityCounts interaction_counts(const std::vector<Session>& sessions) {
  PopularityCounts c;
  for (const auto& s : sessions)
    for (const auto& it : s.items) ++c[it];
  return c;
}

PopularityCounts presence_counts(const std::vector<Session>& sessions) {
  PopularityCounts c;
  std::set<ItemId> seen;
  for (const auto& s : sessions) {
    seen.clear();
    seen.insert(s.items.begin(), s.items.end());
    for (const auto& it : seen) ++c[it];
  }
  return c;
}

// ---- ingest ----------------------------------------------------------------

namespace {

std::int64_t parse_ts(const std::string& field, std::size_t line_no) {
  std::int64_t v = 0;
  // accept integer or float-looking timestamps (truncated)
  const char* b = field.data();
  const char* e = b + field.size();
  auto res = std::from_chars(b, e, v);
  if (res.ec == std::errc() && res.ptr == e) {
    if (v < 0) throw Error("negative timestamp at line " + std::to_string(line_no));
    return v;
  }
  try {
    std::size_t pos = 0;
    double d = std::stod(field, &pos);
    if (pos != field.size()) throw std::invalid_argument("trailing");
    if (d < 0) throw Error("negative timestamp at line " + std::to_string(line_no));
    return static_cast<std::int64_t>(d);
  } catch (const Error&) {
    throw;
  } catch (...) {
    throw Error("bad timestamp '" + field + "' at line " + std::to_string(line_no));
  }
}

std::string strip(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<Interaction> read_interactions_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open interactions file: " + path);
  std::vector<Interaction> rows;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = strip(line);
    if (t.empty()) continue;
    if (!header_seen) {
      header_seen = true;
      if (t == "session_id,item_id,timestamp") continue;  // header optional
    }
    auto fields = split_string(t, ',');
    if (fields.size() != 3)
      throw Error("expected 3 fields at line " + std::to_string(line_no) + ": " + t);
    Interaction r;
    r.session_id = strip(fields[0]);
    r.item_id = strip(fields[1]);
    if (r.session_id.empty() || r.item_id.empty())
      throw Error("empty session_id or item_id at line " + std::to_string(line_no));
    r.timestamp = parse_ts(strip(fields[2]), line_no);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<Interaction> read_interactions_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open interactions file: " + path);
  std::vector<Interaction> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (strip(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& ex) {
      throw Error("bad json at line " + std::to_string(line_no) + ": " + ex.what());
    }
    Interaction r;
    try {
      r.session_id = j.at("session_id").get<std::string>();
      r.item_id = j.at("item_id").get<std::string>();
      r.timestamp = j.at("timestamp").get<std::int64_t>();
    } catch (const std::exception& ex) {
      throw Error("bad interaction at line " + std::to_string(line_no) + ": " + ex.what());
    }
    if (r.session_id.empty() || r.item_id.empty())
      throw Error("empty session_id or item_id at line " + std::to_string(line_no));
    if (r.timestamp < 0) throw Error("negative timestamp at line " + std::to_string(line_no));
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<CatalogEntry> read_catalog_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open catalog file: " + path);
  std::vector<CatalogEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (strip(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& ex) {
      throw Error("bad catalog json at line " + std::to_string(line_no) + ": " + ex.what());
    }
    CatalogEntry e;
    try {
      e.item_id = j.at("item_id").get<std::string>();
      e.text = j.value("item_text", std::string());
      if (j.contains("keywords")) e.keywords = j["keywords"].get<std::vector<std::string>>();
    } catch (const std::exception& ex) {
      throw Error("bad catalog entry at line " + std::to_string(line_no) + ": " + ex.what());
    }
    if (e.item_id.empty()) throw Error("empty item_id in catalog at line " + std::to_string(line_no));
    entries.push_back(std::move(e));
  }
  return entries;
}

void sort_sessions(std::vector<Session>& sessions) {
  std::sort(sessions.begin(), sessions.end(), [](const Session& a, const Session& b) {
    if (a.start_ts != b.start_ts) return a.start_ts < b.start_ts;
    return a.session_id < b.session_id;
  });
}

// Rebuild session list from filtered events, dropping sessions shorter than min_len.
std::vector<Session> group_sessions(std::vector<Interaction>& rows, std::size_t min_len) {
  std::unordered_map<SessionId, std::vector<std::size_t>> by_session;
  for (std::size_t i = 0; i < rows.size(); ++i) by_session[rows[i].session_id].push_back(i);
  std::vector<Session> sessions;
  sessions.reserve(by_session.size());
  for (auto& [sid, idxs] : by_session) {
    if (idxs.size() < min_len) continue;
    // stable: ties in timestamp keep file order
    std::stable_sort(idxs.begin(), idxs.end(), [&](std::size_t a, std::size_t b) {
      return rows[a].timestamp < rows[b].timestamp;
    });
    Session s;
    s.session_id = sid;
    s.items.reserve(idxs.size());
    for (std::size_t i : idxs) s.items.push_back(rows[i].item_id);
    s.start_ts = rows[idxs.front()].timestamp;
    s.end_ts = rows[idxs.back()].timestamp;
    sessions.push_back(std::move(s));
  }
  sort_sessions(sessions);
  return sessions;
}

}  // namespace

Dataset ingest(const std::string& interactions_path, const std::string& catalog_path,
               const IngestOptions& opts) {
  std::vector<Interaction> rows = opts.format == LogFormat::csv
                                      ? read_interactions_csv(interactions_path)
                                      : read_interactions_jsonl(interactions_path);
  if (rows.empty()) throw Error("no interactions in " + interactions_path);

  ItemCatalog catalog(read_catalog_jsonl(catalog_path), opts.append_keywords);

  // items in the log must exist in the catalog
  std::vector<ItemId> unknown;
  std::set<ItemId> reported;
  for (const auto& r : rows)
    if (!catalog.has(r.item_id) && reported.insert(r.item_id).second) unknown.push_back(r.item_id);
  if (!unknown.empty()) {
    std::string msg = "log items missing from catalog: ";
    for (std::size_t i = 0; i < unknown.size() && i < 10; ++i) {
      if (i) msg += ", ";
      msg += unknown[i];
    }
    if (unknown.size() > 10) msg += ", and " + std::to_string(unknown.size() - 10) + " more";
    throw Error(msg);
  }

  Dataset ds;
  ds.sessions = group_sessions(rows, 2);  // single-event sessions carry no signal
  if (ds.sessions.empty()) throw Error("no sessions with >= 2 interactions");
  ds.stats = compute_stats(ds.sessions);
  ds.catalog = catalog.filtered(interaction_counts(ds.sessions));
  return ds;
}

Dataset p_core_filter(const Dataset& ds, int p) {
  if (p < 1) throw Error("p-core requires p >= 1");
  std::vector<Session> sessions = ds.sessions;
  bool changed = true;
  while (changed) {
    changed = false;
    PopularityCounts counts = interaction_counts(sessions);
    std::vector<Session> next;
    next.reserve(sessions.size());
    for (auto& s : sessions) {
      std::vector<ItemId> kept;
      kept.reserve(s.items.size());
      for (auto& it : s.items)
        if (counts[it] >= p) kept.push_back(it);
      if (kept.size() != s.items.size()) changed = true;
      if (kept.size() >= static_cast<std::size_t>(p) && kept.size() >= 2) {
        Session ns = s;
        ns.items = std::move(kept);
        next.push_back(std::move(ns));
      } else if (!s.items.empty()) {
        changed = true;
      }
    }
    sessions = std::move(next);
    if (sessions.empty()) throw Error("p-core filtering removed every session (p=" + std::to_string(p) + ")");
  }
  Dataset out;
  out.sessions = std::move(sessions);
  sort_sessions(out.sessions);
  out.stats = compute_stats(out.sessions);
  out.catalog = ds.catalog.filtered(interaction_counts(out.sessions));
  return out;
}

TestCase leave_one_out(const Session& s) {
  if (s.items.size() < 2) throw Error("leave-one-out needs >= 2 items: session " + s.session_id);
  TestCase tc;
  tc.session_id = s.session_id;
  tc.prompt.assign(s.items.begin(), s.items.end() - 1);
  tc.ground_truth = s.items.back();
  return tc;
}

SplitSpec temporal_split(const Dataset& ds, double test_fraction) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw Error("test_fraction must be in (0, 1)");
  const std::size_t n = ds.sessions.size();
  // epsilon guards IEEE artifacts: 0.2*10 would otherwise ceil to 3
  std::size_t n_test =
      static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(n) - 1e-9));
  if (n_test == 0) throw Error("temporal split produced an empty test set");
  if (n_test >= n) throw Error("temporal split produced an empty train set");

  SplitSpec sp;
  sp.train.sessions.assign(ds.sessions.begin(), ds.sessions.end() - n_test);
  sp.train.catalog = ds.catalog;  // full catalog: coverage denominator, embeddings
  sp.train.stats = compute_stats(sp.train.sessions);
  for (auto it = ds.sessions.end() - n_test; it != ds.sessions.end(); ++it)
    sp.test.push_back(leave_one_out(*it));
  return sp;
}

std::array<Fold, 3> make_validation_folds(const Dataset& train) {
  const std::size_t n = train.sessions.size();
  if (n < 4) throw Error("validation folds need >= 4 training sessions");
  std::array<std::size_t, 5> bounds{};
  for (std::size_t i = 0; i <= 4; ++i) bounds[i] = n * i / 4;
  for (std::size_t i = 0; i < 4; ++i)
    if (bounds[i] == bounds[i + 1])
      throw Error("validation fold bin " + std::to_string(i + 1) + " is empty");

  std::array<Fold, 3> folds;
  for (std::size_t f = 0; f < 3; ++f) {
    Fold& fold = folds[f];
    fold.train.sessions.assign(train.sessions.begin(),
                               train.sessions.begin() + bounds[f + 1]);
    fold.train.catalog = train.catalog;
    fold.train.stats = compute_stats(fold.train.sessions);
    for (std::size_t i = bounds[f + 1]; i < bounds[f + 2]; ++i)
      fold.test.push_back(leave_one_out(train.sessions[i]));
  }
  return folds;
}

LdaClassMap build_lda_classes(const ItemCatalog& catalog) {
  LdaClassMap out;
  std::set<std::string> distinct;
  for (const auto& e : catalog.entries()) {
    if (e.keywords.empty()) {
      out.missing.push_back(e.item_id);
      continue;
    }
    std::vector<std::string> kw = e.keywords;
    std::sort(kw.begin(), kw.end());
    kw.erase(std::unique(kw.begin(), kw.end()), kw.end());
    std::string label = join_strings(kw, "_");
    out.classes[e.item_id] = label;
    distinct.insert(label);
  }
  out.n_classes = distinct.size();
  if (out.classes.empty()) throw Error("no items carry keywords; class labels unavailable");
  return out;
}

// ---- serialization ----------------------------------------------------------

namespace {

json stats_to_json(const DatasetStats& st) {
  return json{{"sessions", st.sessions},
              {"items", st.items},
              {"interactions", st.interactions},
              {"avg_session_length", st.avg_session_length},
              {"density", st.density}};
}

DatasetStats stats_from_json(const json& j) {
  DatasetStats st;
  st.sessions = j.at("sessions").get<std::size_t>();
  st.items = j.at("items").get<std::size_t>();
  st.interactions = j.at("interactions").get<std::size_t>();
  st.avg_session_length = j.at("avg_session_length").get<double>();
  st.density = j.at("density").get<double>();
  return st;
}

void write_catalog_jsonl(const ItemCatalog& catalog, const std::string& path) {
  std::ostringstream out;
  for (const auto& e : catalog.entries()) {
    json j{{"item_id", e.item_id}, {"item_text", e.text}, {"keywords", e.keywords}};
    out << j.dump() << "\n";
  }
  write_text_file(path, out.str());
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  std::ostringstream sess;
  for (const auto& s : ds.sessions) {
    json j{{"session_id", s.session_id},
           {"items", s.items},
           {"start_ts", s.start_ts},
           {"end_ts", s.end_ts}};
    sess << j.dump() << "\n";
  }
  write_text_file(dir + "/sessions.jsonl", sess.str());
  write_catalog_jsonl(ds.catalog, dir + "/catalog.jsonl");
  json manifest{{"format_version", 1},
                {"stats", stats_to_json(ds.stats)},
                {"append_keywords", ds.catalog.append_keywords()},
                {"files", {{"sessions", "sessions.jsonl"}, {"catalog", "catalog.jsonl"}}}};
  write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::string& dir) {
  json manifest;
  try {
    manifest = json::parse(read_text_file(dir + "/manifest.json"));
  } catch (const std::exception& ex) {
    throw Error(std::string("bad dataset manifest in ") + dir + ": " + ex.what());
  }
  Dataset ds;
  bool append_kw = manifest.value("append_keywords", false);
  ds.catalog = ItemCatalog(
      read_catalog_jsonl(dir + "/" + manifest.at("files").at("catalog").get<std::string>()),
      append_kw);

  std::ifstream in(dir + "/" + manifest.at("files").at("sessions").get<std::string>());
  if (!in) throw Error("cannot open sessions file in " + dir);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& ex) {
      throw Error("bad session json at line " + std::to_string(line_no) + ": " + ex.what());
    }
    Session s;
    s.session_id = j.at("session_id").get<std::string>();
    s.items = j.at("items").get<std::vector<ItemId>>();
    s.start_ts = j.at("start_ts").get<std::int64_t>();
    s.end_ts = j.at("end_ts").get<std::int64_t>();
    for (const auto& it : s.items)
      if (!ds.catalog.has(it)) throw Error("session item missing from catalog: " + it);
    ds.sessions.push_back(std::move(s));
  }
  ds.stats = stats_from_json(manifest.at("stats"));
  DatasetStats actual = compute_stats(ds.sessions);
  if (actual.sessions != ds.stats.sessions || actual.interactions != ds.stats.interactions)
    throw Error("dataset manifest stats disagree with sessions file in " + dir);
  return ds;
}

void save_split(const SplitSpec& split, const std::string& dir) {
  fs::create_directories(dir);
  save_dataset(split.train, dir + "/train");
  std::ostringstream out;
  for (const auto& tc : split.test) {
    json j{{"session_id", tc.session_id},
           {"prompt", tc.prompt},
           {"ground_truth", tc.ground_truth}};
    out << j.dump() << "\n";
  }
  write_text_file(dir + "/test.jsonl", out.str());
}

SplitSpec load_split(const std::string& dir) {
  SplitSpec sp;
  sp.train = load_dataset(dir + "/train");
  std::ifstream in(dir + "/test.jsonl");
  if (!in) throw Error("cannot open " + dir + "/test.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    TestCase tc;
    tc.session_id = j.at("session_id").get<std::string>();
    tc.prompt = j.at("prompt").get<std::vector<ItemId>>();
    tc.ground_truth = j.at("ground_truth").get<std::string>();
    sp.test.push_back(std::move(tc));
  }
  return sp;
}

}  // namespace sessionlab
