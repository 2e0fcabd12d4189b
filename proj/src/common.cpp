#include "sessionlab/common.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace sessionlab {

std::string fnv1a64_hex(std::string_view s) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(s)));
  return std::string(buf);
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw Error("uniform_int: empty range");
  std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(eng_());  // full 64-bit range
  std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t x;
  do {
    x = eng_();
  } while (x >= limit);
  return lo + static_cast<std::int64_t>(x % span);
}

double Rng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller; u clamped away from 0 so log stays finite
  double u = uniform();
  if (u < 1e-300) u = 1e-300;
  double v = uniform();
  double r = std::sqrt(-2.0 * std::log(u));
  double theta = 2.0 * M_PI * v;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

RecommendationList top_k_ranked(std::vector<ScoredItem> scored, int k,
                                const PopularityCounts* popularity) {
  if (k < 0) throw Error("top_k_ranked: negative k");
  auto pop_of = [&](const ItemId& id) -> long long {
    if (!popularity) return 0;
    auto it = popularity->find(id);
    return it == popularity->end() ? 0 : it->second;
  };
  std::sort(scored.begin(), scored.end(),
            [&](const ScoredItem& a, const ScoredItem& b) {
              if (a.score != b.score) return a.score > b.score;
              long long pa = pop_of(a.item_id), pb = pop_of(b.item_id);
              if (pa != pb) return pa > pb;
              return a.item_id < b.item_id;
            });
  if (scored.size() > static_cast<std::size_t>(k)) scored.resize(k);
  return scored;
}

std::vector<std::string> split_string(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string join_strings(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write file: " + path);
  out << content;
  if (!out) throw Error("write failed: " + path);
}

}  // namespace sessionlab
