#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sessionlab {

inline constexpr const char* kVersion = "0.1.0";

// Runtime failure (CLI exit 1).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad user input: malformed config, unknown flag value, missing file (CLI exit 2).
struct ConfigError : Error {
  using Error::Error;
};

using ItemId = std::string;
using SessionId = std::string;

struct Interaction {
  SessionId session_id;
  ItemId item_id;
  std::int64_t timestamp = 0;
};

struct Session {
  SessionId session_id;
  std::vector<ItemId> items;  // chronological, oldest first
  std::int64_t start_ts = 0;
  std::int64_t end_ts = 0;
};

struct ScoredItem {
  ItemId item_id;
  double score = 0.0;
};

using RecommendationList = std::vector<ScoredItem>;

using PopularityCounts = std::unordered_map<ItemId, long long>;

// ---- hashing -----------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string fnv1a64_hex(std::string_view s);

// Derive a stream seed from a base seed and a string key. Used to give each
// item/session/stage its own reproducible RNG without sharing state.
inline std::uint64_t mix_seed(std::uint64_t seed, std::string_view key) {
  std::uint64_t h = fnv1a64(key);
  // splitmix64 finalizer over the combined words
  std::uint64_t z = seed ^ (h + 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// ---- RNG ----------------------------------------------------------------
//
// mt19937_64 is bit-specified by the standard; the distribution adapters are
// not. All derived draws below are implemented by hand so streams are
// identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // uniform in [0, 1), 53-bit resolution
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [lo, hi], inclusive; rejection sampling avoids bias
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  // standard normal via Box-Muller (polar form avoided to keep draw count fixed)
  double gaussian();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---- ranking ------------------------------------------------------------

// Shared tie-break ladder: score desc, train popularity desc, item_id asc.
// `popularity` may be null (ladder degrades to score desc, id asc).
RecommendationList top_k_ranked(std::vector<ScoredItem> scored, int k,
                                const PopularityCounts* popularity);

// ---- misc ---------------------------------------------------------------

std::vector<std::string> split_string(const std::string& s, char sep);
std::string join_strings(const std::vector<std::string>& parts, const std::string& sep);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace sessionlab
