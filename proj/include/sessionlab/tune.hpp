#pragma once

#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sessionlab/common.hpp"

namespace sessionlab {

// One tunable parameter: a fixed choice set, an integer range, or a float
// range (optionally sampled on a log scale).
struct ParamDomain {
  enum class Kind { categorical, int_range, float_range } kind = Kind::categorical;
  std::vector<nlohmann::json> choices;  // categorical
  long long int_lo = 0, int_hi = 0;     // inclusive
  double float_lo = 0.0, float_hi = 0.0;
  bool log_scale = false;

  static ParamDomain categorical(std::vector<nlohmann::json> values);
  static ParamDomain int_range(long long lo, long long hi);
  static ParamDomain float_range(double lo, double hi, bool log_scale = false);
};

// Ordered so sampling consumes the RNG in a stable sequence.
using SearchSpace = std::vector<std::pair<std::string, ParamDomain>>;

// {"name": {"choices": [...]}} | {"name": {"int": [lo, hi]}} |
// {"name": {"float": [lo, hi], "log": true}}
SearchSpace parse_search_space(const nlohmann::json& spec);

nlohmann::json sample_config(const SearchSpace& space, Rng& rng);

struct Trial {
  int index = 0;
  nlohmann::json config;
  std::vector<double> fold_objectives;  // one per completed fold
  double total = 0.0;                   // sum over folds
  enum class Status { complete, pruned, failed } status = Status::complete;
  std::string error;
};

struct SearchOptions {
  int budget = 40;                 // maximum trials
  int n_folds = 3;
  std::uint64_t seed = 1;
  int early_stop_patience = 100;   // trials without improvement
  double prune_bottom_fraction = 0.2;
  int min_complete_before_prune = 10;
  double wall_clock_limit_seconds = 0.0;  // 0 = unlimited
};

struct SearchResult {
  Trial best;                      // highest total among complete trials
  std::vector<Trial> trials;       // every trial in execution order
  std::string stop_reason;         // "budget" | "early_stop" | "wall_clock"
};

// Objective for one (config, fold) pair; larger is better. Throwing marks the
// trial failed.
using TrialObjective = std::function<double(const nlohmann::json& config, int fold)>;

// Seeded random search over the space with fold-checkpoint pruning: after
// each non-final fold, a trial whose partial sum sits in the bottom fraction
// of partials recorded at that checkpoint is abandoned — but only once
// min_complete_before_prune trials have completed every fold. Stops on
// budget, on early_stop_patience trials without a new best, or on the wall
// clock. Results are deterministic for a given seed, and extending the budget
// never worsens the best total.
SearchResult random_search(const SearchSpace& space, const SearchOptions& opts,
                           const TrialObjective& objective);

void write_trials_jsonl(const SearchResult& result, const std::string& path);

}  // namespace sessionlab
