#include "sessionlab/tune.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace sessionlab {

using nlohmann::json;

ParamDomain ParamDomain::categorical(std::vector<json> values) {
  if (values.empty()) throw ConfigError("categorical domain needs at least one choice");
  ParamDomain d;
  d.kind = Kind::categorical;
  d.choices = std::move(values);
  return d;
}

ParamDomain ParamDomain::int_range(long long lo, long long hi) {
  if (hi < lo) throw ConfigError("int range is empty");
  ParamDomain d;
  d.kind = Kind::int_range;
  d.int_lo = lo;
  d.int_hi = hi;
  return d;
}

ParamDomain ParamDomain::float_range(double lo, double hi, bool log_scale) {
  if (!(hi >= lo)) throw ConfigError("float range is empty");
  if (log_scale && lo <= 0.0) throw ConfigError("log-scale range needs a positive lower bound");
  ParamDomain d;
  d.kind = Kind::float_range;
  d.float_lo = lo;
  d.float_hi = hi;
  d.log_scale = log_scale;
  return d;
}

SearchSpace parse_search_space(const json& spec) {
  if (!spec.is_object()) throw ConfigError("search space must be a json object");
  SearchSpace space;
  for (auto it = spec.begin(); it != spec.end(); ++it) {
    const json& d = it.value();
    if (d.contains("choices")) {
      space.emplace_back(it.key(),
                         ParamDomain::categorical(d.at("choices").get<std::vector<json>>()));
    } else if (d.contains("int")) {
      auto range = d.at("int").get<std::vector<long long>>();
      if (range.size() != 2) throw ConfigError("int domain needs [lo, hi]: " + it.key());
      space.emplace_back(it.key(), ParamDomain::int_range(range[0], range[1]));
    } else if (d.contains("float")) {
      auto range = d.at("float").get<std::vector<double>>();
      if (range.size() != 2) throw ConfigError("float domain needs [lo, hi]: " + it.key());
      space.emplace_back(it.key(),
                         ParamDomain::float_range(range[0], range[1], d.value("log", false)));
    } else {
      throw ConfigError("parameter '" + it.key() + "' needs choices, int, or float");
    }
  }
  if (space.empty()) throw ConfigError("search space is empty");
  return space;
}

json sample_config(const SearchSpace& space, Rng& rng) {
  json config = json::object();
  for (const auto& [name, domain] : space) {
    switch (domain.kind) {
      case ParamDomain::Kind::categorical: {
        auto idx = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<long long>(domain.choices.size()) - 1));
        config[name] = domain.choices[idx];
        break;
      }
      case ParamDomain::Kind::int_range:
        config[name] = rng.uniform_int(domain.int_lo, domain.int_hi);
        break;
      case ParamDomain::Kind::float_range:
        if (domain.log_scale) {
          double lg = rng.uniform(std::log(domain.float_lo), std::log(domain.float_hi));
          config[name] = std::exp(lg);
        } else {
          config[name] = rng.uniform(domain.float_lo, domain.float_hi);
        }
        break;
    }
  }
  return config;
}

SearchResult random_search(const SearchSpace& space, const SearchOptions& opts,
                           const TrialObjective& objective) {
  if (opts.budget < 1) throw ConfigError("search budget must be positive");
  if (opts.n_folds < 1) throw ConfigError("search needs at least one fold");
  if (opts.prune_bottom_fraction < 0.0 || opts.prune_bottom_fraction >= 1.0)
    throw ConfigError("prune fraction must be in [0, 1)");

  Rng rng(mix_seed(opts.seed, "random_search"));
  auto t0 = std::chrono::steady_clock::now();

  SearchResult res;
  // partial sums recorded at each non-final fold checkpoint
  std::vector<std::vector<double>> checkpoint_partials(
      static_cast<std::size_t>(std::max(0, opts.n_folds - 1)));
  int completed = 0;
  int best_index = -1;
  double best_total = -std::numeric_limits<double>::infinity();
  int since_improvement = 0;
  res.stop_reason = "budget";

  for (int t = 0; t < opts.budget; ++t) {
    if (opts.wall_clock_limit_seconds > 0.0) {
      double elapsed =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (elapsed >= opts.wall_clock_limit_seconds) {
        res.stop_reason = "wall_clock";
        break;
      }
    }

    Trial trial;
    trial.index = t;
    trial.config = sample_config(space, rng);  // sampling order is seed-stable

    double partial = 0.0;
    bool pruned = false, failed = false;
    for (int f = 0; f < opts.n_folds; ++f) {
      double obj;
      try {
        obj = objective(trial.config, f);
      } catch (const std::exception& ex) {
        trial.status = Trial::Status::failed;
        trial.error = ex.what();
        failed = true;
        break;
      }
      if (!std::isfinite(obj)) {
        trial.status = Trial::Status::failed;
        trial.error = "objective returned a non-finite value";
        failed = true;
        break;
      }
      trial.fold_objectives.push_back(obj);
      partial += obj;

      if (f < opts.n_folds - 1) {
        auto& recorded = checkpoint_partials[static_cast<std::size_t>(f)];
        // prune when at least the bottom fraction of earlier partials at this
        // checkpoint are strictly better; strict comparison keeps
        // constant-objective spaces prune-free
        if (completed >= opts.min_complete_before_prune && !recorded.empty()) {
          std::size_t strictly_better = 0;
          for (double v : recorded)
            if (v > partial) ++strictly_better;
          double frac_better =
              static_cast<double>(strictly_better) / static_cast<double>(recorded.size());
          if (frac_better >= 1.0 - opts.prune_bottom_fraction) {
            trial.status = Trial::Status::pruned;
            pruned = true;
          }
        }
        recorded.push_back(partial);
        if (pruned) break;
      }
    }

    if (!failed && !pruned) {
      trial.status = Trial::Status::complete;
      trial.total = partial;
      ++completed;
      if (partial > best_total) {
        best_total = partial;
        best_index = t;
        since_improvement = 0;
      } else {
        ++since_improvement;
      }
    } else {
      trial.total = partial;
      ++since_improvement;
    }
    res.trials.push_back(std::move(trial));

    if (since_improvement >= opts.early_stop_patience) {
      res.stop_reason = "early_stop";
      break;
    }
  }

  if (best_index < 0) {
    std::ostringstream msg;
    msg << "no trial completed; first errors:";
    int shown = 0;
    for (const auto& tr : res.trials) {
      if (tr.status == Trial::Status::failed && shown < 3) {
        msg << " [trial " << tr.index << "] " << tr.error << ";";
        ++shown;
      }
    }
    throw Error(msg.str());
  }
  for (const auto& tr : res.trials)
    if (tr.index == best_index) res.best = tr;
  return res;
}

void write_trials_jsonl(const SearchResult& result, const std::string& path) {
  std::ostringstream out;
  for (const auto& tr : result.trials) {
    const char* status = tr.status == Trial::Status::complete  ? "complete"
                         : tr.status == Trial::Status::pruned  ? "pruned"
                                                               : "failed";
    json j{{"trial", tr.index},
           {"config", tr.config},
           {"fold_objectives", tr.fold_objectives},
           {"total", tr.total},
           {"status", status}};
    if (!tr.error.empty()) j["error"] = tr.error;
    out << j.dump() << "\n";
  }
  json best{{"best_trial", result.best.index},
            {"best_total", result.best.total},
            {"best_config", result.best.config},
            {"stop_reason", result.stop_reason}};
  out << best.dump() << "\n";
  write_text_file(path, out.str());
}

}  // namespace sessionlab
