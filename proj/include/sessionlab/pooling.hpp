#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "sessionlab/common.hpp"

namespace sessionlab {

// Recency-weight shapes. Position i counts from the most recent item (i=1)
// unless recency_first is cleared. Decrement shapes subtract a step d per
// position and clamp at zero: w_i = max(0, 1 - (i-1)*d).
enum class DecayTechnique {
  constant_linear,     // d = 1/10
  scaling_linear,      // d = 1/n
  scaling_quadratic,   // d = 1/n^2
  scaling_cubic,       // d = 1/n^3
  log_decay,           // w_i = 1/log(i+1)
  harmonic,            // w_i = 1/i
  squared_harmonic,    // w_i = 1/i^2
};

enum class PoolKind { mean, last_item, weighted };

struct PoolingStrategy {
  PoolKind kind = PoolKind::mean;
  DecayTechnique technique = DecayTechnique::harmonic;  // weighted only
  bool recency_first = true;   // i=1 at the newest item
  bool normalize_weights = true;
  double log_base = 2.718281828459045;  // cancels under normalization

  // "mean" | "last_item" | "weighted:<technique>"
  static PoolingStrategy parse(const std::string& text);
  std::string to_string() const;
};

DecayTechnique decay_technique_from_string(const std::string& name);
std::string decay_technique_name(DecayTechnique t);

// Weight for each session position, oldest first (index 0 = oldest item).
// Throws when n <= 0 or when every weight clamps to zero.
std::vector<double> decay_weights(DecayTechnique t, int n, bool recency_first = true,
                                  bool normalize = true,
                                  double log_base = 2.718281828459045);

// Pool a session's item embeddings (rows ordered oldest -> newest) into one
// vector.
Eigen::VectorXd pool_session(const Eigen::MatrixXd& item_rows, const PoolingStrategy& strategy);

}  // namespace sessionlab
