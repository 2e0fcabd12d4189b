#include "sessionlab/pooling.hpp"

#include <cmath>

namespace sessionlab {

DecayTechnique decay_technique_from_string(const std::string& name) {
  if (name == "constant_linear") return DecayTechnique::constant_linear;
  if (name == "scaling_linear") return DecayTechnique::scaling_linear;
  if (name == "scaling_quadratic") return DecayTechnique::scaling_quadratic;
  if (name == "scaling_cubic") return DecayTechnique::scaling_cubic;
  if (name == "log") return DecayTechnique::log_decay;
  if (name == "harmonic") return DecayTechnique::harmonic;
  if (name == "squared_harmonic") return DecayTechnique::squared_harmonic;
  throw ConfigError("unknown decay technique: " + name);
}

std::string decay_technique_name(DecayTechnique t) {
  switch (t) {
    case DecayTechnique::constant_linear: return "constant_linear";
    case DecayTechnique::scaling_linear: return "scaling_linear";
    case DecayTechnique::scaling_quadratic: return "scaling_quadratic";
    case DecayTechnique::scaling_cubic: return "scaling_cubic";
    case DecayTechnique::log_decay: return "log";
    case DecayTechnique::harmonic: return "harmonic";
    case DecayTechnique::squared_harmonic: return "squared_harmonic";
  }
  throw Error("unreachable decay technique");
}

PoolingStrategy PoolingStrategy::parse(const std::string& text) {
  PoolingStrategy s;
  if (text == "mean") {
    s.kind = PoolKind::mean;
    return s;
  }
  if (text == "last_item" || text == "last") {
    s.kind = PoolKind::last_item;
    return s;
  }
  if (text.rfind("weighted:", 0) == 0) {
    s.kind = PoolKind::weighted;
    s.technique = decay_technique_from_string(text.substr(9));
    return s;
  }
  throw ConfigError("unknown pooling strategy: " + text);
}

std::string PoolingStrategy::to_string() const {
  switch (kind) {
    case PoolKind::mean: return "mean";
    case PoolKind::last_item: return "last_item";
    case PoolKind::weighted: return "weighted:" + decay_technique_name(technique);
  }
  throw Error("unreachable pooling kind");
}

std::vector<double> decay_weights(DecayTechnique t, int n, bool recency_first,
                                  bool normalize, double log_base) {
  if (n <= 0) throw Error("decay_weights: session length must be positive");
  const double nd = static_cast<double>(n);
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 1; i <= n; ++i) {
    double wi = 0.0;
    switch (t) {
      case DecayTechnique::constant_linear:
        wi = std::max(0.0, 1.0 - (i - 1) * (1.0 / 10.0));
        break;
      case DecayTechnique::scaling_linear:
        wi = std::max(0.0, 1.0 - (i - 1) * (1.0 / nd));
        break;
      case DecayTechnique::scaling_quadratic:
        wi = std::max(0.0, 1.0 - (i - 1) * (1.0 / (nd * nd)));
        break;
      case DecayTechnique::scaling_cubic:
        wi = std::max(0.0, 1.0 - (i - 1) * (1.0 / (nd * nd * nd)));
        break;
      case DecayTechnique::log_decay:
        wi = 1.0 / (std::log(static_cast<double>(i) + 1.0) / std::log(log_base));
        break;
      case DecayTechnique::harmonic:
        wi = 1.0 / i;
        break;
      case DecayTechnique::squared_harmonic:
        wi = 1.0 / (static_cast<double>(i) * i);
        break;
    }
    // i counts from the most recent item; storage is oldest-first
    std::size_t slot = recency_first ? static_cast<std::size_t>(n - i) : static_cast<std::size_t>(i - 1);
    w[slot] = wi;
  }
  double sum = 0.0;
  for (double v : w) sum += v;
  if (sum <= 0.0) throw Error("decay_weights: all weights are zero");
  if (normalize)
    for (double& v : w) v /= sum;
  return w;
}

Eigen::VectorXd pool_session(const Eigen::MatrixXd& item_rows, const PoolingStrategy& strategy) {
  const Eigen::Index n = item_rows.rows();
  if (n == 0) throw Error("pool_session: empty session");
  switch (strategy.kind) {
    case PoolKind::mean:
      return item_rows.colwise().mean().transpose();
    case PoolKind::last_item:
      return item_rows.row(n - 1).transpose();
    case PoolKind::weighted: {
      std::vector<double> w =
          decay_weights(strategy.technique, static_cast<int>(n), strategy.recency_first,
                        strategy.normalize_weights, strategy.log_base);
      Eigen::VectorXd out = Eigen::VectorXd::Zero(item_rows.cols());
      for (Eigen::Index i = 0; i < n; ++i)
        out += w[static_cast<std::size_t>(i)] * item_rows.row(i).transpose();
      return out;
    }
  }
  throw Error("unreachable pooling kind");
}

}  // namespace sessionlab
