#include "sessionlab/gru.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace sessionlab {

using nlohmann::json;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void fill_uniform(Eigen::MatrixXd& m, Rng& rng, double scale) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-scale, scale);
}

struct Grads {
  Eigen::MatrixXd E, Wz, Wr, Wh, Uz, Ur, Uh, V, P;
  Eigen::VectorXd bz, br, bh, c;

  static Grads zeros_like(const GruModel& m) {
    Grads g;
    g.E = Eigen::MatrixXd::Zero(m.E.rows(), m.E.cols());
    g.Wz = Eigen::MatrixXd::Zero(m.Wz.rows(), m.Wz.cols());
    g.Wr = Eigen::MatrixXd::Zero(m.Wr.rows(), m.Wr.cols());
    g.Wh = Eigen::MatrixXd::Zero(m.Wh.rows(), m.Wh.cols());
    g.Uz = Eigen::MatrixXd::Zero(m.Uz.rows(), m.Uz.cols());
    g.Ur = Eigen::MatrixXd::Zero(m.Ur.rows(), m.Ur.cols());
    g.Uh = Eigen::MatrixXd::Zero(m.Uh.rows(), m.Uh.cols());
    if (m.config.tied_output) g.P = Eigen::MatrixXd::Zero(m.P.rows(), m.P.cols());
    else g.V = Eigen::MatrixXd::Zero(m.V.rows(), m.V.cols());
    g.bz = Eigen::VectorXd::Zero(m.bz.size());
    g.br = Eigen::VectorXd::Zero(m.br.size());
    g.bh = Eigen::VectorXd::Zero(m.bh.size());
    g.c = Eigen::VectorXd::Zero(m.c.size());
    return g;
  }
};

struct StepCache {
  int in_idx = 0;
  Eigen::VectorXd h_prev, z, r, hc, h;
  Eigen::VectorXd dh_out;  // Vt*dlogits (or Pt*Et*dlogits), computed in forward
};

// Forward (and optional backward) over a set of index sequences. Returns mean
// cross-entropy per prediction step; fills grads normalized by step count.
double forward_backward(const GruModel& m, const std::vector<std::vector<int>>& seqs,
                        Grads* grads) {
  const int H = m.config.hidden_dim;
  const bool tied = m.config.tied_output;
  const bool train_E = m.config.embeddings_trainable;

  double total_loss = 0.0;
  std::size_t total_steps = 0;
  std::vector<StepCache> cache;

  for (const auto& seq : seqs) {
    if (seq.size() < 2) continue;
    cache.clear();
    Eigen::VectorXd h = Eigen::VectorXd::Zero(H);

    for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
      StepCache sc;
      sc.in_idx = seq[t];
      sc.h_prev = h;
      Eigen::VectorXd x = m.E.row(seq[t]).transpose();

      Eigen::VectorXd z = (m.Wz * x + m.Uz * h + m.bz).unaryExpr([](double v) { return sigmoid(v); });
      Eigen::VectorXd r = (m.Wr * x + m.Ur * h + m.br).unaryExpr([](double v) { return sigmoid(v); });
      Eigen::VectorXd a = m.Wh * x + m.Uh * (r.cwiseProduct(h)) + m.bh;
      Eigen::VectorXd hc = a.array().tanh();
      h = (Eigen::VectorXd::Ones(H) - z).cwiseProduct(sc.h_prev) + z.cwiseProduct(hc);

      sc.z = z;
      sc.r = r;
      sc.hc = hc;
      sc.h = h;

      // output layer: loss and its gradient at this step
      Eigen::VectorXd logits =
          tied ? Eigen::VectorXd(m.E * (m.P * h) + m.c) : Eigen::VectorXd(m.V * h + m.c);
      double mx = logits.maxCoeff();
      Eigen::VectorXd ex = (logits.array() - mx).exp();
      double Z = ex.sum();
      int target = seq[t + 1];
      total_loss += -(logits(target) - mx - std::log(Z));
      ++total_steps;

      if (grads) {
        Eigen::VectorXd dlogits = ex / Z;  // softmax probs
        dlogits(target) -= 1.0;
        grads->c += dlogits;
        if (tied) {
          Eigen::VectorXd q = m.P * h;                       // h in e-space
          Eigen::VectorXd Et_dl = m.E.transpose() * dlogits; // e
          grads->P += Et_dl * h.transpose();
          if (train_E) grads->E += dlogits * q.transpose();
          sc.dh_out = m.P.transpose() * Et_dl;
        } else {
          grads->V += dlogits * h.transpose();
          sc.dh_out = m.V.transpose() * dlogits;
        }
      }
      cache.push_back(std::move(sc));
    }

    if (grads) {
      // backward through time
      Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(H);
      for (std::size_t ti = cache.size(); ti-- > 0;) {
        const StepCache& sc = cache[ti];
        Eigen::VectorXd dh = dh_next + sc.dh_out;

        Eigen::VectorXd dz =
            dh.cwiseProduct(sc.hc - sc.h_prev)
                .cwiseProduct(sc.z.cwiseProduct(Eigen::VectorXd::Ones(H) - sc.z));
        Eigen::VectorXd dhc = dh.cwiseProduct(sc.z);
        Eigen::VectorXd da =
            dhc.cwiseProduct(Eigen::VectorXd::Ones(H) - sc.hc.cwiseProduct(sc.hc));
        Eigen::VectorXd Uht_da = m.Uh.transpose() * da;
        Eigen::VectorXd dr =
            Uht_da.cwiseProduct(sc.h_prev)
                .cwiseProduct(sc.r.cwiseProduct(Eigen::VectorXd::Ones(H) - sc.r));

        Eigen::VectorXd x = m.E.row(sc.in_idx).transpose();
        grads->Wh += da * x.transpose();
        grads->Uh += da * (sc.r.cwiseProduct(sc.h_prev)).transpose();
        grads->bh += da;
        grads->Wr += dr * x.transpose();
        grads->Ur += dr * sc.h_prev.transpose();
        grads->br += dr;
        grads->Wz += dz * x.transpose();
        grads->Uz += dz * sc.h_prev.transpose();
        grads->bz += dz;

        if (train_E) {
          Eigen::VectorXd dx =
              m.Wz.transpose() * dz + m.Wr.transpose() * dr + m.Wh.transpose() * da;
          grads->E.row(sc.in_idx) += dx.transpose();
        }

        dh_next = dh.cwiseProduct(Eigen::VectorXd::Ones(H) - sc.z) +
                  Uht_da.cwiseProduct(sc.r) + m.Uz.transpose() * dz + m.Ur.transpose() * dr;
      }
    }
  }

  if (total_steps == 0) throw Error("gru: no prediction steps in batch");
  double inv = 1.0 / static_cast<double>(total_steps);
  if (grads) {
    grads->E *= inv;
    grads->Wz *= inv;
    grads->Wr *= inv;
    grads->Wh *= inv;
    grads->Uz *= inv;
    grads->Ur *= inv;
    grads->Uh *= inv;
    if (m.config.tied_output) grads->P *= inv;
    else grads->V *= inv;
    grads->bz *= inv;
    grads->br *= inv;
    grads->bh *= inv;
    grads->c *= inv;
  }
  return total_loss * inv;
}

std::vector<int> to_indices(const GruModel& m, const Session& s) {
  std::vector<int> seq;
  seq.reserve(s.items.size());
  for (const auto& it : s.items) {
    auto pos = m.vocab_index.find(it);
    if (pos != m.vocab_index.end()) seq.push_back(pos->second);
  }
  int L = m.config.max_session_length;
  if (static_cast<int>(seq.size()) > L)
    seq.erase(seq.begin(), seq.end() - L);  // most recent items only
  return seq;
}

}  // namespace

void GruModel::validate() const {
  auto check = [](const Eigen::MatrixXd& m, const char* name) {
    if (!m.allFinite()) throw Error(std::string("gru parameter not finite: ") + name);
  };
  check(E, "E");
  check(Wz, "Wz");
  check(Wr, "Wr");
  check(Wh, "Wh");
  check(Uz, "Uz");
  check(Ur, "Ur");
  check(Uh, "Uh");
  if (config.tied_output) check(P, "P");
  else check(V, "V");
  if (!bz.allFinite() || !br.allFinite() || !bh.allFinite() || !c.allFinite())
    throw Error("gru bias not finite");
}

Eigen::MatrixXd init_embedding_table(const std::vector<ItemId>& vocab, const GruConfig& cfg,
                                     const GruInitSpec& init) {
  if (vocab.empty()) throw Error("gru: empty vocabulary");
  if (cfg.embedding_dim < 1) throw Error("gru: embedding_dim must be positive");

  if (init.kind == GruInitSpec::Kind::random) {
    Eigen::MatrixXd E(static_cast<Eigen::Index>(vocab.size()), cfg.embedding_dim);
    Rng rng(mix_seed(cfg.seed, "gru:embedding"));
    fill_uniform(E, rng, cfg.init_scale);
    return E;
  }

  if (!init.matrix) throw Error("gru: from_matrix init requires an embedding matrix");
  Eigen::MatrixXd E(static_cast<Eigen::Index>(vocab.size()), cfg.embedding_dim);
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    Eigen::VectorXd v = init.matrix->row(vocab[i]);  // throws on missing items
    if (init.reduction) v = reduce_transform_vector(*init.reduction, v);
    if (v.size() != cfg.embedding_dim)
      throw ConfigError("gru: provider embedding dim " + std::to_string(v.size()) +
                        " != embedding_dim " + std::to_string(cfg.embedding_dim) +
                        " (add a reduction or change the config)");
    E.row(static_cast<Eigen::Index>(i)) = v.transpose();
  }
  return E;
}

namespace {

GruModel build_model(const GruConfig& cfg, const GruInitSpec& init, const Dataset& train) {
  if (train.sessions.empty()) throw Error("cannot fit on an empty training set");
  if (cfg.hidden_dim < 1) throw Error("gru: hidden_dim must be positive");
  if (cfg.max_session_length < 2) throw Error("gru: max_session_length must be >= 2");
  if (cfg.batch_size < 1) throw Error("gru: batch_size must be positive");
  if (cfg.epochs < 0) throw Error("gru: epochs must be >= 0");

  GruModel m;
  m.config = cfg;
  m.popularity = interaction_counts(train.sessions);
  m.vocab.reserve(m.popularity.size());
  for (const auto& [id, cnt] : m.popularity) m.vocab.push_back(id);
  std::sort(m.vocab.begin(), m.vocab.end());
  for (std::size_t i = 0; i < m.vocab.size(); ++i) m.vocab_index[m.vocab[i]] = static_cast<int>(i);

  const auto I = static_cast<Eigen::Index>(m.vocab.size());
  const int e = cfg.embedding_dim, H = cfg.hidden_dim;

  m.E = init_embedding_table(m.vocab, cfg, init);
  m.init_provenance =
      init.kind == GruInitSpec::Kind::random ? "random" : init.matrix->provider;

  Rng rng(mix_seed(cfg.seed, "gru:init"));
  m.Wz.resize(H, e); fill_uniform(m.Wz, rng, cfg.init_scale);
  m.Wr.resize(H, e); fill_uniform(m.Wr, rng, cfg.init_scale);
  m.Wh.resize(H, e); fill_uniform(m.Wh, rng, cfg.init_scale);
  m.Uz.resize(H, H); fill_uniform(m.Uz, rng, cfg.init_scale);
  m.Ur.resize(H, H); fill_uniform(m.Ur, rng, cfg.init_scale);
  m.Uh.resize(H, H); fill_uniform(m.Uh, rng, cfg.init_scale);
  m.bz = Eigen::VectorXd::Zero(H);
  m.br = Eigen::VectorXd::Zero(H);
  m.bh = Eigen::VectorXd::Zero(H);
  if (cfg.tied_output) {
    m.P.resize(e, H);
    fill_uniform(m.P, rng, cfg.init_scale);
  } else {
    m.V.resize(I, H);
    fill_uniform(m.V, rng, cfg.init_scale);
  }
  m.c = Eigen::VectorXd::Zero(I);
  return m;
}

void sgd_step(Eigen::MatrixXd& param, Eigen::MatrixXd& vel, const Eigen::MatrixXd& grad,
              double lr, double momentum) {
  if (momentum > 0.0) {
    vel = momentum * vel - lr * grad;
    param += vel;
  } else {
    param -= lr * grad;
  }
}

}  // namespace

GruModel train_gru(const GruConfig& cfg, const GruInitSpec& init, const Dataset& train) {
  GruModel m = build_model(cfg, init, train);

  std::vector<std::vector<int>> seqs;
  seqs.reserve(train.sessions.size());
  for (const auto& s : train.sessions) {
    std::vector<int> seq = to_indices(m, s);
    if (seq.size() >= 2) seqs.push_back(std::move(seq));
  }
  if (seqs.empty()) throw Error("gru: no trainable sequences");

  Grads vel = Grads::zeros_like(m);  // momentum buffers
  Rng shuffle_rng(mix_seed(cfg.seed, "gru:shuffle"));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(seqs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t epoch_weight = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t e_end = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      std::vector<std::vector<int>> batch;
      batch.reserve(e_end - b);
      std::size_t batch_steps = 0;
      for (std::size_t i = b; i < e_end; ++i) {
        batch.push_back(seqs[order[i]]);
        batch_steps += seqs[order[i]].size() - 1;
      }

      Grads g = Grads::zeros_like(m);
      double loss = forward_backward(m, batch, &g);
      if (!std::isfinite(loss))
        throw Error("gru: non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                    std::to_string(b / cfg.batch_size + 1) +
                    " (learning rate likely too high)");
      epoch_loss += loss * static_cast<double>(batch_steps);
      epoch_weight += batch_steps;

      double lr = cfg.learning_rate, mu = cfg.momentum;
      if (cfg.embeddings_trainable) sgd_step(m.E, vel.E, g.E, lr, mu);
      sgd_step(m.Wz, vel.Wz, g.Wz, lr, mu);
      sgd_step(m.Wr, vel.Wr, g.Wr, lr, mu);
      sgd_step(m.Wh, vel.Wh, g.Wh, lr, mu);
      sgd_step(m.Uz, vel.Uz, g.Uz, lr, mu);
      sgd_step(m.Ur, vel.Ur, g.Ur, lr, mu);
      sgd_step(m.Uh, vel.Uh, g.Uh, lr, mu);
      if (cfg.tied_output) sgd_step(m.P, vel.P, g.P, lr, mu);
      else sgd_step(m.V, vel.V, g.V, lr, mu);
      auto sgd_vec = [lr, mu](Eigen::VectorXd& param, Eigen::VectorXd& v,
                              const Eigen::VectorXd& grad) {
        if (mu > 0.0) {
          v = mu * v - lr * grad;
          param += v;
        } else {
          param -= lr * grad;
        }
      };
      sgd_vec(m.bz, vel.bz, g.bz);
      sgd_vec(m.br, vel.br, g.br);
      sgd_vec(m.bh, vel.bh, g.bh);
      sgd_vec(m.c, vel.c, g.c);
    }
    m.epoch_losses.push_back(epoch_loss / static_cast<double>(epoch_weight));
    // mean cross-entropy over |I| classes starts near log|I|; far above that the
    // run has blown up even though saturating gates keep every number finite
    double sane_ceiling = 50.0 * (std::log(static_cast<double>(m.vocab.size())) + 1.0);
    if (m.epoch_losses.back() > sane_ceiling)
      throw Error("gru: loss " + std::to_string(m.epoch_losses.back()) + " diverged by epoch " +
                  std::to_string(epoch + 1) + " (learning rate likely too high)");
    m.validate();  // every parameter stays finite after each epoch
  }
  return m;
}

Eigen::VectorXd gru_scores(const GruModel& m, const std::vector<ItemId>& prompt,
                           std::size_t* skipped_items) {
  if (prompt.empty()) throw Error("cannot recommend for an empty prompt");
  std::vector<int> seq;
  seq.reserve(prompt.size());
  std::size_t skipped = 0;
  for (const auto& it : prompt) {
    auto pos = m.vocab_index.find(it);
    if (pos == m.vocab_index.end()) ++skipped;
    else seq.push_back(pos->second);
  }
  if (skipped_items) *skipped_items = skipped;
  if (seq.empty()) throw Error("gru: no prompt item is in the training vocabulary");
  int L = m.config.max_session_length;
  if (static_cast<int>(seq.size()) > L) seq.erase(seq.begin(), seq.end() - L);

  const int H = m.config.hidden_dim;
  Eigen::VectorXd h = Eigen::VectorXd::Zero(H);
  for (int idx : seq) {
    Eigen::VectorXd x = m.E.row(idx).transpose();
    Eigen::VectorXd z = (m.Wz * x + m.Uz * h + m.bz).unaryExpr([](double v) { return sigmoid(v); });
    Eigen::VectorXd r = (m.Wr * x + m.Ur * h + m.br).unaryExpr([](double v) { return sigmoid(v); });
    Eigen::VectorXd a = m.Wh * x + m.Uh * (r.cwiseProduct(h)) + m.bh;
    Eigen::VectorXd hc = a.array().tanh();
    h = (Eigen::VectorXd::Ones(H) - z).cwiseProduct(h) + z.cwiseProduct(hc);
  }
  return m.config.tied_output ? Eigen::VectorXd(m.E * (m.P * h) + m.c)
                              : Eigen::VectorXd(m.V * h + m.c);
}

RecommendationList gru_recommend(const GruModel& m, const std::vector<ItemId>& prompt, int k) {
  Eigen::VectorXd scores = gru_scores(m, prompt, nullptr);
  std::vector<ScoredItem> scored;
  scored.reserve(m.vocab.size());
  for (std::size_t i = 0; i < m.vocab.size(); ++i)
    scored.push_back({m.vocab[i], scores(static_cast<Eigen::Index>(i))});
  return top_k_ranked(std::move(scored), k, &m.popularity);
}

// ---- gradient check --------------------------------------------------------

double gru_gradient_check(const GruConfig& cfg, const Dataset& train) {
  GruInitSpec init;  // random init exercises every tensor
  GruModel m = build_model(cfg, init, train);
  std::vector<std::vector<int>> seqs;
  for (const auto& s : train.sessions) {
    std::vector<int> seq = to_indices(m, s);
    if (seq.size() >= 2) seqs.push_back(std::move(seq));
  }
  if (seqs.empty()) throw Error("gradient check: no usable sequences");

  Grads g = Grads::zeros_like(m);
  forward_backward(m, seqs, &g);

  const double h = 1e-4;
  // relative error floored so near-zero gradients don't amplify round-off
  const double floor = 1e-3;
  double worst = 0.0;

  auto check_matrix = [&](Eigen::MatrixXd& param, const Eigen::MatrixXd& grad) {
    for (Eigen::Index r = 0; r < param.rows(); ++r) {
      for (Eigen::Index c = 0; c < param.cols(); ++c) {
        double orig = param(r, c);
        param(r, c) = orig + h;
        double lp = forward_backward(m, seqs, nullptr);
        param(r, c) = orig - h;
        double lm = forward_backward(m, seqs, nullptr);
        param(r, c) = orig;
        double gn = (lp - lm) / (2.0 * h);
        double ga = grad(r, c);
        double denom = std::max(floor, std::abs(ga) + std::abs(gn));
        worst = std::max(worst, std::abs(ga - gn) / denom);
      }
    }
  };
  auto check_vector = [&](Eigen::VectorXd& param, const Eigen::VectorXd& grad) {
    for (Eigen::Index i = 0; i < param.size(); ++i) {
      double orig = param(i);
      param(i) = orig + h;
      double lp = forward_backward(m, seqs, nullptr);
      param(i) = orig - h;
      double lm = forward_backward(m, seqs, nullptr);
      param(i) = orig;
      double gn = (lp - lm) / (2.0 * h);
      double denom = std::max(floor, std::abs(grad(i)) + std::abs(gn));
      worst = std::max(worst, std::abs(grad(i) - gn) / denom);
    }
  };

  if (cfg.embeddings_trainable) check_matrix(m.E, g.E);
  check_matrix(m.Wz, g.Wz);
  check_matrix(m.Wr, g.Wr);
  check_matrix(m.Wh, g.Wh);
  check_matrix(m.Uz, g.Uz);
  check_matrix(m.Ur, g.Ur);
  check_matrix(m.Uh, g.Uh);
  if (cfg.tied_output) check_matrix(m.P, g.P);
  else check_matrix(m.V, g.V);
  check_vector(m.bz, g.bz);
  check_vector(m.br, g.br);
  check_vector(m.bh, g.bh);
  check_vector(m.c, g.c);
  return worst;
}

double gru_dataset_loss(const GruModel& m, const Dataset& data) {
  std::vector<std::vector<int>> seqs;
  for (const auto& s : data.sessions) {
    std::vector<int> seq = to_indices(m, s);
    if (seq.size() >= 2) seqs.push_back(std::move(seq));
  }
  if (seqs.empty()) throw Error("gru loss: no usable sequences");
  return forward_backward(m, seqs, nullptr);
}

// ---- persistence ------------------------------------------------------------

namespace {

constexpr char kGruMagic[4] = {'S', 'L', 'G', 'R'};
constexpr std::uint32_t kGruVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw Error("truncated gru checkpoint");
  return v;
}
std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw Error("truncated gru checkpoint");
  return v;
}
double read_f64(std::istream& in) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw Error("truncated gru checkpoint");
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::string read_string(std::istream& in) {
  std::uint32_t n = read_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw Error("truncated gru checkpoint");
  return s;
}

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  write_u32(out, static_cast<std::uint32_t>(m.rows()));
  write_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) write_f64(out, m(r, c));
}
Eigen::MatrixXd read_matrix(std::istream& in) {
  std::uint32_t rows = read_u32(in), cols = read_u32(in);
  Eigen::MatrixXd m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = read_f64(in);
  return m;
}
void write_vector(std::ostream& out, const Eigen::VectorXd& v) {
  write_u32(out, static_cast<std::uint32_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) write_f64(out, v(i));
}
Eigen::VectorXd read_vector(std::istream& in) {
  std::uint32_t n = read_u32(in);
  Eigen::VectorXd v(n);
  for (std::uint32_t i = 0; i < n; ++i) v(i) = read_f64(in);
  return v;
}

}  // namespace

void save_gru_model(const GruModel& m, const std::string& path) {
  m.validate();
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write gru checkpoint: " + path);
  out.write(kGruMagic, 4);
  write_u32(out, kGruVersion);
  write_u32(out, static_cast<std::uint32_t>(m.config.embedding_dim));
  write_u32(out, static_cast<std::uint32_t>(m.config.hidden_dim));
  write_u32(out, static_cast<std::uint32_t>(m.config.max_session_length));
  write_f64(out, m.config.learning_rate);
  write_f64(out, m.config.momentum);
  write_u32(out, static_cast<std::uint32_t>(m.config.epochs));
  write_u32(out, static_cast<std::uint32_t>(m.config.batch_size));
  write_u64(out, m.config.seed);
  write_f64(out, m.config.init_scale);
  write_u32(out, m.config.embeddings_trainable ? 1 : 0);
  write_u32(out, m.config.tied_output ? 1 : 0);
  write_string(out, m.init_provenance);

  write_u32(out, static_cast<std::uint32_t>(m.vocab.size()));
  for (const auto& id : m.vocab) write_string(out, id);
  for (const auto& id : m.vocab)
    write_u64(out, static_cast<std::uint64_t>(m.popularity.at(id)));

  write_matrix(out, m.E);
  write_matrix(out, m.Wz);
  write_matrix(out, m.Wr);
  write_matrix(out, m.Wh);
  write_matrix(out, m.Uz);
  write_matrix(out, m.Ur);
  write_matrix(out, m.Uh);
  write_matrix(out, m.config.tied_output ? m.P : m.V);
  write_vector(out, m.bz);
  write_vector(out, m.br);
  write_vector(out, m.bh);
  write_vector(out, m.c);

  write_u32(out, static_cast<std::uint32_t>(m.epoch_losses.size()));
  for (double l : m.epoch_losses) write_f64(out, l);
  if (!out) throw Error("write failed: " + path);
}

GruModel load_gru_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open gru checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kGruMagic, 4) != 0)
    throw Error("not a gru checkpoint: " + path);
  std::uint32_t version = read_u32(in);
  if (version != kGruVersion)
    throw Error("unsupported gru checkpoint version " + std::to_string(version));

  GruModel m;
  m.config.embedding_dim = static_cast<int>(read_u32(in));
  m.config.hidden_dim = static_cast<int>(read_u32(in));
  m.config.max_session_length = static_cast<int>(read_u32(in));
  m.config.learning_rate = read_f64(in);
  m.config.momentum = read_f64(in);
  m.config.epochs = static_cast<int>(read_u32(in));
  m.config.batch_size = static_cast<int>(read_u32(in));
  m.config.seed = read_u64(in);
  m.config.init_scale = read_f64(in);
  m.config.embeddings_trainable = read_u32(in) != 0;
  m.config.tied_output = read_u32(in) != 0;
  m.init_provenance = read_string(in);

  std::uint32_t vocab_size = read_u32(in);
  m.vocab.reserve(vocab_size);
  for (std::uint32_t i = 0; i < vocab_size; ++i) m.vocab.push_back(read_string(in));
  for (std::uint32_t i = 0; i < vocab_size; ++i)
    m.popularity[m.vocab[i]] = static_cast<long long>(read_u64(in));
  for (std::size_t i = 0; i < m.vocab.size(); ++i) m.vocab_index[m.vocab[i]] = static_cast<int>(i);

  m.E = read_matrix(in);
  m.Wz = read_matrix(in);
  m.Wr = read_matrix(in);
  m.Wh = read_matrix(in);
  m.Uz = read_matrix(in);
  m.Ur = read_matrix(in);
  m.Uh = read_matrix(in);
  if (m.config.tied_output) m.P = read_matrix(in);
  else m.V = read_matrix(in);
  m.bz = read_vector(in);
  m.br = read_vector(in);
  m.bh = read_vector(in);
  m.c = read_vector(in);

  std::uint32_t n_losses = read_u32(in);
  for (std::uint32_t i = 0; i < n_losses; ++i) m.epoch_losses.push_back(read_f64(in));
  m.validate();
  return m;
}

void write_training_log_csv(const GruModel& m, const std::string& path) {
  std::ostringstream out;
  out << "epoch,mean_loss\n";
  out.setf(std::ios::fixed);
  out.precision(8);
  for (std::size_t i = 0; i < m.epoch_losses.size(); ++i)
    out << (i + 1) << ',' << m.epoch_losses[i] << "\n";
  write_text_file(path, out.str());
}

// ---- contract wrapper ---------------------------------------------------------

GruRecommender::GruRecommender(GruModel fitted) : model_(std::move(fitted)), fitted_(true) {
  cfg_ = model_.config;
}

void GruRecommender::fit(const Dataset& train) {
  model_ = train_gru(cfg_, init_, train);
  fitted_ = true;
}

RecommendationList GruRecommender::recommend(const std::vector<ItemId>& prompt, int k) const {
  if (!fitted_) throw Error("gru: fit() has not run");
  return gru_recommend(model_, prompt, k);
}

std::string GruRecommender::config_summary() const {
  json j{{"type", "gru"},
         {"embedding_dim", cfg_.embedding_dim},
         {"hidden_dim", cfg_.hidden_dim},
         {"max_session_length", cfg_.max_session_length},
         {"learning_rate", cfg_.learning_rate},
         {"momentum", cfg_.momentum},
         {"epochs", cfg_.epochs},
         {"batch_size", cfg_.batch_size},
         {"seed", cfg_.seed},
         {"embeddings_trainable", cfg_.embeddings_trainable},
         {"tied_output", cfg_.tied_output},
         {"init", fitted_ ? model_.init_provenance
                          : (init_.kind == GruInitSpec::Kind::random ? "random" : "from_matrix")}};
  return j.dump();
}

}  // namespace sessionlab
