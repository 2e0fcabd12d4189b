#include "sessionlab/reduction.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include <Eigen/Cholesky>

namespace sessionlab {

// ---- Jacobi ---------------------------------------------------------------

SymmetricEigen symmetric_eigen(const Eigen::MatrixXd& S) {
  const Eigen::Index n = S.rows();
  if (S.cols() != n) throw Error("symmetric_eigen: matrix is not square");
  if (n == 0) throw Error("symmetric_eigen: empty matrix");
  if (!S.allFinite()) throw Error("symmetric_eigen: non-finite input");
  double asym = (S - S.transpose()).cwiseAbs().maxCoeff();
  double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
  if (asym > 1e-8 * scale) throw Error("symmetric_eigen: matrix is not symmetric");

  Eigen::MatrixXd A = (S + S.transpose()) / 2.0;  // exact symmetry
  Eigen::MatrixXd V = Eigen::MatrixXd::Identity(n, n);

  const int max_sweeps = 100;
  const double tol = 1e-14;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
    off = std::sqrt(2.0 * off);
    if (off <= tol * std::max(1.0, A.diagonal().cwiseAbs().sum())) break;

    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        double apq = A(p, q);
        if (std::abs(apq) < 1e-300) continue;
        double app = A(p, p), aqq = A(q, q);
        double theta = (aqq - app) / (2.0 * apq);
        // smaller-angle root keeps rotations stable
        double t = (theta >= 0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;

        for (Eigen::Index i = 0; i < n; ++i) {
          double aip = A(i, p), aiq = A(i, q);
          A(i, p) = c * aip - s * aiq;
          A(i, q) = s * aip + c * aiq;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
          double api = A(p, i), aqi = A(q, i);
          A(p, i) = c * api - s * aqi;
          A(q, i) = s * api + c * aqi;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
          double vip = V(i, p), viq = V(i, q);
          V(i, p) = c * vip - s * viq;
          V(i, q) = s * vip + c * viq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return A(a, a) > A(b, b); });

  SymmetricEigen out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values(i) = A(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
    out.vectors.col(i) = V.col(order[static_cast<std::size_t>(i)]);
  }
  return out;
}

// ---- helpers ----------------------------------------------------------------

ReductionMethod reduction_method_from_string(const std::string& name) {
  if (name == "pca") return ReductionMethod::pca;
  if (name == "lda") return ReductionMethod::lda;
  if (name == "rp" || name == "random_projection") return ReductionMethod::random_projection;
  if (name == "identity") return ReductionMethod::identity;
  throw ConfigError("unknown reduction method: " + name);
}

std::string reduction_method_name(ReductionMethod m) {
  switch (m) {
    case ReductionMethod::pca: return "pca";
    case ReductionMethod::lda: return "lda";
    case ReductionMethod::random_projection: return "rp";
    case ReductionMethod::identity: return "identity";
  }
  throw Error("unreachable reduction method");
}

void ReductionModel::validate() const {
  if (input_dim <= 0 || output_dim <= 0) throw Error("reduction model has empty dimensions");
  if (method != ReductionMethod::identity) {
    if (projection.rows() != output_dim || projection.cols() != input_dim)
      throw Error("reduction projection shape mismatch");
    if (!projection.allFinite()) throw Error("reduction projection contains NaN or Inf");
  }
  if (mean.size() != input_dim) throw Error("reduction mean size mismatch");
  if (!mean.allFinite()) throw Error("reduction mean contains NaN or Inf");
}

namespace {

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

void quantize_f32(Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = to_f32(m(i, j));
}

void quantize_f32(Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = to_f32(v(i));
}

// deterministic sign: the entry with the largest magnitude (lowest index on
// ties) is made positive
void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  Eigen::Index best = 0;
  double best_abs = -1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    double a = std::abs(v(i));
    if (a > best_abs + 1e-15) {
      best_abs = a;
      best = i;
    }
  }
  if (v(best) < 0) v = -v;
}

}  // namespace

// ---- PCA ----------------------------------------------------------------

ReductionModel fit_pca(const Eigen::MatrixXd& X, int k) {
  const Eigen::Index n = X.rows(), d = X.cols();
  if (n < 2) throw Error("pca needs at least 2 rows");
  if (k < 1 || k > d) throw Error("pca output dim must be in [1, input_dim]");
  if (!X.allFinite()) throw Error("pca input contains NaN or Inf");

  Eigen::VectorXd mean = X.colwise().mean().transpose();
  Eigen::MatrixXd Xc = X.rowwise() - mean.transpose();
  Eigen::MatrixXd cov = (Xc.transpose() * Xc) / static_cast<double>(n - 1);

  SymmetricEigen eig = symmetric_eigen(cov);

  ReductionModel m;
  m.method = ReductionMethod::pca;
  m.input_dim = static_cast<int>(d);
  m.output_dim = k;
  m.mean = mean;
  m.projection.resize(k, d);
  m.eigenvalues.resize(k);
  for (int i = 0; i < k; ++i) {
    Eigen::VectorXd v = eig.vectors.col(i);
    fix_sign(v);
    m.projection.row(i) = v.transpose();
    m.eigenvalues(i) = std::max(0.0, eig.values(i));  // clip tiny negative round-off
  }
  quantize_f32(m.projection);
  quantize_f32(m.mean);
  quantize_f32(m.eigenvalues);
  m.validate();
  return m;
}

// ---- LDA ----------------------------------------------------------------

ReductionModel fit_lda(const Eigen::MatrixXd& X, const std::vector<std::string>& labels, int k) {
  const Eigen::Index n = X.rows(), d = X.cols();
  if (static_cast<std::size_t>(n) != labels.size())
    throw Error("lda: label count differs from row count");
  if (n < 2) throw Error("lda needs at least 2 rows");
  if (!X.allFinite()) throw Error("lda input contains NaN or Inf");

  std::map<std::string, std::vector<Eigen::Index>> by_class;
  for (Eigen::Index i = 0; i < n; ++i) by_class[labels[static_cast<std::size_t>(i)]].push_back(i);
  const int n_classes = static_cast<int>(by_class.size());
  if (n_classes < 2) throw Error("lda needs at least 2 classes");
  int max_k = std::min<int>(n_classes - 1, static_cast<int>(d));
  if (k < 1 || k > max_k)
    throw Error("lda output dim must be in [1, " + std::to_string(max_k) + "] (classes-1 capped)");

  Eigen::VectorXd mean = X.colwise().mean().transpose();
  Eigen::MatrixXd Sw = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd Sb = Eigen::MatrixXd::Zero(d, d);
  for (const auto& [label, rows] : by_class) {
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
    for (Eigen::Index i : rows) mu += X.row(i).transpose();
    mu /= static_cast<double>(rows.size());
    for (Eigen::Index i : rows) {
      Eigen::VectorXd c = X.row(i).transpose() - mu;
      Sw += c * c.transpose();
    }
    Eigen::VectorXd b = mu - mean;
    Sb += static_cast<double>(rows.size()) * (b * b.transpose());
  }

  // ridge keeps Sw positive definite when classes are thin
  double ridge = 1e-6 * std::max(Sw.trace() / static_cast<double>(d), 1e-12);
  Sw += ridge * Eigen::MatrixXd::Identity(d, d);

  Eigen::LLT<Eigen::MatrixXd> llt(Sw);
  if (llt.info() != Eigen::Success) throw Error("lda: within-class scatter is not positive definite");
  Eigen::MatrixXd L = llt.matrixL();
  // M = L^-1 Sb L^-T is symmetric; its eigenvectors map back via L^-T
  Eigen::MatrixXd M = L.triangularView<Eigen::Lower>().solve(Sb);
  M = L.triangularView<Eigen::Lower>().solve(M.transpose()).transpose();
  M = (M + M.transpose()) / 2.0;

  SymmetricEigen eig = symmetric_eigen(M);

  ReductionModel m;
  m.method = ReductionMethod::lda;
  m.input_dim = static_cast<int>(d);
  m.output_dim = k;
  m.mean = mean;
  m.projection.resize(k, d);
  for (int i = 0; i < k; ++i) {
    Eigen::VectorXd w =
        L.transpose().triangularView<Eigen::Upper>().solve(eig.vectors.col(i));
    double nrm = w.norm();
    if (nrm < 1e-300) throw Error("lda produced a zero direction");
    w /= nrm;
    fix_sign(w);
    m.projection.row(i) = w.transpose();
  }
  quantize_f32(m.projection);
  quantize_f32(m.mean);
  m.validate();
  return m;
}

// ---- random projection ---------------------------------------------------

ReductionModel fit_random_projection(int input_dim, int k, std::uint64_t seed) {
  if (input_dim < 1 || k < 1) throw Error("random projection dims must be positive");
  ReductionModel m;
  m.method = ReductionMethod::random_projection;
  m.input_dim = input_dim;
  m.output_dim = k;
  m.mean = Eigen::VectorXd::Zero(input_dim);
  m.projection.resize(k, input_dim);
  Rng rng(mix_seed(seed, "random_projection"));
  const double scale = 1.0 / std::sqrt(static_cast<double>(k));
  for (int r = 0; r < k; ++r)
    for (int c = 0; c < input_dim; ++c) m.projection(r, c) = rng.gaussian() * scale;
  quantize_f32(m.projection);
  m.validate();
  return m;
}

ReductionModel identity_reduction(int dim) {
  if (dim < 1) throw Error("identity reduction dim must be positive");
  ReductionModel m;
  m.method = ReductionMethod::identity;
  m.input_dim = dim;
  m.output_dim = dim;
  m.mean = Eigen::VectorXd::Zero(dim);
  m.validate();
  return m;
}

// ---- transform ---------------------------------------------------------------

Eigen::MatrixXd reduce_transform(const ReductionModel& m, const Eigen::MatrixXd& X) {
  m.validate();
  if (X.cols() != m.input_dim)
    throw Error("transform input dim " + std::to_string(X.cols()) + " != model input dim " +
                std::to_string(m.input_dim));
  if (m.method == ReductionMethod::identity) return X;
  return (X.rowwise() - m.mean.transpose()) * m.projection.transpose();
}

Eigen::VectorXd reduce_transform_vector(const ReductionModel& m, const Eigen::VectorXd& x) {
  Eigen::MatrixXd X(1, x.size());
  X.row(0) = x.transpose();
  return reduce_transform(m, X).row(0).transpose();
}

Eigen::MatrixXd reduce_inverse_transform(const ReductionModel& m, const Eigen::MatrixXd& Y) {
  if (m.method == ReductionMethod::identity) return Y;
  if (m.method != ReductionMethod::pca)
    throw Error("inverse transform is only defined for pca/identity");
  if (Y.cols() != m.output_dim) throw Error("inverse transform dim mismatch");
  return (Y * m.projection).rowwise() + m.mean.transpose();
}

// ---- binary io ----------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'S', 'L', 'R', 'D'};
constexpr std::uint32_t kFormatVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw Error("truncated reduction model file");
  return v;
}

void write_f32_block(std::ostream& out, const double* data, std::size_t count,
                     std::vector<float>& scratch) {
  scratch.resize(count);
  for (std::size_t i = 0; i < count; ++i) scratch[i] = static_cast<float>(data[i]);
  out.write(reinterpret_cast<const char*>(scratch.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
}

void read_f32_block(std::istream& in, double* data, std::size_t count,
                    std::vector<float>& scratch) {
  scratch.resize(count);
  in.read(reinterpret_cast<char*>(scratch.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (!in) throw Error("truncated reduction model file");
  for (std::size_t i = 0; i < count; ++i) data[i] = static_cast<double>(scratch[i]);
}

}  // namespace

void save_reduction_model(const ReductionModel& m, const std::string& path) {
  m.validate();
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write reduction model: " + path);
  out.write(kMagic, 4);
  write_u32(out, kFormatVersion);
  write_u32(out, static_cast<std::uint32_t>(m.method));
  write_u32(out, static_cast<std::uint32_t>(m.input_dim));
  write_u32(out, static_cast<std::uint32_t>(m.output_dim));
  write_u32(out, static_cast<std::uint32_t>(m.eigenvalues.size()));

  std::vector<float> scratch;
  write_f32_block(out, m.mean.data(), static_cast<std::size_t>(m.mean.size()), scratch);
  if (m.method != ReductionMethod::identity) {
    // row-major on disk
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m.projection;
    write_f32_block(out, rm.data(), static_cast<std::size_t>(rm.size()), scratch);
  }
  if (m.eigenvalues.size() > 0)
    write_f32_block(out, m.eigenvalues.data(), static_cast<std::size_t>(m.eigenvalues.size()),
                    scratch);
  if (!out) throw Error("write failed: " + path);
}

ReductionModel load_reduction_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open reduction model: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw Error("not a reduction model file: " + path);
  std::uint32_t version = read_u32(in);
  if (version != kFormatVersion)
    throw Error("unsupported reduction model version " + std::to_string(version));

  ReductionModel m;
  m.method = static_cast<ReductionMethod>(read_u32(in));
  m.input_dim = static_cast<int>(read_u32(in));
  m.output_dim = static_cast<int>(read_u32(in));
  std::uint32_t n_eig = read_u32(in);

  std::vector<float> scratch;
  m.mean.resize(m.input_dim);
  read_f32_block(in, m.mean.data(), static_cast<std::size_t>(m.input_dim), scratch);
  if (m.method != ReductionMethod::identity) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(m.output_dim,
                                                                              m.input_dim);
    read_f32_block(in, rm.data(), static_cast<std::size_t>(rm.size()), scratch);
    m.projection = rm;
  }
  if (n_eig > 0) {
    m.eigenvalues.resize(n_eig);
    read_f32_block(in, m.eigenvalues.data(), n_eig, scratch);
  }
  m.validate();
  return m;
}

}  // namespace sessionlab
