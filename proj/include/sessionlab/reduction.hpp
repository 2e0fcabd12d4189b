#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "sessionlab/common.hpp"

namespace sessionlab {

// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
// Returns eigenvalues in descending order; eigenvectors are the matching
// columns. Kept dependency-free so the numeric core stands on its own.
struct SymmetricEigen {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};
SymmetricEigen symmetric_eigen(const Eigen::MatrixXd& S);

enum class ReductionMethod { pca, lda, random_projection, identity };

ReductionMethod reduction_method_from_string(const std::string& name);
std::string reduction_method_name(ReductionMethod m);

// Linear map y = (x - mean) * P^T. Components are quantized to f32 at fit
// time so the binary file round-trips losslessly.
struct ReductionModel {
  ReductionMethod method = ReductionMethod::identity;
  int input_dim = 0;
  int output_dim = 0;
  Eigen::MatrixXd projection;  // output_dim x input_dim; empty for identity
  Eigen::VectorXd mean;        // input_dim; zero for rp/identity
  Eigen::VectorXd eigenvalues; // pca: explained variance per component; else empty

  void validate() const;
};

// PCA on rows of X: mean-centered covariance (n-1 denominator), top-k
// eigenvectors with a deterministic sign (largest-|entry| coordinate made
// positive, lowest index on ties).
ReductionModel fit_pca(const Eigen::MatrixXd& X, int k);

// Supervised reduction: maximize between-class over within-class scatter.
// labels[i] names row i's class. A ridge of 1e-6 * trace(Sw)/d keeps the
// within-class scatter invertible. k is capped by #classes - 1.
ReductionModel fit_lda(const Eigen::MatrixXd& X, const std::vector<std::string>& labels, int k);

// Gaussian random projection with entries N(0, 1/k); seeded, row-major fill.
ReductionModel fit_random_projection(int input_dim, int k, std::uint64_t seed);

ReductionModel identity_reduction(int dim);

Eigen::MatrixXd reduce_transform(const ReductionModel& m, const Eigen::MatrixXd& X);
Eigen::VectorXd reduce_transform_vector(const ReductionModel& m, const Eigen::VectorXd& x);

// PCA/identity only: map reduced rows back to the input space.
Eigen::MatrixXd reduce_inverse_transform(const ReductionModel& m, const Eigen::MatrixXd& Y);

// Binary round-trip (magic + header + f32 matrices, row-major).
void save_reduction_model(const ReductionModel& m, const std::string& path);
ReductionModel load_reduction_model(const std::string& path);

}  // namespace sessionlab
