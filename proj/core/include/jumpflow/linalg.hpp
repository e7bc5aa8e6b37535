#pragma once

#include <Eigen/Dense>

namespace jumpflow::linalg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Ascending eigenvalues of the symmetric part of `a`.
Vector symmetric_eigenvalues(const Matrix& a);

double min_eigenvalue(const Matrix& a);
double max_eigenvalue(const Matrix& a);

/// Largest singular value.
double spectral_norm(const Matrix& a);

/// max |a - aᵀ| <= rel_tol * max(1, max |a|).
bool is_symmetric(const Matrix& a, double rel_tol = 1e-12);

/// Zero-sized matrices count as positive definite.
bool is_positive_definite(const Matrix& a);

}  // namespace jumpflow::linalg
