#include "jumpflow/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace jumpflow::linalg {

Vector symmetric_eigenvalues(const Matrix& a) {
  if (a.rows() == 0) return Vector{};
  const Matrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym, Eigen::EigenvaluesOnly);
  return solver.eigenvalues();
}

double min_eigenvalue(const Matrix& a) { return symmetric_eigenvalues(a)(0); }

double max_eigenvalue(const Matrix& a) {
  const Vector ev = symmetric_eigenvalues(a);
  return ev(ev.size() - 1);
}

double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues()(0);
}

bool is_symmetric(const Matrix& a, double rel_tol) {
  if (a.rows() != a.cols()) return false;
  if (a.size() == 0) return true;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

bool is_positive_definite(const Matrix& a) {
  if (a.rows() == 0) return true;
  Eigen::LLT<Matrix> llt(0.5 * (a + a.transpose()));
  return llt.info() == Eigen::Success && min_eigenvalue(a) > 0.0;
}

}  // namespace jumpflow::linalg
