#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace jumpflow {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Directed channel from `sender` to `receiver` (0-based agent indices).
struct Edge {
  std::size_t sender = 0;
  std::size_t receiver = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Communication graph. Edges are kept sorted by (sender, receiver).
class Topology {
 public:
  Topology(std::size_t agents, std::vector<Edge> edges);

  /// All ordered pairs (j, i) with j != i.
  static Topology complete(std::size_t agents);

  std::size_t agents() const { return agents_; }
  const std::vector<Edge>& edges() const { return edges_; }
  bool is_complete() const;

 private:
  std::size_t agents_;
  std::vector<Edge> edges_;
};

/// min_y ½ yᵀQy + qᵀy with y split into agent blocks of sizes `partition`.
///
/// Construction validates symmetry (relative 1e-12), positive definiteness and
/// that the partition covers the dimension; the object is immutable after.
class QuadraticProblem {
 public:
  QuadraticProblem(Matrix q_matrix, Vector q_vector, std::vector<std::size_t> partition);

  std::size_t dim() const { return static_cast<std::size_t>(q_.size()); }
  std::size_t agents() const { return partition_.size(); }
  const Matrix& Q() const { return Q_; }
  const Vector& q() const { return q_; }
  const std::vector<std::size_t>& partition() const { return partition_; }

  /// Offset of agent i's block inside the stacked vector.
  std::size_t offset(std::size_t agent) const;
  std::size_t block_size(std::size_t agent) const;

  /// Q_ij, shape d_i × d_j.
  Matrix block(std::size_t i, std::size_t j) const;
  /// q_i.
  Vector block_vector(std::size_t i) const;
  /// Rows of a stacked vector belonging to agent i.
  Vector segment(const Vector& stacked, std::size_t agent) const;

  double objective(const Vector& y) const;
  Vector gradient(const Vector& y) const;

  /// y* = −Q⁻¹q. Throws IllConditioned if cond(Q) > 1e12.
  Vector optimal_solution() const;
  double min_eigenvalue() const { return eigenvalues_(0); }
  double max_eigenvalue() const { return eigenvalues_(eigenvalues_.size() - 1); }
  double condition_number() const { return max_eigenvalue() / min_eigenvalue(); }

 private:
  Matrix Q_;
  Vector q_;
  std::vector<std::size_t> partition_;
  std::vector<std::size_t> offsets_;
  Vector eigenvalues_;
};

}  // namespace jumpflow
