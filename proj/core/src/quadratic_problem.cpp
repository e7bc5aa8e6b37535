#include "jumpflow/quadratic_problem.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "jumpflow/errors.hpp"
#include "jumpflow/linalg.hpp"

namespace jumpflow {

namespace {
constexpr double kMaxCondition = 1e12;
}

Topology::Topology(std::size_t agents, std::vector<Edge> edges)
    : agents_(agents), edges_(std::move(edges)) {
  for (const Edge& e : edges_) {
    if (e.sender >= agents_ || e.receiver >= agents_) {
      throw InvalidArgument("edge refers to an agent outside the topology");
    }
    if (e.sender == e.receiver) throw InvalidArgument("self-loops are not allowed");
  }
  std::sort(edges_.begin(), edges_.end());
  if (std::adjacent_find(edges_.begin(), edges_.end()) != edges_.end()) {
    throw InvalidArgument("duplicate edge");
  }
}

Topology Topology::complete(std::size_t agents) {
  std::vector<Edge> edges;
  for (std::size_t j = 0; j < agents; ++j) {
    for (std::size_t i = 0; i < agents; ++i) {
      if (i != j) edges.push_back({j, i});
    }
  }
  return Topology(agents, std::move(edges));
}

bool Topology::is_complete() const { return edges_.size() == agents_ * (agents_ - (agents_ > 0)); }

QuadraticProblem::QuadraticProblem(Matrix q_matrix, Vector q_vector,
                                   std::vector<std::size_t> partition)
    : Q_(std::move(q_matrix)), q_(std::move(q_vector)), partition_(std::move(partition)) {
  if (Q_.rows() == 0 || Q_.rows() != Q_.cols()) throw InvalidArgument("Q must be square and non-empty");
  if (q_.size() != Q_.rows()) throw InvalidArgument("q must have the dimension of Q");
  if (partition_.empty()) throw InvalidArgument("partition must list at least one block");
  if (std::find(partition_.begin(), partition_.end(), 0u) != partition_.end()) {
    throw InvalidArgument("partition block sizes must be positive");
  }
  if (std::accumulate(partition_.begin(), partition_.end(), std::size_t{0}) != dim()) {
    throw InvalidArgument("partition block sizes must sum to the dimension of Q");
  }
  if (!linalg::is_symmetric(Q_, 1e-12)) throw InvalidArgument("Q must be symmetric");
  if (!Q_.allFinite() || !q_.allFinite()) throw InvalidArgument("Q and q must be finite");
  eigenvalues_ = linalg::symmetric_eigenvalues(Q_);
  if (!(eigenvalues_(0) > 0.0)) {
    std::ostringstream msg;
    msg << "Q must be positive definite (smallest eigenvalue " << eigenvalues_(0) << ")";
    throw InvalidArgument(msg.str());
  }
  offsets_.resize(partition_.size() + 1, 0);
  std::partial_sum(partition_.begin(), partition_.end(), offsets_.begin() + 1);
}

std::size_t QuadraticProblem::offset(std::size_t agent) const {
  if (agent >= agents()) throw InvalidArgument("agent index out of range");
  return offsets_[agent];
}

std::size_t QuadraticProblem::block_size(std::size_t agent) const {
  if (agent >= agents()) throw InvalidArgument("agent index out of range");
  return partition_[agent];
}

Matrix QuadraticProblem::block(std::size_t i, std::size_t j) const {
  return Q_.block(offset(i), offset(j), block_size(i), block_size(j));
}

Vector QuadraticProblem::block_vector(std::size_t i) const {
  return q_.segment(offset(i), block_size(i));
}

Vector QuadraticProblem::segment(const Vector& stacked, std::size_t agent) const {
  if (static_cast<std::size_t>(stacked.size()) != dim()) throw InvalidArgument("dimension mismatch");
  return stacked.segment(offset(agent), block_size(agent));
}

double QuadraticProblem::objective(const Vector& y) const {
  return 0.5 * y.dot(Q_ * y) + q_.dot(y);
}

Vector QuadraticProblem::gradient(const Vector& y) const { return Q_ * y + q_; }

Vector QuadraticProblem::optimal_solution() const {
  const double cond = condition_number();
  if (cond > kMaxCondition) {
    std::ostringstream msg;
    msg << "Q is numerically singular (condition estimate " << cond << ")";
    throw IllConditioned(msg.str(), cond);
  }
  Eigen::LLT<Matrix> llt(Q_);
  return llt.solve(-q_);
}

}  // namespace jumpflow
