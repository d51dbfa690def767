#ifndef SCOREINV_ELLIPTIC_HPP
#define SCOREINV_ELLIPTIC_HPP

// Forward and adjoint solves for -div(exp(m) grad u) = f on the unit square
// with u = 1 on the top edge, u = 0 on the bottom edge and no-flow on the
// sides, and the score-based misfit objective built on them.

#include "scoreinv/mesh.hpp"
#include "scoreinv/prior.hpp"
#include "scoreinv/scores.hpp"

#include <Eigen/SparseCholesky>

#include <atomic>
#include <cstdint>
#include <memory>

namespace scoreinv {

struct SolveCounters {
  std::atomic<long> forward{0};
  std::atomic<long> adjoint{0};
  std::atomic<long> factorizations{0};
};

class EllipticModel;

/// Reduced stiffness K_FF(m) factored once; shared read-only by every forward
/// and adjoint solve at this parameter.
class ForwardOperator {
 public:
  const Vector& element_coeff() const { return coeff_; }
  const SparseMatrix& stiffness() const { return full_; }
  const SparseMatrix& reduced() const { return reduced_; }

 private:
  friend class EllipticModel;
  Vector coeff_;           // exp(m) at element centroids
  SparseMatrix full_;      // N x N
  SparseMatrix reduced_;   // free x free
  SparseMatrix coupling_;  // free x dirichlet
  std::shared_ptr<Eigen::SimplicialLLT<SparseMatrix>> llt_;
};

class EllipticModel {
 public:
  EllipticModel(Mesh mesh, const Matrix& observation_points);

  const Mesh& mesh() const { return mesh_; }
  const ObservationOperator& observation() const { return obs_; }
  const SparseMatrix& mass() const { return mass_; }
  const Vector& lumped() const { return lumped_; }
  const std::vector<Index>& free_nodes() const { return free_; }
  const std::vector<Index>& dirichlet_nodes() const { return dirichlet_; }
  /// Lifting values: 1 on the top edge, 0 on the bottom.
  const Vector& dirichlet_values() const { return g_; }

  /// Element coefficient exp(m at centroid); throws on overflow.
  Vector coefficient(const Vector& m) const;
  ForwardOperator assemble(const Vector& m) const;

  /// Full nodal state u with exact Dirichlet values; the load is M f.
  Vector solve_forward(const ForwardOperator& op, const Vector& forcing) const;
  Vector solve_forward(const Vector& m, const Vector& forcing) const { return solve_forward(assemble(m), forcing); }
  /// Adjoint p solving K_FF p = -(B^T rhs_obs)_F with p = 0 on the Dirichlet edges.
  Vector solve_adjoint(const ForwardOperator& op, const Vector& rhs_obs) const;
  Vector solve_adjoint(const Vector& m, const Vector& rhs_obs) const { return solve_adjoint(assemble(m), rhs_obs); }

  /// Nodal vector with entries sum_e (dkappa_e/dm_j) |e| grad u . grad p.
  Vector parameter_sensitivity(const ForwardOperator& op, const Vector& u, const Vector& p) const;

  SolveCounters& counters() const { return counters_; }

 private:
  Mesh mesh_;
  ObservationOperator obs_;
  SparseMatrix mass_;
  Vector lumped_;
  std::vector<Index> free_;
  std::vector<Index> dirichlet_;
  std::vector<Index> reduced_index_;  // node -> free index or -1
  Vector g_;
  mutable SolveCounters counters_;
};

/// d_obs = B u(m_true; forcing) + noise_sigma * z with z drawn from stream (seed, 0).
Vector make_observations(const EllipticModel& model, const Vector& m_true, const Vector& truth_forcing,
                         double noise_sigma, std::uint64_t seed);

struct ObjectiveValue {
  double value = 0;
  double score = 0;
  double regularization = 0;
  Vector gradient;
  Ensemble predictions;  // M x Ns
  bool degenerate = false;
};

/// J(m) = score_weight * S(F(m), d_obs) + R(m) over pinned scenario forcings.
class InverseProblem {
 public:
  InverseProblem(const EllipticModel& model, Matrix forcings, Vector d_obs, ScoreSpec score, const Prior& prior,
                 double score_weight = 1.0);

  Index scenario_count() const { return forcings_.rows(); }
  const Vector& observations() const { return d_obs_; }
  const ScoreSpec& score_spec() const { return score_; }

  /// Value only: Ns forward solves.
  double value(const Vector& m) const;
  /// Value and gradient: Ns forward and Ns adjoint solves sharing one factorization.
  ObjectiveValue evaluate(const Vector& m) const;
  /// Model predictions at m (M x Ns).
  Ensemble predict(const Vector& m) const;

 private:
  const EllipticModel& model_;
  Matrix forcings_;  // Ns x N nodal forcing samples
  Vector d_obs_;
  ScoreSpec score_;
  const Prior& prior_;
  double score_weight_;
};

}  // namespace scoreinv

#endif  // SCOREINV_ELLIPTIC_HPP
