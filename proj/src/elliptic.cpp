#include "scoreinv/elliptic.hpp"

#include "scoreinv/io.hpp"
#include "scoreinv/stochastic.hpp"

#include <cmath>

namespace scoreinv {

EllipticModel::EllipticModel(Mesh mesh, const Matrix& observation_points)
    : mesh_(std::move(mesh)), obs_(mesh_, observation_points), mass_(assemble_mass(mesh_)),
      lumped_(lumped_mass(mesh_)) {
  const Index n = mesh_.num_nodes();
  reduced_index_.assign(n, -1);
  g_ = Vector::Zero(n);
  for (Index i = 0; i < n; ++i) {
    if (mesh_.is_dirichlet(i)) {
      dirichlet_.push_back(i);
      if (mesh_.tag(i) == BoundaryTag::dirichlet_top) g_(i) = 1.0;
    } else {
      reduced_index_[i] = static_cast<Index>(free_.size());
      free_.push_back(i);
    }
  }
}

Vector EllipticModel::coefficient(const Vector& m) const {
  if (m.size() != mesh_.num_nodes()) {
    throw std::invalid_argument("parameter field has " + std::to_string(m.size()) + " entries, mesh has " +
                                std::to_string(mesh_.num_nodes()) + " nodes");
  }
  Vector c(mesh_.num_elements());
  for (Index e = 0; e < mesh_.num_elements(); ++e) {
    const auto& el = mesh_.element(e);
    const double mc = (m(el[0]) + m(el[1]) + m(el[2])) / 3.0;
    c(e) = std::exp(mc);
    if (!std::isfinite(c(e))) {
      Index worst = el[0];
      for (Index k : el) {
        if (!std::isfinite(m(k)) || std::abs(m(k)) > std::abs(m(worst))) worst = k;
      }
      throw std::invalid_argument("coefficient overflow at node " + std::to_string(worst) + " (m = " +
                                  format_double(m(worst)) + ")");
    }
  }
  return c;
}

ForwardOperator EllipticModel::assemble(const Vector& m) const {
  ForwardOperator op;
  op.coeff_ = coefficient(m);
  op.full_ = assemble_stiffness(mesh_, op.coeff_);
  const Index nf = static_cast<Index>(free_.size());
  const Index nd = static_cast<Index>(dirichlet_.size());
  std::vector<Index> dir_index(mesh_.num_nodes(), -1);
  for (Index k = 0; k < nd; ++k) dir_index[dirichlet_[k]] = k;
  std::vector<Eigen::Triplet<double>> tff;
  std::vector<Eigen::Triplet<double>> tfd;
  for (Index col = 0; col < op.full_.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(op.full_, col); it; ++it) {
      const Index r = reduced_index_[it.row()];
      if (r < 0) continue;
      const Index c = reduced_index_[it.col()];
      if (c >= 0) {
        tff.emplace_back(r, c, it.value());
      } else {
        tfd.emplace_back(r, dir_index[it.col()], it.value());
      }
    }
  }
  op.reduced_.resize(nf, nf);
  op.reduced_.setFromTriplets(tff.begin(), tff.end());
  op.coupling_.resize(nf, nd);
  op.coupling_.setFromTriplets(tfd.begin(), tfd.end());
  op.llt_ = std::make_shared<Eigen::SimplicialLLT<SparseMatrix>>(op.reduced_);
  if (op.llt_->info() != Eigen::Success) {
    throw NumericalError("sparse Cholesky of the reduced stiffness failed (n = " + std::to_string(nf) + ")");
  }
  ++counters_.factorizations;
  return op;
}

Vector EllipticModel::solve_forward(const ForwardOperator& op, const Vector& forcing) const {
  if (forcing.size() != mesh_.num_nodes()) throw std::invalid_argument("forcing length does not match mesh");
  const Vector load = mass_ * forcing;
  Vector gd(dirichlet_.size());
  for (std::size_t k = 0; k < dirichlet_.size(); ++k) gd(static_cast<Index>(k)) = g_(dirichlet_[k]);
  Vector rhs(free_.size());
  for (std::size_t k = 0; k < free_.size(); ++k) rhs(static_cast<Index>(k)) = load(free_[k]);
  rhs -= op.coupling_ * gd;
  const Vector uf = op.llt_->solve(rhs);
  if (op.llt_->info() != Eigen::Success || !uf.allFinite()) throw NumericalError("forward solve failed");
  Vector u = g_;
  for (std::size_t k = 0; k < free_.size(); ++k) u(free_[k]) = uf(static_cast<Index>(k));
  ++counters_.forward;
  return u;
}

Vector EllipticModel::solve_adjoint(const ForwardOperator& op, const Vector& rhs_obs) const {
  if (rhs_obs.size() != obs_.size()) throw std::invalid_argument("adjoint right-hand side has wrong length");
  const Vector b = obs_.apply_transpose(rhs_obs);
  Vector rhs(free_.size());
  for (std::size_t k = 0; k < free_.size(); ++k) rhs(static_cast<Index>(k)) = -b(free_[k]);
  const Vector pf = op.llt_->solve(rhs);
  if (op.llt_->info() != Eigen::Success || !pf.allFinite()) throw NumericalError("adjoint solve failed");
  Vector p = Vector::Zero(mesh_.num_nodes());
  for (std::size_t k = 0; k < free_.size(); ++k) p(free_[k]) = pf(static_cast<Index>(k));
  ++counters_.adjoint;
  return p;
}

Vector EllipticModel::parameter_sensitivity(const ForwardOperator& op, const Vector& u, const Vector& p) const {
  Vector g = Vector::Zero(mesh_.num_nodes());
  const double area = mesh_.element_area();
  for (Index e = 0; e < mesh_.num_elements(); ++e) {
    const auto& el = mesh_.element(e);
    const auto& gr = mesh_.basis_gradients(e);
    const Eigen::Vector3d ue(u(el[0]), u(el[1]), u(el[2]));
    const Eigen::Vector3d pe(p(el[0]), p(el[1]), p(el[2]));
    const Eigen::Vector2d gu = gr.transpose() * ue;
    const Eigen::Vector2d gp = gr.transpose() * pe;
    // kappa_e = exp(mean of the three nodal values): d kappa_e / d m_j = kappa_e / 3.
    const double contrib = op.coeff_(e) * area * gu.dot(gp) / 3.0;
    for (Index k : el) g(k) += contrib;
  }
  return g;
}

Vector make_observations(const EllipticModel& model, const Vector& m_true, const Vector& truth_forcing,
                         double noise_sigma, std::uint64_t seed) {
  if (noise_sigma < 0) throw std::invalid_argument("noise sigma must be nonnegative");
  const Vector d = model.observation().apply(model.solve_forward(m_true, truth_forcing));
  if (noise_sigma == 0) return d;
  return d + noise_sigma * standard_normals(d.size(), seed, 0);
}

InverseProblem::InverseProblem(const EllipticModel& model, Matrix forcings, Vector d_obs, ScoreSpec score,
                               const Prior& prior, double score_weight)
    : model_(model), forcings_(std::move(forcings)), d_obs_(std::move(d_obs)), score_(std::move(score)),
      prior_(prior), score_weight_(score_weight) {
  if (forcings_.rows() < 1) throw std::invalid_argument("need at least one scenario");
  if (forcings_.cols() != model_.mesh().num_nodes()) throw std::invalid_argument("scenario forcings do not match mesh");
  if (d_obs_.size() != model_.observation().size()) {
    throw std::invalid_argument("observation vector has " + std::to_string(d_obs_.size()) + " entries, operator has " +
                                std::to_string(model_.observation().size()));
  }
  if (score_.kind == ScoreKind::variogram || score_.kind == ScoreKind::hybrid) {
    if (score_.variogram.w.rows() != d_obs_.size()) throw std::invalid_argument("variogram weights do not match M");
  }
  if (score_weight_ < 0) throw std::invalid_argument("score weight must be nonnegative");
}

Ensemble InverseProblem::predict(const Vector& m) const {
  const ForwardOperator op = model_.assemble(m);
  Ensemble d(model_.observation().size(), forcings_.rows());
  for (Index i = 0; i < forcings_.rows(); ++i) {
    d.col(i) = model_.observation().apply(model_.solve_forward(op, forcings_.row(i).transpose()));
  }
  return d;
}

double InverseProblem::value(const Vector& m) const {
  const double s = score_weight_ == 0 ? 0.0 : score(score_, predict(m), d_obs_);
  return score_weight_ * s + prior_.value(m);
}

ObjectiveValue InverseProblem::evaluate(const Vector& m) const {
  const ForwardOperator op = model_.assemble(m);
  const Index ns = forcings_.rows();
  std::vector<Vector> states(static_cast<std::size_t>(ns));
  ObjectiveValue out;
  out.predictions.resize(model_.observation().size(), ns);
  for (Index i = 0; i < ns; ++i) {
    states[i] = model_.solve_forward(op, forcings_.row(i).transpose());
    out.predictions.col(i) = model_.observation().apply(states[i]);
  }
  out.score = score(score_, out.predictions, d_obs_);
  out.regularization = prior_.value(m);
  out.value = score_weight_ * out.score + out.regularization;
  out.gradient = prior_.gradient(m);
  if (score_weight_ != 0) {
    const ScoreGradient g = score_grad(score_, out.predictions, d_obs_);
    out.degenerate = g.degenerate;
    Vector acc = Vector::Zero(m.size());
    for (Index i = 0; i < ns; ++i) {
      const Vector p = model_.solve_adjoint(op, g.d.col(i));
      acc += model_.parameter_sensitivity(op, states[i], p);
    }
    out.gradient += score_weight_ * acc;
  }
  return out;
}

}  // namespace scoreinv
