#include "scoreinv/prior.hpp"

#include "scoreinv/stochastic.hpp"

#include <cmath>

namespace scoreinv {

std::string to_string(PriorKind kind) { return kind == PriorKind::standard ? "standard" : "informed"; }

PriorKind prior_kind_from_string(const std::string& name) {
  if (name == "standard") return PriorKind::standard;
  if (name == "informed") return PriorKind::informed;
  throw std::invalid_argument("unknown prior kind '" + name + "'");
}

Eigen::Matrix2d anisotropy_tensor(double theta0, double theta1, double angle) {
  const Eigen::Matrix2d r = Eigen::Rotation2Dd(angle).toRotationMatrix();
  return r * Eigen::Vector2d(theta0, theta1).asDiagonal() * r.transpose();
}

Matrix PriorSpec::default_mollifier_points() {
  Matrix p(5, 2);
  p << 0.1, 0.1,
       0.1, 0.9,
       0.5, 0.5,
       0.9, 0.1,
       0.9, 0.9;
  return p;
}

void PriorSpec::validate() const {
  if (!(gamma > 0) || !(delta > 0)) throw std::invalid_argument("prior gamma and delta must be positive");
  if (penalty < 0) throw std::invalid_argument("prior penalty must be nonnegative");
  if (std::abs(theta(0, 1) - theta(1, 0)) > 1e-14 * theta.norm()) {
    throw std::invalid_argument("prior anisotropy tensor must be symmetric");
  }
  Eigen::LLT<Eigen::Matrix2d> llt(theta);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("prior anisotropy tensor must be SPD");
  if (kind == PriorKind::informed && mollifier_points.rows() < 1) {
    throw std::invalid_argument("informed prior needs at least one mollifier point");
  }
  if (mollifier_points.rows() > 0 && mollifier_points.cols() != 2) {
    throw std::invalid_argument("mollifier points must be N x 2");
  }
}

Prior::Prior(const Mesh& mesh, const PriorSpec& spec, const Vector* m_true) : spec_(spec) {
  spec_.validate();
  const SparseMatrix mass = assemble_mass(mesh);
  lumped_ = lumped_mass(mesh);
  k_ = spec_.gamma * assemble_tensor_stiffness(mesh, spec_.theta) + spec_.delta * mass;
  mean_ = Vector::Zero(mesh.num_nodes());
  if (spec_.kind == PriorKind::informed) {
    if (m_true == nullptr || m_true->size() != mesh.num_nodes()) {
      throw std::invalid_argument("informed prior needs the true parameter field on the mesh");
    }
    Vector w(mesh.num_elements());
    for (Index e = 0; e < mesh.num_elements(); ++e) w(e) = mollifier(mesh.centroid(e));
    const SparseMatrix moll = assemble_weighted_mass(mesh, w);
    // Mean: argmin 1/2 <m, m>_K + p/2 <m_true - m, m_true - m>_moll, i.e.
    // (K + p moll) m = p moll m_true, with the same operator as the covariance.
    k_ = (k_ + spec_.penalty * moll).pruned();
    llt_ = std::make_shared<Eigen::SimplicialLLT<SparseMatrix>>(k_);
    if (llt_->info() != Eigen::Success) throw NumericalError("prior operator factorization failed");
    mean_ = llt_->solve(spec_.penalty * (moll * *m_true));
  } else {
    llt_ = std::make_shared<Eigen::SimplicialLLT<SparseMatrix>>(k_);
    if (llt_->info() != Eigen::Success) throw NumericalError("prior operator factorization failed");
  }
}

double Prior::mollifier(const Point2& x) const {
  const Eigen::Matrix2d theta_inv = spec_.theta.inverse();
  const double ratio = spec_.mollifier_ratio();
  double acc = 0;
  for (Index i = 0; i < spec_.mollifier_points.rows(); ++i) {
    const Point2 d = x - spec_.mollifier_points.row(i).transpose();
    acc += std::exp(-ratio * d.dot(theta_inv * d));
  }
  return acc;
}

double Prior::value(const Vector& m) const {
  const Vector km = k_ * (m - mean_);
  return 0.5 * km.dot(km.cwiseQuotient(lumped_));
}

Vector Prior::gradient(const Vector& m) const {
  const Vector km = k_ * (m - mean_);
  return k_ * km.cwiseQuotient(lumped_);
}

Vector Prior::sample(std::uint64_t seed, std::uint64_t index) const {
  const Vector z = standard_normals(mean_.size(), seed, index);
  return mean_ + llt_->solve(lumped_.cwiseSqrt().cwiseProduct(z));
}

}  // namespace scoreinv
