#ifndef SCOREINV_PRIOR_HPP
#define SCOREINV_PRIOR_HPP

#include "scoreinv/mesh.hpp"

#include <Eigen/SparseCholesky>

#include <cstdint>
#include <memory>

namespace scoreinv {

enum class PriorKind { standard, informed };

std::string to_string(PriorKind kind);
PriorKind prior_kind_from_string(const std::string& name);

/// Anisotropic tensor R(angle) diag(theta0, theta1) R(angle)^T.
Eigen::Matrix2d anisotropy_tensor(double theta0, double theta1, double angle);

struct PriorSpec {
  PriorKind kind = PriorKind::standard;
  double gamma = 0.1;
  double delta = 0.5;
  Eigen::Matrix2d theta = anisotropy_tensor(2.0, 0.5, 0.7853981633974483);
  double penalty = 10.0;
  Matrix mollifier_points = default_mollifier_points();  // N x 2
  // Mollifier exponent factor; negative selects gamma^2 / delta^2.
  double width_ratio = -1.0;

  static Matrix default_mollifier_points();
  double mollifier_ratio() const { return width_ratio < 0 ? gamma * gamma / (delta * delta) : width_ratio; }
  void validate() const;
};

/// Gaussian prior N(m_prior, (K M_L^{-1} K)^{-1}) where K discretizes
/// gamma div(Theta grad) + delta (plus penalty * mollifier mass for the
/// informed kind) with natural boundary conditions and M_L is the lumped mass.
class Prior {
 public:
  Prior(const Mesh& mesh, const PriorSpec& spec, const Vector* m_true = nullptr);

  const PriorSpec& spec() const { return spec_; }
  const Vector& mean() const { return mean_; }
  const SparseMatrix& operator_matrix() const { return k_; }

  /// R(m) = 1/2 (m - m_prior)^T K M_L^{-1} K (m - m_prior).
  double value(const Vector& m) const;
  /// R_m(m) = K M_L^{-1} K (m - m_prior).
  Vector gradient(const Vector& m) const;
  /// m_prior + K^{-1} M_L^{1/2} z, z ~ N(0, I) from stream (seed, index).
  Vector sample(std::uint64_t seed, std::uint64_t index = 0) const;

  /// Mollifier sum at a point.
  double mollifier(const Point2& x) const;

 private:
  PriorSpec spec_;
  SparseMatrix k_;
  Vector lumped_;
  Vector mean_;
  std::shared_ptr<Eigen::SimplicialLLT<SparseMatrix>> llt_;
};

}  // namespace scoreinv

#endif  // SCOREINV_PRIOR_HPP
