#ifndef SCOREINV_MESH_HPP
#define SCOREINV_MESH_HPP

#include "scoreinv/types.hpp"

#include <array>
#include <string>
#include <vector>

namespace scoreinv {

enum class BoundaryTag { interior, dirichlet_bottom, dirichlet_top, neumann_left, neumann_right };

/// Uniform right-triangulated grid on the unit square, nx x ny cells, two
/// triangles per cell. Node (i, j) has index j * (nx + 1) + i. Corners belong
/// to the Dirichlet (top/bottom) sides.
class Mesh {
 public:
  Mesh(int nx, int ny);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  Index num_nodes() const { return static_cast<Index>(nx_ + 1) * (ny_ + 1); }
  Index num_elements() const { return 2 * static_cast<Index>(nx_) * ny_; }
  Index node_index(int i, int j) const { return static_cast<Index>(j) * (nx_ + 1) + i; }

  Point2 node(Index n) const;
  Matrix node_coordinates() const;  // N x 2
  const std::array<Index, 3>& element(Index e) const { return elements_[e]; }
  double element_area() const { return 0.5 / (double(nx_) * ny_); }
  /// Rows are the gradients of the three P1 basis functions on element e.
  const Eigen::Matrix<double, 3, 2>& basis_gradients(Index e) const { return grads_[e]; }
  Point2 centroid(Index e) const;

  BoundaryTag tag(Index n) const;
  bool is_dirichlet(Index n) const {
    const auto t = tag(n);
    return t == BoundaryTag::dirichlet_bottom || t == BoundaryTag::dirichlet_top;
  }

  /// Element containing p and barycentric weights of its three nodes.
  std::pair<Index, Eigen::Vector3d> locate(const Point2& p) const;

 private:
  int nx_;
  int ny_;
  std::vector<std::array<Index, 3>> elements_;
  std::vector<Eigen::Matrix<double, 3, 2>> grads_;
};

/// Nodal P1 function on a mesh.
struct Field {
  Vector values;

  static Field zeros(const Mesh& mesh) { return {Vector::Zero(mesh.num_nodes())}; }
};

/// Consistent P1 mass matrix.
SparseMatrix assemble_mass(const Mesh& mesh);
/// Row sums of the consistent mass matrix.
Vector lumped_mass(const Mesh& mesh);
/// Stiffness (kappa_e * grad phi_a . grad phi_b) with one coefficient per element.
SparseMatrix assemble_stiffness(const Mesh& mesh, const Vector& element_coeff);
/// Stiffness with a constant 2x2 diffusion tensor.
SparseMatrix assemble_tensor_stiffness(const Mesh& mesh, const Eigen::Matrix2d& theta);
/// Mass matrix weighted by a function evaluated at element centroids.
SparseMatrix assemble_weighted_mass(const Mesh& mesh, const Vector& element_weight);

/// Barycentric P1 interpolation at M fixed points (the map B and its
/// transpose B*).
class ObservationOperator {
 public:
  ObservationOperator(const Mesh& mesh, const Matrix& points);

  Index size() const { return matrix_.rows(); }
  const SparseMatrix& matrix() const { return matrix_; }
  const Matrix& points() const { return points_; }

  Vector apply(const Vector& nodal) const { return matrix_ * nodal; }
  Vector apply_transpose(const Vector& obs) const { return matrix_.transpose() * obs; }

 private:
  Matrix points_;
  SparseMatrix matrix_;
};

/// n x n interior lattice {(i+1)/(n+1)} in both directions, as an (n*n) x 2 matrix.
Matrix interior_lattice(int n);

/// CSV grid (rows = j, columns = i) preceded by a JSON header comment line.
void write_field_csv(const std::string& path, const Mesh& mesh, const Vector& values);
Vector read_field_csv(const std::string& path, const Mesh& mesh);

}  // namespace scoreinv

#endif  // SCOREINV_MESH_HPP
