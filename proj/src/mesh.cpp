#include "scoreinv/mesh.hpp"

#include "scoreinv/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace scoreinv {

Mesh::Mesh(int nx, int ny) : nx_(nx), ny_(ny) {
  if (nx < 1 || ny < 1) throw std::invalid_argument("mesh needs at least one cell in each direction");
  elements_.reserve(num_elements());
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const Index n00 = node_index(i, j);
      const Index n10 = node_index(i + 1, j);
      const Index n01 = node_index(i, j + 1);
      const Index n11 = node_index(i + 1, j + 1);
      elements_.push_back({n00, n10, n11});
      elements_.push_back({n00, n11, n01});
    }
  }
  grads_.reserve(elements_.size());
  for (const auto& el : elements_) {
    const Point2 a = node(el[0]);
    const Point2 b = node(el[1]);
    const Point2 c = node(el[2]);
    const double det = (b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y());
    Eigen::Matrix<double, 3, 2> g;
    g << b.y() - c.y(), c.x() - b.x(),
         c.y() - a.y(), a.x() - c.x(),
         a.y() - b.y(), b.x() - a.x();
    grads_.push_back(g / det);
  }
}

Point2 Mesh::node(Index n) const {
  const Index i = n % (nx_ + 1);
  const Index j = n / (nx_ + 1);
  return {double(i) / nx_, double(j) / ny_};
}

Matrix Mesh::node_coordinates() const {
  Matrix x(num_nodes(), 2);
  for (Index n = 0; n < num_nodes(); ++n) x.row(n) = node(n).transpose();
  return x;
}

Point2 Mesh::centroid(Index e) const {
  const auto& el = elements_[e];
  return (node(el[0]) + node(el[1]) + node(el[2])) / 3.0;
}

BoundaryTag Mesh::tag(Index n) const {
  const Index i = n % (nx_ + 1);
  const Index j = n / (nx_ + 1);
  if (j == 0) return BoundaryTag::dirichlet_bottom;
  if (j == ny_) return BoundaryTag::dirichlet_top;
  if (i == 0) return BoundaryTag::neumann_left;
  if (i == nx_) return BoundaryTag::neumann_right;
  return BoundaryTag::interior;
}

std::pair<Index, Eigen::Vector3d> Mesh::locate(const Point2& p) const {
  if (!(p.x() >= 0 && p.x() <= 1 && p.y() >= 0 && p.y() <= 1)) {
    throw std::invalid_argument("point outside the unit square");
  }
  const int i = std::min(static_cast<int>(std::floor(p.x() * nx_)), nx_ - 1);
  const int j = std::min(static_cast<int>(std::floor(p.y() * ny_)), ny_ - 1);
  const double s = p.x() * nx_ - i;
  const double t = p.y() * ny_ - j;
  const Index cell = 2 * (static_cast<Index>(j) * nx_ + i);
  if (s >= t) return {cell, Eigen::Vector3d(1 - s, s - t, t)};
  return {cell + 1, Eigen::Vector3d(1 - t, s, t - s)};
}

namespace {

template <typename LocalFn>
SparseMatrix assemble(const Mesh& mesh, LocalFn&& local) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(9 * mesh.num_elements());
  for (Index e = 0; e < mesh.num_elements(); ++e) {
    const Eigen::Matrix3d k = local(e);
    const auto& el = mesh.element(e);
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) trip.emplace_back(el[a], el[b], k(a, b));
    }
  }
  SparseMatrix out(mesh.num_nodes(), mesh.num_nodes());
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

Eigen::Matrix3d reference_mass(double area) {
  Eigen::Matrix3d m;
  m << 2, 1, 1, 1, 2, 1, 1, 1, 2;
  return m * (area / 12.0);
}

}  // namespace

SparseMatrix assemble_mass(const Mesh& mesh) {
  const Eigen::Matrix3d m = reference_mass(mesh.element_area());
  return assemble(mesh, [&](Index) { return m; });
}

Vector lumped_mass(const Mesh& mesh) {
  Vector d = Vector::Zero(mesh.num_nodes());
  const double w = mesh.element_area() / 3.0;
  for (Index e = 0; e < mesh.num_elements(); ++e) {
    for (Index n : mesh.element(e)) d(n) += w;
  }
  return d;
}

SparseMatrix assemble_stiffness(const Mesh& mesh, const Vector& element_coeff) {
  const double area = mesh.element_area();
  return assemble(mesh, [&](Index e) -> Eigen::Matrix3d {
    const auto& g = mesh.basis_gradients(e);
    return (element_coeff(e) * area) * (g * g.transpose());
  });
}

SparseMatrix assemble_tensor_stiffness(const Mesh& mesh, const Eigen::Matrix2d& theta) {
  const double area = mesh.element_area();
  return assemble(mesh, [&](Index e) -> Eigen::Matrix3d {
    const auto& g = mesh.basis_gradients(e);
    return area * (g * theta * g.transpose());
  });
}

SparseMatrix assemble_weighted_mass(const Mesh& mesh, const Vector& element_weight) {
  const Eigen::Matrix3d m = reference_mass(mesh.element_area());
  return assemble(mesh, [&](Index e) -> Eigen::Matrix3d { return element_weight(e) * m; });
}

ObservationOperator::ObservationOperator(const Mesh& mesh, const Matrix& points) : points_(points) {
  if (points.cols() != 2) throw std::invalid_argument("observation points must be M x 2");
  std::vector<Eigen::Triplet<double>> trip;
  for (Index r = 0; r < points.rows(); ++r) {
    const auto [e, w] = mesh.locate(points.row(r).transpose());
    const auto& el = mesh.element(e);
    for (int a = 0; a < 3; ++a) {
      if (w(a) != 0.0) trip.emplace_back(r, el[a], w(a));
    }
  }
  matrix_.resize(points.rows(), mesh.num_nodes());
  matrix_.setFromTriplets(trip.begin(), trip.end());
}

Matrix interior_lattice(int n) {
  Matrix p(static_cast<Index>(n) * n, 2);
  Index r = 0;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) p.row(r++) << double(i + 1) / (n + 1), double(j + 1) / (n + 1);
  }
  return p;
}

void write_field_csv(const std::string& path, const Mesh& mesh, const Vector& values) {
  if (values.size() != mesh.num_nodes()) throw std::invalid_argument("field length does not match mesh");
  Matrix grid(mesh.ny() + 1, mesh.nx() + 1);
  for (int j = 0; j <= mesh.ny(); ++j) {
    for (int i = 0; i <= mesh.nx(); ++i) grid(j, i) = values(mesh.node_index(i, j));
  }
  nlohmann::json header = {{"nx", mesh.nx()}, {"ny", mesh.ny()}, {"bbox", {0.0, 1.0, 0.0, 1.0}},
                           {"layout", "row j = y index, column i = x index"}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# " << header.dump() << "\n";
  for (Index j = 0; j < grid.rows(); ++j) {
    for (Index i = 0; i < grid.cols(); ++i) out << (i ? "," : "") << format_double(grid(j, i));
    out << "\n";
  }
}

Vector read_field_csv(const std::string& path, const Mesh& mesh) {
  const Matrix grid = read_matrix_csv(path);
  if (grid.rows() != mesh.ny() + 1 || grid.cols() != mesh.nx() + 1) {
    throw std::invalid_argument(path + ": grid shape does not match mesh");
  }
  Vector v(mesh.num_nodes());
  for (int j = 0; j <= mesh.ny(); ++j) {
    for (int i = 0; i <= mesh.nx(); ++i) v(mesh.node_index(i, j)) = grid(j, i);
  }
  return v;
}

}  // namespace scoreinv
