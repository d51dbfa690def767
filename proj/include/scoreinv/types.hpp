#ifndef SCOREINV_TYPES_HPP
#define SCOREINV_TYPES_HPP

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <stdexcept>
#include <string>

namespace scoreinv {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Point2 = Eigen::Vector2d;

// Column i of an ensemble is the observable vector of scenario i (M x Ns).
template <typename Scalar>
using EnsembleT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Ensemble = EnsembleT<double>;

// Raised when a numerical procedure fails (factorization, Newton, line search).
// Bad input is reported with std::invalid_argument.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace scoreinv

#endif  // SCOREINV_TYPES_HPP
