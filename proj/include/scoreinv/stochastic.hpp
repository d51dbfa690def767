#ifndef SCOREINV_STOCHASTIC_HPP
#define SCOREINV_STOCHASTIC_HPP

#include "scoreinv/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <random>
#include <string>
#include <variant>

namespace scoreinv {

/// Independent random stream for (seed, index). Stream i does not depend on
/// how many streams were drawn before it.
std::mt19937_64 random_stream(std::uint64_t seed, std::uint64_t index);

/// Fill with i.i.d. standard normals from stream (seed, index).
Vector standard_normals(Index n, std::uint64_t seed, std::uint64_t index);

// sigma^2 exp(-hx^2/lx^2 - hy^2/ly^2), plus nugget on the diagonal.
struct SpatialKernel {
  double sigma = 0.7;
  double length_x = 0.1875;
  double length_y = 0.1406;
  double nugget = 1e-4;
};

// scale2 * (exp(-h^2/length2) + floor), plus nugget on the diagonal.
struct TemporalKernel {
  double scale2 = 1.0;
  double length2 = 0.002;
  double floor = 0.1;
  double nugget = 0.0;
};

struct GpSpec {
  double mean = 0.0;
  std::variant<SpatialKernel, TemporalKernel> kernel = SpatialKernel{};

  int dimension() const { return std::holds_alternative<SpatialKernel>(kernel) ? 2 : 1; }
  void validate() const;
};

nlohmann::json gp_spec_to_json(const GpSpec& spec);
GpSpec gp_spec_from_json(const nlohmann::json& j);

/// Kernel evaluated between two points (rows of a points matrix).
double kernel_value(const GpSpec& spec, const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b,
                    bool same_point);

/// Covariance over `points` (N x d, one point per row).
Matrix build_covariance(const Matrix& points, const GpSpec& spec);

/// Lower Cholesky factor; throws NumericalError naming the failing leading
/// minor when the matrix is not SPD.
Matrix cholesky_lower(const Matrix& k);

/// Factored Gaussian process over a fixed point set. Draws are pure functions
/// of (seed, index) and safe to call concurrently.
class GaussianProcess {
 public:
  GaussianProcess(GpSpec spec, Matrix points);

  Vector draw(std::uint64_t seed, std::uint64_t index) const;

  const GpSpec& spec() const { return spec_; }
  const Matrix& points() const { return points_; }
  const Matrix& covariance() const { return cov_; }
  const Matrix& factor() const { return chol_; }

 private:
  GpSpec spec_;
  Matrix points_;
  Matrix cov_;
  Matrix chol_;
};

struct SampleBatch {
  Matrix samples;  // K x N
  std::uint64_t seed = 0;
  Matrix points;   // N x d
  GpSpec spec;
};

/// K draws (rows) of the process at `points`; row i uses stream (seed, first_index + i).
SampleBatch sample(const GpSpec& spec, const Matrix& points, Index count, std::uint64_t seed,
                   std::uint64_t first_index = 0);
SampleBatch sample(const GaussianProcess& gp, Index count, std::uint64_t seed, std::uint64_t first_index = 0);

/// Writes `<stem>.csv` (samples, one draw per row) and `<stem>.json` (spec,
/// seed, points).
void save_sample_batch(const SampleBatch& batch, const std::string& stem);
SampleBatch load_sample_batch(const std::string& stem);

}  // namespace scoreinv

#endif  // SCOREINV_STOCHASTIC_HPP
