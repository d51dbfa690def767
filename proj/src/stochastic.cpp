#include "scoreinv/stochastic.hpp"

#include "scoreinv/io.hpp"

#include <cmath>

namespace scoreinv {

std::mt19937_64 random_stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    0x5c0e1a7u};
  return std::mt19937_64(seq);
}

Vector standard_normals(Index n, std::uint64_t seed, std::uint64_t index) {
  auto gen = random_stream(seed, index);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(n);
  for (Index i = 0; i < n; ++i) z(i) = normal(gen);
  return z;
}

void GpSpec::validate() const {
  if (!std::isfinite(mean)) throw std::invalid_argument("GP mean must be finite");
  if (const auto* s = std::get_if<SpatialKernel>(&kernel)) {
    if (!(s->sigma > 0)) throw std::invalid_argument("GP sigma must be positive");
    if (!(s->length_x > 0) || !(s->length_y > 0)) throw std::invalid_argument("GP length scales must be positive");
    if (s->nugget < 0) throw std::invalid_argument("GP nugget must be nonnegative");
  } else {
    const auto& t = std::get<TemporalKernel>(kernel);
    if (!(t.scale2 > 0)) throw std::invalid_argument("GP variance scale must be positive");
    if (!(t.length2 > 0)) throw std::invalid_argument("GP length scale must be positive");
    if (t.floor < 0 || t.nugget < 0) throw std::invalid_argument("GP floor and nugget must be nonnegative");
  }
}

nlohmann::json gp_spec_to_json(const GpSpec& spec) {
  nlohmann::json j;
  j["mean"] = spec.mean;
  if (const auto* s = std::get_if<SpatialKernel>(&spec.kernel)) {
    j["kernel"] = "spatial-se-2d";
    j["sigma"] = s->sigma;
    j["length_x"] = s->length_x;
    j["length_y"] = s->length_y;
    j["nugget"] = s->nugget;
  } else {
    const auto& t = std::get<TemporalKernel>(spec.kernel);
    j["kernel"] = "temporal-se";
    j["scale2"] = t.scale2;
    j["length2"] = t.length2;
    j["floor"] = t.floor;
    j["nugget"] = t.nugget;
  }
  return j;
}

GpSpec gp_spec_from_json(const nlohmann::json& j) {
  GpSpec spec;
  spec.mean = j.at("mean").get<double>();
  const auto kind = j.at("kernel").get<std::string>();
  if (kind == "spatial-se-2d") {
    spec.kernel = SpatialKernel{j.at("sigma").get<double>(), j.at("length_x").get<double>(),
                                j.at("length_y").get<double>(), j.at("nugget").get<double>()};
  } else if (kind == "temporal-se") {
    spec.kernel = TemporalKernel{j.at("scale2").get<double>(), j.at("length2").get<double>(),
                                 j.at("floor").get<double>(), j.at("nugget").get<double>()};
  } else {
    throw std::invalid_argument("unknown kernel '" + kind + "'");
  }
  spec.validate();
  return spec;
}

double kernel_value(const GpSpec& spec, const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b,
                    bool same_point) {
  if (const auto* s = std::get_if<SpatialKernel>(&spec.kernel)) {
    const double hx = a(0) - b(0);
    const double hy = a(1) - b(1);
    const double k = s->sigma * s->sigma *
                     std::exp(-hx * hx / (s->length_x * s->length_x) - hy * hy / (s->length_y * s->length_y));
    return same_point ? k + s->nugget : k;
  }
  const auto& t = std::get<TemporalKernel>(spec.kernel);
  const double h = a(0) - b(0);
  const double k = t.scale2 * (std::exp(-h * h / t.length2) + t.floor);
  return same_point ? k + t.nugget : k;
}

Matrix build_covariance(const Matrix& points, const GpSpec& spec) {
  spec.validate();
  if (points.rows() < 1) throw std::invalid_argument("covariance needs at least one point");
  if (points.cols() != spec.dimension()) {
    throw std::invalid_argument("points have dimension " + std::to_string(points.cols()) + ", kernel expects " +
                                std::to_string(spec.dimension()));
  }
  const Index n = points.rows();
  Matrix k(n, n);
  for (Index j = 0; j < n; ++j) {
    const Vector pj = points.row(j).transpose();
    for (Index i = j; i < n; ++i) {
      const double v = kernel_value(spec, points.row(i).transpose(), pj, i == j);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

Matrix cholesky_lower(const Matrix& k) {
  Eigen::LLT<Matrix> llt(k);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  // Locate the first non-positive pivot for the diagnostic.
  const Index n = k.rows();
  Matrix l = Matrix::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    const double d = k(j, j) - l.row(j).head(j).squaredNorm();
    if (!(d > 0)) {
      throw NumericalError("covariance not SPD: leading minor " + std::to_string(j + 1) + " of " +
                           std::to_string(n) + " has pivot " + format_double(d));
    }
    l(j, j) = std::sqrt(d);
    for (Index i = j + 1; i < n; ++i) l(i, j) = (k(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
  }
  throw NumericalError("covariance not SPD (Cholesky breakdown)");
}

GaussianProcess::GaussianProcess(GpSpec spec, Matrix points)
    : spec_(std::move(spec)), points_(std::move(points)), cov_(build_covariance(points_, spec_)),
      chol_(cholesky_lower(cov_)) {}

Vector GaussianProcess::draw(std::uint64_t seed, std::uint64_t index) const {
  const Vector z = standard_normals(points_.rows(), seed, index);
  return Vector::Constant(points_.rows(), spec_.mean) + chol_.triangularView<Eigen::Lower>() * z;
}

SampleBatch sample(const GaussianProcess& gp, Index count, std::uint64_t seed, std::uint64_t first_index) {
  if (count < 0) throw std::invalid_argument("sample count must be nonnegative");
  SampleBatch batch;
  batch.seed = seed;
  batch.points = gp.points();
  batch.spec = gp.spec();
  batch.samples.resize(count, gp.points().rows());
  for (Index i = 0; i < count; ++i) batch.samples.row(i) = gp.draw(seed, first_index + static_cast<std::uint64_t>(i)).transpose();
  return batch;
}

SampleBatch sample(const GpSpec& spec, const Matrix& points, Index count, std::uint64_t seed,
                   std::uint64_t first_index) {
  return sample(GaussianProcess(spec, points), count, seed, first_index);
}

void save_sample_batch(const SampleBatch& batch, const std::string& stem) {
  write_matrix_csv(stem + ".csv", batch.samples);
  nlohmann::json j;
  j["spec"] = gp_spec_to_json(batch.spec);
  j["seed"] = batch.seed;
  j["count"] = batch.samples.rows();
  j["points"] = nlohmann::json::array();
  for (Index i = 0; i < batch.points.rows(); ++i) {
    std::vector<double> p(batch.points.cols());
    for (Index d = 0; d < batch.points.cols(); ++d) p[d] = batch.points(i, d);
    j["points"].push_back(p);
  }
  write_text_file(stem + ".json", j.dump(2) + "\n");
}

SampleBatch load_sample_batch(const std::string& stem) {
  const auto j = nlohmann::json::parse(read_text_file(stem + ".json"));
  SampleBatch batch;
  batch.spec = gp_spec_from_json(j.at("spec"));
  batch.seed = j.at("seed").get<std::uint64_t>();
  const auto& pts = j.at("points");
  batch.points.resize(static_cast<Index>(pts.size()), batch.spec.dimension());
  for (Index i = 0; i < batch.points.rows(); ++i) {
    for (Index d = 0; d < batch.points.cols(); ++d) batch.points(i, d) = pts[i][d].get<double>();
  }
  batch.samples = read_matrix_csv(stem + ".csv");
  if (batch.samples.rows() != j.at("count").get<Index>() || batch.samples.cols() != batch.points.rows()) {
    throw std::invalid_argument("sample batch " + stem + ": CSV shape does not match sidecar");
  }
  return batch;
}

}  // namespace scoreinv
