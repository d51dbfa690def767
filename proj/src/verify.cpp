#include "scoreinv/verify.hpp"

#include "scoreinv/io.hpp"
#include "scoreinv/stochastic.hpp"

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>

namespace scoreinv {

double rmse(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("rmse: length mismatch");
  if (a.size() == 0) throw std::invalid_argument("rmse: empty input");
  return std::sqrt((a - b).squaredNorm() / double(a.size()));
}

SsimConstants SsimConstants::from_range(const Vector& a, const Vector& b) {
  const double hi = std::max(a.maxCoeff(), b.maxCoeff());
  const double lo = std::min(a.minCoeff(), b.minCoeff());
  const double range = hi - lo;
  SsimConstants c;
  c.c1 = (0.01 * range) * (0.01 * range);
  c.c2 = (0.03 * range) * (0.03 * range);
  c.c3 = c.c2 / 2;
  return c;
}

SsimReport ssim(const Vector& a, const Vector& b, std::optional<SsimConstants> constants) {
  if (a.size() != b.size()) throw std::invalid_argument("ssim: length mismatch");
  if (a.size() < 2) throw std::invalid_argument("ssim: need at least two entries");
  const SsimConstants c = constants ? *constants : SsimConstants::from_range(a, b);
  const double n = double(a.size());
  const double mu_a = a.mean();
  const double mu_b = b.mean();
  const Vector da = a.array() - mu_a;
  const Vector db = b.array() - mu_b;
  const double var_a = da.squaredNorm() / (n - 1);
  const double var_b = db.squaredNorm() / (n - 1);
  const double cov = da.dot(db) / (n - 1);
  const double sa = std::sqrt(var_a);
  const double sb = std::sqrt(var_b);
  const double lum_den = mu_a * mu_a + mu_b * mu_b + c.c1;
  const double con_den = var_a + var_b + c.c2;
  const double str_den = sa * sb + c.c3;
  if (lum_den == 0 || con_den == 0 || str_den == 0) throw std::invalid_argument("degenerate SSIM");
  SsimReport r;
  r.luminance = (2 * mu_a * mu_b + c.c1) / lum_den;
  r.contrast = (2 * sa * sb + c.c2) / con_den;
  r.structure = (cov + c.c3) / str_den;
  r.ssim = r.luminance * r.contrast * r.structure;
  return r;
}

double RankHistogram::chi_square() const {
  if (total == 0) return 0;
  const double expected = double(total) / double(counts.size());
  double acc = 0;
  for (long c : counts) acc += (c - expected) * (c - expected) / expected;
  return acc;
}

long binomial_quantile(long n, double p, double q) {
  using namespace boost::math::policies;
  using Policy = policy<discrete_quantile<integer_round_up>>;
  return static_cast<long>(boost::math::quantile(boost::math::binomial_distribution<double, Policy>(double(n), p), q));
}

double chi_square_quantile(double dof, double q) {
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(dof), q);
}

RankHistogram rank_histogram(const std::vector<Ensemble>& ensembles, const std::vector<Vector>& observations,
                             std::uint64_t seed) {
  if (ensembles.empty()) throw std::invalid_argument("rank histogram needs at least one ensemble");
  if (ensembles.size() != observations.size()) throw std::invalid_argument("ensemble/observation count mismatch");
  const Index ns = ensembles.front().cols();
  RankHistogram h;
  h.counts.assign(static_cast<std::size_t>(ns + 1), 0);
  for (std::size_t b = 0; b < ensembles.size(); ++b) {
    const Ensemble& ens = ensembles[b];
    const Vector& obs = observations[b];
    if (ens.cols() != ns) {
      throw std::invalid_argument("ensemble size mismatch: batch " + std::to_string(b) + " has " +
                                  std::to_string(ens.cols()) + " members, expected " + std::to_string(ns));
    }
    if (obs.size() != ens.rows()) throw std::invalid_argument("observation length mismatch in batch " + std::to_string(b));
    auto gen = random_stream(seed, b);
    for (Index r = 0; r < ens.rows(); ++r) {
      long below = 0;
      long ties = 0;
      for (Index k = 0; k < ns; ++k) {
        if (ens(r, k) < obs(r)) ++below;
        else if (ens(r, k) == obs(r)) ++ties;
      }
      long rank = below;
      if (ties > 0) rank += std::uniform_int_distribution<long>(0, ties)(gen);
      ++h.counts[static_cast<std::size_t>(rank)];
      ++h.total;
    }
  }
  const double p = 1.0 / double(ns + 1);
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    h.ci_low.push_back(double(binomial_quantile(h.total, p, 0.025)));
    h.ci_high.push_back(double(binomial_quantile(h.total, p, 0.975)));
  }
  return h;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  CsvWriter w(path, {"model", "samples", "luminance", "contrast", "structure", "ssim", "rmse"});
  for (const auto& r : rows) {
    w.row({r.model, std::to_string(r.samples), format_double(r.ssim.luminance), format_double(r.ssim.contrast),
           format_double(r.ssim.structure), format_double(r.ssim.ssim), format_double(r.rmse)});
  }
}

}  // namespace scoreinv
