#ifndef SCOREINV_VERIFY_HPP
#define SCOREINV_VERIFY_HPP

#include "scoreinv/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace scoreinv {

double rmse(const Vector& a, const Vector& b);

struct SsimConstants {
  double c1 = 0;
  double c2 = 0;
  double c3 = 0;

  /// c1 = (0.01 L)^2, c2 = (0.03 L)^2, c3 = c2 / 2 with L the range of the
  /// concatenated pair.
  static SsimConstants from_range(const Vector& a, const Vector& b);
};

struct SsimReport {
  double luminance = 0;
  double contrast = 0;
  double structure = 0;
  double ssim = 0;
};

/// Global SSIM from whole-vector sample statistics (unbiased variances and
/// covariance). Default constants come from SsimConstants::from_range.
SsimReport ssim(const Vector& a, const Vector& b, std::optional<SsimConstants> constants = std::nullopt);

struct RankHistogram {
  std::vector<long> counts;  // Ns + 1 bins
  std::vector<double> ci_low;
  std::vector<double> ci_high;
  long total = 0;

  /// Pearson chi-square statistic against the uniform distribution.
  double chi_square() const;
};

/// Rank of every observed component among the matching ensemble row. Ties are
/// broken uniformly at random from stream (seed, batch index). Per-bin 95%
/// intervals come from Binomial(total, 1 / (Ns + 1)).
RankHistogram rank_histogram(const std::vector<Ensemble>& ensembles, const std::vector<Vector>& observations,
                             std::uint64_t seed = 0);

/// Quantile of Binomial(n, p): smallest k with P(X <= k) >= q.
long binomial_quantile(long n, double p, double q);

/// Quantile of the chi-square distribution.
double chi_square_quantile(double dof, double q);

struct MetricsRow {
  std::string model;
  long samples = 0;
  SsimReport ssim;
  double rmse = 0;
};

/// Columns: model, samples, luminance, contrast, structure, ssim, rmse.
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

}  // namespace scoreinv

#endif  // SCOREINV_VERIFY_HPP
