#ifndef SCOREINV_SCORES_HPP
#define SCOREINV_SCORES_HPP

// Sample-based proper scoring rules for ensembles of model predictions.
//
// An ensemble is an M x Ns matrix whose columns are the observable vectors of
// the Ns scenarios; an observation is an M-vector. All reductions run in a
// fixed order (ascending column, then row) so results are reproducible
// regardless of how callers schedule work around them.

#include "scoreinv/types.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace scoreinv {

enum class ScoreKind { crps, energy, variogram, hybrid };

std::string to_string(ScoreKind kind);
ScoreKind score_kind_from_string(const std::string& name);

template <typename Scalar>
struct VariogramWeightsT {
  // Symmetric, zero diagonal, nonnegative.
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> w;
  Scalar p = Scalar(2);
};
using VariogramWeights = VariogramWeightsT<double>;

struct HybridCoeffs {
  double alpha = 0.1;
  double beta = 0.9;

  // Strictly positive coefficients keep the combination proper.
  bool proper() const { return alpha > 0 && beta > 0; }
};

struct ScoreSpec {
  ScoreKind kind = ScoreKind::energy;
  VariogramWeights variogram;
  HybridCoeffs hybrid;
};

template <typename Scalar>
struct ScoreGradientT {
  EnsembleT<Scalar> d;  // M x Ns, column i = dS/d(member i)
  bool degenerate = false;
};
using ScoreGradient = ScoreGradientT<double>;

/// Unit weights on every off-diagonal pair.
VariogramWeights constant_variogram_weights(Index m, double p = 2.0);

/// w_ij = 1 / |x_i - x_j| for distinct sites; `sites` is d x M.
VariogramWeights inverse_distance_variogram_weights(const Matrix& sites, double p = 2.0);

namespace detail {

constexpr double kDegenerateNorm = 1e-12;

template <typename DerivedE, typename DerivedO>
void check_dims(const Eigen::MatrixBase<DerivedE>& ens, const Eigen::MatrixBase<DerivedO>& obs) {
  if (ens.cols() < 1 || ens.rows() < 1) throw std::invalid_argument("empty ensemble");
  if (obs.size() != ens.rows()) {
    throw std::invalid_argument("dimension mismatch: ensemble has M=" + std::to_string(ens.rows()) +
                                " but observation has " + std::to_string(obs.size()) + " entries");
  }
}

template <typename Scalar>
void check_weights(const VariogramWeightsT<Scalar>& w, Index m) {
  if (w.w.rows() != m || w.w.cols() != m) {
    throw std::invalid_argument("dimension mismatch: variogram weights must be " + std::to_string(m) + "x" +
                                std::to_string(m));
  }
  if (!(w.p > 0)) throw std::invalid_argument("variogram exponent must be positive");
}

template <typename Scalar>
Scalar vpow(Scalar x, Scalar p) {
  using std::abs;
  using std::pow;
  return p == Scalar(2) ? x * x : pow(abs(x), p);
}

// Second ES term (1/(2 Ns^2)) sum_i sum_j |d_i - d_j|, accumulated over i < j.
template <typename DerivedE>
typename DerivedE::Scalar energy_spread(const Eigen::MatrixBase<DerivedE>& ens) {
  using Scalar = typename DerivedE::Scalar;
  const Index ns = ens.cols();
  Scalar acc(0);
  for (Index i = 0; i < ns; ++i) {
    for (Index j = i + 1; j < ns; ++j) acc += (ens.col(i) - ens.col(j)).norm();
  }
  return acc / (Scalar(ns) * Scalar(ns));
}

template <typename DerivedE, typename DerivedO>
typename DerivedE::Scalar energy_misfit(const Eigen::MatrixBase<DerivedE>& ens,
                                        const Eigen::MatrixBase<DerivedO>& obs) {
  using Scalar = typename DerivedE::Scalar;
  Scalar acc(0);
  for (Index i = 0; i < ens.cols(); ++i) acc += (ens.col(i) - obs).norm();
  return acc / Scalar(ens.cols());
}

// Unordered pairs (i < j) with nonzero symmetric weight w_ij + w_ji; the
// diagonal never contributes since |d(i) - d(i)|^p = 0.
template <typename Scalar>
struct VariogramPairs {
  std::vector<Index> i;
  std::vector<Index> j;
  std::vector<Scalar> w;
};

template <typename Scalar>
VariogramPairs<Scalar> variogram_pairs(const VariogramWeightsT<Scalar>& w) {
  VariogramPairs<Scalar> out;
  const Index m = w.w.rows();
  for (Index a = 0; a < m; ++a) {
    for (Index b = a + 1; b < m; ++b) {
      const Scalar ws = w.w(a, b) + w.w(b, a);
      if (ws == Scalar(0)) continue;
      out.i.push_back(a);
      out.j.push_back(b);
      out.w.push_back(ws);
    }
  }
  return out;
}

// Mean ensemble variogram (1/Ns) sum_k |d_k(i) - d_k(j)|^p per pair.
template <typename DerivedE, typename Scalar>
std::vector<Scalar> ensemble_variogram(const Eigen::MatrixBase<DerivedE>& ens, const VariogramPairs<Scalar>& pairs,
                                       Scalar p) {
  const Index ns = ens.cols();
  std::vector<Scalar> v(pairs.i.size(), Scalar(0));
  for (Index k = 0; k < ns; ++k) {
    for (std::size_t q = 0; q < v.size(); ++q) v[q] += vpow<Scalar>(ens(pairs.i[q], k) - ens(pairs.j[q], k), p);
  }
  for (auto& x : v) x /= Scalar(ns);
  return v;
}

template <typename DerivedO, typename Scalar>
Scalar variogram_from_ensemble_variogram(const Eigen::MatrixBase<DerivedO>& obs, const std::vector<Scalar>& v,
                                         const VariogramPairs<Scalar>& pairs, Scalar p) {
  Scalar acc(0);
  for (std::size_t q = 0; q < v.size(); ++q) {
    const Scalar c = vpow<Scalar>(obs(pairs.i[q]) - obs(pairs.j[q]), p) - v[q];
    acc += pairs.w[q] * c * c;
  }
  return acc;
}

}  // namespace detail

/// Empirical CRPS of a scalar sample set against an observation.
template <typename Derived>
typename Derived::Scalar empirical_crps(const Eigen::MatrixBase<Derived>& samples, typename Derived::Scalar y) {
  using Scalar = typename Derived::Scalar;
  const Index ns = samples.size();
  if (ns < 1) throw std::invalid_argument("empty ensemble");
  using std::abs;
  Scalar first(0);
  for (Index i = 0; i < ns; ++i) first += abs(samples(i) - y);
  Scalar second(0);
  for (Index i = 0; i < ns; ++i) {
    for (Index j = i + 1; j < ns; ++j) second += abs(samples(i) - samples(j));
  }
  return first / Scalar(ns) - second / (Scalar(ns) * Scalar(ns));
}

template <typename DerivedE, typename DerivedO>
typename DerivedE::Scalar energy_score(const Eigen::MatrixBase<DerivedE>& ens, const Eigen::MatrixBase<DerivedO>& obs) {
  detail::check_dims(ens, obs);
  return detail::energy_misfit(ens, obs) - detail::energy_spread(ens);
}

/// Exact derivative of energy_score with respect to every ensemble entry.
/// Coincident points (distance below 1e-12) contribute the zero subgradient and
/// set `degenerate`.
template <typename DerivedE, typename DerivedO>
ScoreGradientT<typename DerivedE::Scalar> energy_score_grad(const Eigen::MatrixBase<DerivedE>& ens,
                                                            const Eigen::MatrixBase<DerivedO>& obs) {
  using Scalar = typename DerivedE::Scalar;
  detail::check_dims(ens, obs);
  const Index m = ens.rows();
  const Index ns = ens.cols();
  ScoreGradientT<Scalar> g;
  g.d = EnsembleT<Scalar>::Zero(m, ns);
  const Scalar inv_ns = Scalar(1) / Scalar(ns);
  const Scalar inv_ns2 = inv_ns * inv_ns;
  for (Index i = 0; i < ns; ++i) {
    const auto diff = (ens.col(i) - obs).eval();
    const Scalar r = diff.norm();
    if (r > Scalar(detail::kDegenerateNorm)) {
      g.d.col(i) += inv_ns * diff / r;
    } else {
      g.degenerate = true;
    }
  }
  for (Index i = 0; i < ns; ++i) {
    for (Index j = i + 1; j < ns; ++j) {
      const auto diff = (ens.col(i) - ens.col(j)).eval();
      const Scalar r = diff.norm();
      if (r > Scalar(detail::kDegenerateNorm)) {
        const auto u = (inv_ns2 * diff / r).eval();
        g.d.col(i) -= u;
        g.d.col(j) += u;
      } else {
        g.degenerate = true;
      }
    }
  }
  return g;
}

template <typename DerivedE, typename DerivedO, typename Scalar>
Scalar variogram_score(const Eigen::MatrixBase<DerivedE>& ens, const Eigen::MatrixBase<DerivedO>& obs,
                       const VariogramWeightsT<Scalar>& w) {
  detail::check_dims(ens, obs);
  detail::check_weights(w, ens.rows());
  const auto pairs = detail::variogram_pairs(w);
  return detail::variogram_from_ensemble_variogram(obs, detail::ensemble_variogram(ens, pairs, w.p), pairs, w.p);
}

/// Exact derivative of variogram_score for p = 2. Both orderings of each pair
/// are counted, so dS/dd_k(h) = -(4/Ns) sum_l (w_hl + w_lh) C_hl (d_k(h) - d_k(l))
/// with C_hl the observed minus mean ensemble variogram.
template <typename DerivedE, typename DerivedO, typename Scalar>
ScoreGradientT<Scalar> variogram_score_grad(const Eigen::MatrixBase<DerivedE>& ens,
                                            const Eigen::MatrixBase<DerivedO>& obs,
                                            const VariogramWeightsT<Scalar>& w) {
  detail::check_dims(ens, obs);
  detail::check_weights(w, ens.rows());
  if (w.p != Scalar(2)) throw std::invalid_argument("gradient implemented for p=2 only");
  const Index m = ens.rows();
  const Index ns = ens.cols();
  const auto pairs = detail::variogram_pairs(w);
  const auto v = detail::ensemble_variogram(ens, pairs, w.p);
  ScoreGradientT<Scalar> g;
  g.d = EnsembleT<Scalar>::Zero(m, ns);
  const Scalar scale = Scalar(-4) / Scalar(ns);
  for (std::size_t q = 0; q < v.size(); ++q) {
    const Index h = pairs.i[q];
    const Index l = pairs.j[q];
    const Scalar dobs = obs(h) - obs(l);
    const Scalar wc = scale * pairs.w[q] * (dobs * dobs - v[q]);
    for (Index k = 0; k < ns; ++k) {
      const Scalar t = wc * (ens(h, k) - ens(l, k));
      g.d(h, k) += t;
      g.d(l, k) -= t;
    }
  }
  return g;
}

template <typename DerivedE, typename DerivedO, typename Scalar>
Scalar hybrid_score(const Eigen::MatrixBase<DerivedE>& ens, const Eigen::MatrixBase<DerivedO>& obs,
                    const VariogramWeightsT<Scalar>& w, const HybridCoeffs& c) {
  if (c.alpha < 0 || c.beta < 0) throw std::invalid_argument("hybrid coefficients must be nonnegative");
  return Scalar(c.alpha) * energy_score(ens, obs) + Scalar(c.beta) * variogram_score(ens, obs, w);
}

template <typename DerivedE, typename DerivedO, typename Scalar>
ScoreGradientT<Scalar> hybrid_score_grad(const Eigen::MatrixBase<DerivedE>& ens,
                                         const Eigen::MatrixBase<DerivedO>& obs,
                                         const VariogramWeightsT<Scalar>& w, const HybridCoeffs& c) {
  if (c.alpha < 0 || c.beta < 0) throw std::invalid_argument("hybrid coefficients must be nonnegative");
  auto ges = energy_score_grad(ens, obs);
  const auto gvs = variogram_score_grad(ens, obs, w);
  ges.d = Scalar(c.alpha) * ges.d + Scalar(c.beta) * gvs.d;
  return ges;
}

/// Instantaneous score selected by `spec.kind`. CRPS requires M = 1.
template <typename DerivedE, typename DerivedO>
double score(const ScoreSpec& spec, const Eigen::MatrixBase<DerivedE>& ens, const Eigen::MatrixBase<DerivedO>& obs) {
  switch (spec.kind) {
    case ScoreKind::crps:
      detail::check_dims(ens, obs);
      if (ens.rows() != 1) throw std::invalid_argument("CRPS requires a scalar observable (M=1)");
      return empirical_crps(ens.row(0).transpose(), obs(0));
    case ScoreKind::energy:
      return energy_score(ens, obs);
    case ScoreKind::variogram:
      return variogram_score(ens, obs, spec.variogram);
    case ScoreKind::hybrid:
      return hybrid_score(ens, obs, spec.variogram, spec.hybrid);
  }
  throw std::invalid_argument("unknown score kind");
}

template <typename DerivedE, typename DerivedO>
ScoreGradient score_grad(const ScoreSpec& spec, const Eigen::MatrixBase<DerivedE>& ens,
                         const Eigen::MatrixBase<DerivedO>& obs) {
  switch (spec.kind) {
    case ScoreKind::crps:
      if (ens.rows() != 1) throw std::invalid_argument("CRPS requires a scalar observable (M=1)");
      return energy_score_grad(ens, obs);
    case ScoreKind::energy:
      return energy_score_grad(ens, obs);
    case ScoreKind::variogram:
      return variogram_score_grad(ens, obs, spec.variogram);
    case ScoreKind::hybrid:
      return hybrid_score_grad(ens, obs, spec.variogram, spec.hybrid);
  }
  throw std::invalid_argument("unknown score kind");
}

/// Instantaneous score of the ensemble against every row of obs_batch (n x M);
/// ensemble-only terms are computed once.
template <typename DerivedE, typename DerivedB>
Vector batch_scores(const ScoreSpec& spec, const Eigen::MatrixBase<DerivedE>& ens,
                    const Eigen::MatrixBase<DerivedB>& obs_batch) {
  const Index n = obs_batch.rows();
  if (n < 1) throw std::invalid_argument("mean score needs at least one observation batch");
  detail::check_dims(ens, obs_batch.row(0).transpose());
  Vector out(n);
  if (spec.kind == ScoreKind::crps) {
    for (Index b = 0; b < n; ++b) out(b) = score(spec, ens, obs_batch.row(b).transpose());
    return out;
  }
  const bool use_es = spec.kind == ScoreKind::energy || spec.kind == ScoreKind::hybrid;
  const bool use_vs = spec.kind == ScoreKind::variogram || spec.kind == ScoreKind::hybrid;
  double spread = 0;
  detail::VariogramPairs<double> pairs;
  std::vector<double> v;
  if (use_es) spread = detail::energy_spread(ens);
  if (use_vs) {
    detail::check_weights(spec.variogram, ens.rows());
    pairs = detail::variogram_pairs(spec.variogram);
    v = detail::ensemble_variogram(ens, pairs, spec.variogram.p);
  }
  const double a = spec.kind == ScoreKind::hybrid ? spec.hybrid.alpha : 1.0;
  const double b = spec.kind == ScoreKind::hybrid ? spec.hybrid.beta : 1.0;
  for (Index r = 0; r < n; ++r) {
    const Vector obs = obs_batch.row(r).transpose();
    double s = 0;
    if (use_es) s += a * (detail::energy_misfit(ens, obs) - spread);
    if (use_vs) s += b * detail::variogram_from_ensemble_variogram(obs, v, pairs, spec.variogram.p);
    out(r) = s;
  }
  return out;
}

/// (1/n) sum of batch_scores, accumulated in row order.
template <typename DerivedE, typename DerivedB>
double mean_score(const ScoreSpec& spec, const Eigen::MatrixBase<DerivedE>& ens,
                  const Eigen::MatrixBase<DerivedB>& obs_batch) {
  const Vector s = batch_scores(spec, ens, obs_batch);
  double acc = 0;
  for (Index r = 0; r < s.size(); ++r) acc += s(r);
  return acc / double(s.size());
}

}  // namespace scoreinv

#endif  // SCOREINV_SCORES_HPP
