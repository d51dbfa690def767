#include "scoreinv/scores.hpp"

namespace scoreinv {

std::string to_string(ScoreKind kind) {
  switch (kind) {
    case ScoreKind::crps: return "crps";
    case ScoreKind::energy: return "es";
    case ScoreKind::variogram: return "vs";
    case ScoreKind::hybrid: return "hs";
  }
  return "unknown";
}

ScoreKind score_kind_from_string(const std::string& name) {
  if (name == "crps") return ScoreKind::crps;
  if (name == "es" || name == "energy") return ScoreKind::energy;
  if (name == "vs" || name == "variogram") return ScoreKind::variogram;
  if (name == "hs" || name == "hybrid") return ScoreKind::hybrid;
  throw std::invalid_argument("unknown score kind '" + name + "'");
}

VariogramWeights constant_variogram_weights(Index m, double p) {
  VariogramWeights w;
  w.w = Matrix::Ones(m, m);
  w.w.diagonal().setZero();
  w.p = p;
  return w;
}

VariogramWeights inverse_distance_variogram_weights(const Matrix& sites, double p) {
  const Index m = sites.cols();
  VariogramWeights w;
  w.w = Matrix::Zero(m, m);
  w.p = p;
  for (Index j = 0; j < m; ++j) {
    for (Index i = j + 1; i < m; ++i) {
      const double r = (sites.col(i) - sites.col(j)).norm();
      if (r <= 0) throw std::invalid_argument("coincident observation sites " + std::to_string(i) + ", " + std::to_string(j));
      w.w(i, j) = w.w(j, i) = 1.0 / r;
    }
  }
  return w;
}

}  // namespace scoreinv
