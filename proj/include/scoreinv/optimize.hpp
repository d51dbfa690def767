#ifndef SCOREINV_OPTIMIZE_HPP
#define SCOREINV_OPTIMIZE_HPP

#include "scoreinv/types.hpp"

#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace scoreinv {

using ScalarFunction = std::function<double(const Vector&)>;
using ValueAndGradient = std::function<std::pair<double, Vector>(const Vector&)>;

struct LbfgsConfig {
  int memory = 10;
  int max_iters = 300;
  double grad_tol = 1e-6;      // relative to the initial gradient norm
  double abs_grad_tol = 0.0;   // absolute floor; whichever is larger applies
  double c1 = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 40;
  // Diagonal weights of the gradient norm (e.g. inverse lumped mass); empty
  // selects the Euclidean norm.
  Vector norm_weights;

  void validate() const;
};

enum class TerminationStatus { converged, max_iterations, line_search_failure };

std::string to_string(TerminationStatus status);

struct IterRecord {
  int iter = 0;
  double objective = 0;
  double grad_norm = 0;
  double step = 0;
  int backtracks = 0;
  bool reset = false;  // direction fell back to steepest descent
};

struct IterTrace {
  std::vector<IterRecord> records;
  TerminationStatus status = TerminationStatus::max_iterations;
  int evaluations = 0;
  int memory_used = 0;  // final memory after any halving
};

struct LbfgsResult {
  Vector x;
  double value = 0;
  Vector gradient;
  IterTrace trace;
};

struct CurvaturePair {
  Vector s;
  Vector y;
  double rho;  // 1 / (s^T y)
};

/// H g for the limited-memory inverse Hessian built from `pairs` (oldest
/// first) with initial matrix gamma * I.
Vector two_loop_direction(const Vector& g, const std::deque<CurvaturePair>& pairs, double gamma);

/// Minimize f by limited-memory BFGS with Armijo backtracking from the unit step.
/// Trial points with a non-finite objective are rejected by the line search; a
/// non-finite value or gradient at the start or at an accepted point throws.
LbfgsResult lbfgs_minimize(const ValueAndGradient& f_and_g, const Vector& x0, const LbfgsConfig& cfg = {});

void write_trace_csv(const std::string& path, const IterTrace& trace);

enum class FdScheme { central, forward };

/// Per-coordinate finite differences with step rel_step * (1 + |x_i|).
Vector fd_gradient(const ScalarFunction& f, const Vector& x, double rel_step = 1e-6,
                   FdScheme scheme = FdScheme::central);

struct ScalarSearchConfig {
  int max_iters = 50;
  double rel_step = 1e-3;  // finite-difference step factor
  FdScheme scheme = FdScheme::central;
  double x_tol = 1e-8;
  double grad_tol = 1e-10;
  double c1 = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 30;
};

struct ScalarEval {
  int index = 0;
  double x = 0;
  double value = 0;
  bool accepted = false;  // an accepted quasi-Newton iterate
};

struct ScalarSearchResult {
  double x = 0;
  double value = 0;
  std::vector<ScalarEval> trace;
  int iterations = 0;
};

/// Projected quasi-Newton (secant) search for a minimizer of f on [lo, hi]
/// with finite-difference derivatives; starts from x0 (clamped) and returns
/// the best evaluated point inside the bounds.
ScalarSearchResult bounded_scalar_minimize(const std::function<double(double)>& f, double lo, double hi, double x0,
                                           const ScalarSearchConfig& cfg = {});

}  // namespace scoreinv

#endif  // SCOREINV_OPTIMIZE_HPP
