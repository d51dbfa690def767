#include "scoreinv/optimize.hpp"

#include "scoreinv/io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace scoreinv {

void LbfgsConfig::validate() const {
  if (memory < 1) throw std::invalid_argument("L-BFGS memory must be positive");
  if (max_iters < 0) throw std::invalid_argument("L-BFGS max_iters must be nonnegative");
  if (!(c1 > 0 && c1 < 1)) throw std::invalid_argument("Armijo constant must lie in (0, 1)");
  if (!(backtrack > 0 && backtrack < 1)) throw std::invalid_argument("backtrack factor must lie in (0, 1)");
  if (max_backtracks < 1) throw std::invalid_argument("max_backtracks must be positive");
  if (grad_tol < 0 || abs_grad_tol < 0) throw std::invalid_argument("gradient tolerances must be nonnegative");
}

std::string to_string(TerminationStatus status) {
  switch (status) {
    case TerminationStatus::converged: return "converged";
    case TerminationStatus::max_iterations: return "max_iterations";
    case TerminationStatus::line_search_failure: return "line_search_failure";
  }
  return "unknown";
}

Vector two_loop_direction(const Vector& g, const std::deque<CurvaturePair>& pairs, double gamma) {
  Vector q = g;
  std::vector<double> alpha(pairs.size());
  for (std::size_t k = pairs.size(); k-- > 0;) {
    alpha[k] = pairs[k].rho * pairs[k].s.dot(q);
    q -= alpha[k] * pairs[k].y;
  }
  Vector r = gamma * q;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const double beta = pairs[k].rho * pairs[k].y.dot(r);
    r += (alpha[k] - beta) * pairs[k].s;
  }
  return r;
}

namespace {

double weighted_norm(const Vector& g, const Vector& w) {
  if (w.size() == 0) return g.norm();
  return std::sqrt(g.cwiseAbs2().dot(w));
}

void require_finite(double f, const Vector& g, const char* where) {
  if (!std::isfinite(f)) throw NumericalError(std::string("non-finite objective at ") + where);
  if (!g.allFinite()) throw NumericalError(std::string("non-finite gradient at ") + where);
}

}  // namespace

LbfgsResult lbfgs_minimize(const ValueAndGradient& f_and_g, const Vector& x0, const LbfgsConfig& cfg) {
  cfg.validate();
  if (cfg.norm_weights.size() != 0 && cfg.norm_weights.size() != x0.size()) {
    throw std::invalid_argument("norm weights do not match the problem dimension");
  }
  LbfgsResult out;
  out.x = x0;
  auto [f, g] = f_and_g(out.x);
  out.trace.evaluations = 1;
  require_finite(f, g, "the initial point");
  const double g0 = weighted_norm(g, cfg.norm_weights);
  const double tol = std::max(cfg.abs_grad_tol, cfg.grad_tol * g0);
  out.trace.records.push_back({0, f, g0, 0.0, 0, false});

  std::deque<CurvaturePair> pairs;
  int memory = cfg.memory;
  bool halved = false;
  out.trace.status = TerminationStatus::max_iterations;

  // At the rounding floor the Armijo test accepts steps that leave f
  // unchanged; a run of such steps ends the solve as a line-search failure.
  constexpr int kFlatLimit = 5;
  int flat = 0;

  int iter = 0;
  while (true) {
    const double gnorm = weighted_norm(g, cfg.norm_weights);
    if (gnorm <= tol) {
      out.trace.status = TerminationStatus::converged;
      break;
    }
    if (iter >= cfg.max_iters) break;

    bool reset = false;
    Vector d;
    if (pairs.empty()) {
      d = -g / std::max(1.0, g.norm());
    } else {
      const auto& last = pairs.back();
      const double gamma = last.s.dot(last.y) / last.y.squaredNorm();
      d = -two_loop_direction(g, pairs, gamma);
    }
    double slope = g.dot(d);
    if (!(slope < 0)) {
      reset = true;
      pairs.clear();
      d = -g / std::max(1.0, g.norm());
      slope = g.dot(d);
    }

    double step = 1.0;
    int backtracks = 0;
    bool accepted = false;
    double f_new = 0;
    Vector g_new;
    Vector x_new;
    for (; backtracks <= cfg.max_backtracks; ++backtracks) {
      x_new = out.x + step * d;
      auto [ft, gt] = f_and_g(x_new);
      ++out.trace.evaluations;
      if (std::isfinite(ft) && ft <= f + cfg.c1 * step * slope) {
        f_new = ft;
        g_new = std::move(gt);
        accepted = true;
        break;
      }
      step *= cfg.backtrack;
    }
    if (!accepted) {
      if (!halved && !pairs.empty()) {
        // Retry once with half the memory before giving up.
        halved = true;
        memory = std::max(1, memory / 2);
        while (static_cast<int>(pairs.size()) > memory) pairs.pop_front();
        continue;
      }
      out.trace.status = TerminationStatus::line_search_failure;
      break;
    }
    require_finite(f_new, g_new, "an accepted iterate");

    CurvaturePair p{x_new - out.x, g_new - g, 0.0};
    const double sy = p.s.dot(p.y);
    if (sy > 1e-12 * p.s.norm() * p.y.norm()) {
      p.rho = 1.0 / sy;
      pairs.push_back(std::move(p));
      while (static_cast<int>(pairs.size()) > memory) pairs.pop_front();
    }
    flat = f_new < f ? 0 : flat + 1;
    out.x = std::move(x_new);
    f = f_new;
    g = std::move(g_new);
    ++iter;
    out.trace.records.push_back({iter, f, weighted_norm(g, cfg.norm_weights), step, backtracks, reset});
    if (flat >= kFlatLimit && weighted_norm(g, cfg.norm_weights) > tol) {
      out.trace.status = TerminationStatus::line_search_failure;
      break;
    }
  }
  out.value = f;
  out.gradient = g;
  out.trace.memory_used = memory;
  return out;
}

void write_trace_csv(const std::string& path, const IterTrace& trace) {
  CsvWriter w(path, {"iter", "objective", "gradient_norm", "step_length", "backtracks", "reset"});
  for (const auto& r : trace.records) {
    w.row({std::to_string(r.iter), format_double(r.objective), format_double(r.grad_norm), format_double(r.step),
           std::to_string(r.backtracks), r.reset ? "1" : "0"});
  }
}

Vector fd_gradient(const ScalarFunction& f, const Vector& x, double rel_step, FdScheme scheme) {
  if (!(rel_step > 0)) throw std::invalid_argument("finite-difference step must be positive");
  Vector g(x.size());
  Vector xp = x;
  const double f0 = scheme == FdScheme::forward ? f(x) : 0.0;
  if (scheme == FdScheme::forward && !std::isfinite(f0)) throw NumericalError("non-finite evaluation at the base point");
  for (Index i = 0; i < x.size(); ++i) {
    const double h = rel_step * (1.0 + std::abs(x(i)));
    xp(i) = x(i) + h;
    const double fp = f(xp);
    if (!std::isfinite(fp)) throw NumericalError("non-finite evaluation at coordinate " + std::to_string(i));
    if (scheme == FdScheme::central) {
      xp(i) = x(i) - h;
      const double fm = f(xp);
      if (!std::isfinite(fm)) throw NumericalError("non-finite evaluation at coordinate " + std::to_string(i));
      g(i) = (fp - fm) / (2 * h);
    } else {
      g(i) = (fp - f0) / h;
    }
    xp(i) = x(i);
  }
  return g;
}

ScalarSearchResult bounded_scalar_minimize(const std::function<double(double)>& f, double lo, double hi, double x0,
                                           const ScalarSearchConfig& cfg) {
  if (!(std::isfinite(lo) && std::isfinite(hi))) throw std::invalid_argument("bounds must be finite");
  if (!(lo < hi)) throw std::invalid_argument("infeasible bounds: lo must be below hi");
  ScalarSearchResult out;
  out.value = std::numeric_limits<double>::infinity();
  auto clamp = [&](double x) { return std::min(hi, std::max(lo, x)); };
  auto eval = [&](double x, bool accepted) {
    const double v = f(x);
    out.trace.push_back({static_cast<int>(out.trace.size()), x, v, accepted});
    if (std::isfinite(v) && v < out.value && x >= lo && x <= hi) {
      out.value = v;
      out.x = x;
    }
    return v;
  };
  // One-sided differences near a bound stay inside [lo, hi].
  auto derivative = [&](double x, double fx) {
    const double h = cfg.rel_step * (1.0 + std::abs(x));
    if (cfg.scheme == FdScheme::central && x - h >= lo && x + h <= hi) {
      return (eval(x + h, false) - eval(x - h, false)) / (2 * h);
    }
    if (x + h <= hi) return (eval(x + h, false) - fx) / h;
    return (fx - eval(x - h, false)) / h;
  };

  double x = clamp(x0);
  double fx = eval(x, true);
  if (!std::isfinite(fx)) throw NumericalError("non-finite objective at the starting point");
  double g = derivative(x, fx);
  // Initial inverse curvature: first trial moves a tenth of the interval.
  double h_inv = std::abs(g) > 0 ? 0.1 * (hi - lo) / std::abs(g) : 1.0;

  for (int it = 0; it < cfg.max_iters; ++it) {
    out.iterations = it;
    if (!std::isfinite(g) || std::abs(g) <= cfg.grad_tol) break;
    if ((x <= lo && g > 0) || (x >= hi && g < 0)) break;  // active bound
    const double d = -h_inv * g;
    double step = 1.0;
    bool accepted = false;
    double xt = x;
    double ft = fx;
    for (int b = 0; b <= cfg.max_backtracks; ++b) {
      xt = clamp(x + step * d);
      if (xt == x) break;
      ft = eval(xt, false);
      if (std::isfinite(ft) && ft <= fx + cfg.c1 * g * (xt - x)) {
        accepted = true;
        break;
      }
      step *= cfg.backtrack;
    }
    if (!accepted) break;
    out.trace.back().accepted = true;
    const double gt = derivative(xt, ft);
    const double s = xt - x;
    const double y = gt - g;
    if (s * y > 0) {
      h_inv = s / y;
    } else {
      h_inv *= 2.0;  // negative curvature estimate: widen the next step
    }
    x = xt;
    fx = ft;
    g = gt;
    if (std::abs(s) <= cfg.x_tol * (1.0 + std::abs(x))) break;
  }
  if (!std::isfinite(out.value)) throw NumericalError("all evaluations were non-finite");
  return out;
}

}  // namespace scoreinv
