#ifndef FITR_OPTIM_HPP
#define FITR_OPTIM_HPP

#include <algorithm>
#include <cmath>
#include <concepts>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "fitr/core.hpp"

namespace fitr {

/// How a fit chooses its starting parameters. `Default` means zeros for the
/// smooth objectives and the separate-learning minimizer for the ramp objective.
enum class InitialPointRule { Default, Zeros, WarmStart };

struct OptimizerSettings {
  double grad_tol = 1e-6;   // BFGS: stop when |grad|_inf <= grad_tol
  double f_tol = 1e-8;      // Powell: relative decrease over one sweep
  int max_iters = 500;
  int max_line_evals = 100;
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
  double line_tol = 1e-7;   // Brent relative tolerance inside Powell
  InitialPointRule initial_point = InitialPointRule::Default;
  Vector warm_start;

  void validate() const {
    require(grad_tol > 0 && f_tol > 0 && line_tol > 0, "optimizer tolerances must be positive");
    require(max_iters >= 1 && max_line_evals >= 1, "optimizer iteration caps must be >= 1");
    require(wolfe_c1 > 0 && wolfe_c1 < wolfe_c2 && wolfe_c2 < 1, "need 0 < c1 < c2 < 1");
  }
};

enum class SolverStatus { Converged, MaxIterations, LineSearchStalled };

inline std::string to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::Converged: return "converged";
    case SolverStatus::MaxIterations: return "max_iterations";
    case SolverStatus::LineSearchStalled: return "line_search_stalled";
  }
  return "unknown";
}

struct SolverResult {
  Vector x;
  double f = 0.0;
  SolverStatus status = SolverStatus::Converged;
  int iterations = 0;
  long evaluations = 0;
  /// Powell only: objective after each completed sweep, starting with f(x0).
  std::vector<double> sweep_values;
};

/// Raised when the objective returns NaN/inf; carries the iterate.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, Vector iterate) : Error(what), iterate_(std::move(iterate)) {}
  const Vector& iterate() const noexcept { return iterate_; }

 private:
  Vector iterate_;
};

// ---------------------------------------------------------------------------
// Brent line minimization

struct LineMinimum {
  double t = 0.0;
  double value = 0.0;
};

namespace detail {

constexpr double kGolden = 1.618034;
constexpr double kCGold = 0.3819660;

// Brent's parabolic/golden hybrid on the bracket a < b < c (either order of
// a, c accepted) with g(b) = fb no larger than the ends.
template <typename G>
LineMinimum brent(G&& g, double ax, double bx, double cx, double fb, double tol, int max_evals,
                  long& evals) {
  double a = std::min(ax, cx);
  double b = std::max(ax, cx);
  double x = bx, w = bx, v = bx;
  double fx = fb, fw = fb, fv = fb;
  double d = 0.0, e = 0.0;
  constexpr double zeps = 1e-12;
  for (int it = 0; it < max_evals; ++it) {
    const double xm = 0.5 * (a + b);
    const double tol1 = tol * std::abs(x) + zeps;
    const double tol2 = 2.0 * tol1;
    if (std::abs(x - xm) <= tol2 - 0.5 * (b - a)) break;
    if (std::abs(e) > tol1) {
      const double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::abs(q);
      const double etemp = e;
      e = d;
      if (std::abs(p) >= std::abs(0.5 * q * etemp) || p <= q * (a - x) || p >= q * (b - x)) {
        e = (x >= xm) ? a - x : b - x;
        d = kCGold * e;
      } else {
        d = p / q;
        const double u = x + d;
        if (u - a < tol2 || b - u < tol2) d = std::copysign(tol1, xm - x);
      }
    } else {
      e = (x >= xm) ? a - x : b - x;
      d = kCGold * e;
    }
    const double u = std::abs(d) >= tol1 ? x + d : x + std::copysign(tol1, d);
    const double fu = g(u);
    ++evals;
    if (!std::isfinite(fu)) throw Error("line minimization: non-finite objective");
    if (fu <= fx) {
      if (u >= x) a = x; else b = x;
      v = w; fv = fw;
      w = x; fw = fx;
      x = u; fx = fu;
    } else {
      if (u < x) a = u; else b = u;
      if (fu <= fw || w == x) {
        v = w; fv = fw;
        w = u; fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u; fv = fu;
      }
    }
  }
  return {x, fx};
}

// Downhill bracket from t = 0: first trial step 1, golden expansion, at most
// 50 expansions. Returns false (with the best point in b) if the cap is hit.
template <typename G>
bool bracket(G&& g, double f0, double& a, double& b, double& c, double& fa, double& fb, double& fc,
             long& evals) {
  a = 0.0;
  fa = f0;
  b = 1.0;
  fb = g(b);
  ++evals;
  if (fb > fa) {
    std::swap(a, b);
    std::swap(fa, fb);
  }
  c = b + kGolden * (b - a);
  fc = g(c);
  ++evals;
  int expansions = 0;
  while (fc < fb) {
    if (++expansions > 50) return false;
    a = b; fa = fb;
    b = c; fb = fc;
    c = b + kGolden * (b - a);
    fc = g(c);
    ++evals;
  }
  return true;
}

}  // namespace detail

/// Minimizes g over a strict bracket (a, b, c): a < b < c, g(b) < g(a), g(b) < g(c).
inline LineMinimum brent_line_min(const std::function<double(double)>& g, double a, double b,
                                  double c, double tol, int max_evals = 200) {
  if (!(a < b && b < c)) throw Error("brent_line_min: bracket must satisfy a < b < c");
  const double fa = g(a), fb = g(b), fc = g(c);
  if (!(fb < fa && fb < fc)) throw Error("brent_line_min: g(b) must be below g(a) and g(c)");
  long evals = 0;
  return detail::brent(g, a, b, c, fb, tol, max_evals, evals);
}

// ---------------------------------------------------------------------------
// BFGS with strong Wolfe line search

namespace detail {

struct WolfePoint {
  double alpha = 0.0;
  double f = 0.0;
  double dphi = 0.0;
  Vector grad;
};

// Minimizer of the cubic interpolating (a, fa, da) and (b, fb, db), clamped
// into the interior of [a, b]; bisection when the cubic is degenerate.
inline double cubic_step(double a, double fa, double da, double b, double fb, double db) {
  const double lo = std::min(a, b), hi = std::max(a, b);
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - da * db;
  double t = 0.5 * (a + b);
  if (disc >= 0.0) {
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    const double denom = db - da + 2.0 * d2;
    if (denom != 0.0) t = b - (b - a) * (db + d2 - d1) / denom;
  }
  const double margin = 0.1 * (hi - lo);
  if (!std::isfinite(t)) return 0.5 * (a + b);
  return std::clamp(t, lo + margin, hi - margin);
}

template <typename F>
bool wolfe_search(F& f, const Vector& x, double f0, const Vector& g0, const Vector& p,
                  const OptimizerSettings& s, WolfePoint& out, long& evals) {
  const double d0 = g0.dot(p);
  const auto eval = [&](double alpha) {
    WolfePoint w;
    w.alpha = alpha;
    w.grad.resize(x.size());
    const Vector xt = x + alpha * p;
    w.f = f(xt, w.grad);
    ++evals;
    if (!std::isfinite(w.f) || !w.grad.allFinite())
      throw SolverError("bfgs: non-finite objective or gradient", xt);
    w.dphi = w.grad.dot(p);
    return w;
  };
  const auto armijo_fails = [&](const WolfePoint& w) { return w.f > f0 + s.wolfe_c1 * w.alpha * d0; };
  const auto curvature_ok = [&](const WolfePoint& w) { return std::abs(w.dphi) <= -s.wolfe_c2 * d0; };

  WolfePoint best;
  best.f = f0;
  bool improved = false;
  const auto track = [&](const WolfePoint& w) {
    if (w.f < best.f) {
      best = w;
      improved = true;
    }
  };

  const auto zoom = [&](WolfePoint lo, WolfePoint hi, int budget) {
    for (int j = 0; j < budget; ++j) {
      const double a = cubic_step(lo.alpha, lo.f, lo.dphi, hi.alpha, hi.f, hi.dphi);
      if (a == lo.alpha || a == hi.alpha) break;
      WolfePoint w = eval(a);
      track(w);
      if (armijo_fails(w) || w.f >= lo.f) {
        hi = w;
      } else {
        if (curvature_ok(w)) {
          out = w;
          return true;
        }
        if (w.dphi * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
        lo = w;
      }
    }
    return false;
  };

  WolfePoint prev;
  prev.alpha = 0.0;
  prev.f = f0;
  prev.dphi = d0;
  double alpha = 1.0;
  for (int i = 0; i < s.max_line_evals; ++i) {
    WolfePoint w = eval(alpha);
    track(w);
    const int left = s.max_line_evals - i - 1;
    if (armijo_fails(w) || (i > 0 && w.f >= prev.f)) {
      if (zoom(prev, w, left)) return true;
      break;
    }
    if (curvature_ok(w)) {
      out = w;
      return true;
    }
    if (w.dphi >= 0.0) {
      if (zoom(w, prev, left)) return true;
      break;
    }
    prev = w;
    alpha *= 2.0;
  }
  // Wolfe not met inside the budget: settle for any decrease found.
  if (improved) {
    out = best;
    return true;
  }
  return false;
}

}  // namespace detail

/// Objective returning f(x) and writing the gradient into its second argument.
template <typename F>
concept GradientObjective = requires(F f, const Vector& x, Vector& g) {
  { f(x, g) } -> std::convertible_to<double>;
};

/// Quasi-Newton minimization with the standard inverse-Hessian BFGS update,
/// strong Wolfe line search and a curvature guard that skips the update when
/// s'y is not safely positive.
template <GradientObjective F>
SolverResult bfgs_minimize(F&& f, const Vector& x0, const OptimizerSettings& settings = {}) {
  settings.validate();
  const auto m = x0.size();
  SolverResult res;
  res.x = x0;
  Vector g(m);
  res.f = f(res.x, g);
  res.evaluations = 1;
  if (!std::isfinite(res.f) || !g.allFinite())
    throw SolverError("bfgs: non-finite objective or gradient at the start point", res.x);

  Matrix h = Matrix::Identity(m, m);
  bool h_is_identity = true;
  bool first_update = true;
  for (int k = 0; k < settings.max_iters; ++k) {
    if (m == 0 || g.lpNorm<Eigen::Infinity>() <= settings.grad_tol) {
      res.status = SolverStatus::Converged;
      res.iterations = k;
      return res;
    }
    Vector p = -h * g;
    if (g.dot(p) >= 0.0) {
      h.setIdentity();
      h_is_identity = true;
      p = -g;
    }
    detail::WolfePoint step;
    bool ok = detail::wolfe_search(f, res.x, res.f, g, p, settings, step, res.evaluations);
    if (!ok && !h_is_identity) {
      h.setIdentity();
      h_is_identity = true;
      p = -g;
      ok = detail::wolfe_search(f, res.x, res.f, g, p, settings, step, res.evaluations);
    }
    if (!ok) {
      res.status = SolverStatus::LineSearchStalled;
      res.iterations = k;
      return res;
    }
    const Vector s = step.alpha * p;
    const Vector y = step.grad - g;
    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      if (first_update) {
        h *= sy / y.squaredNorm();
        first_update = false;
      }
      const double rho = 1.0 / sy;
      const Vector hy = h * y;
      const double yhy = y.dot(hy);
      // H <- (I - rho s y') H (I - rho y s') + rho s s'
      h += (rho * rho * yhy + rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
      h_is_identity = false;
    }
    res.x += s;
    res.f = step.f;
    g = step.grad;
  }
  res.iterations = settings.max_iters;
  res.status = g.lpNorm<Eigen::Infinity>() <= settings.grad_tol ? SolverStatus::Converged
                                                                 : SolverStatus::MaxIterations;
  return res;
}

// ---------------------------------------------------------------------------
// Powell direction set

/// Objectives that can build a cheap scalar restriction t -> f(x + t*dir).
template <typename F>
concept LineRestrictable = requires(const F& f, const Vector& x) {
  { f.along(x, x)(0.0) } -> std::convertible_to<double>;
};

namespace detail {

template <typename F>
auto restrict_to_line(const F& f, const Vector& x, const Vector& dir) {
  if constexpr (LineRestrictable<F>) {
    return f.along(x, dir);
  } else {
    return [&f, x, dir](double t) -> double { return f(Vector(x + t * dir)); };
  }
}

// Minimizes along `dir` from x (value fx); moves x only on strict decrease.
template <typename F>
double line_minimize(const F& f, Vector& x, double fx, const Vector& dir, const OptimizerSettings& s,
                     long& evals) {
  auto g = restrict_to_line(f, x, dir);
  const double g0 = g(0.0);
  ++evals;
  if (!std::isfinite(g0)) throw SolverError("powell: non-finite objective", x);
  double a, b, c, fa, fb, fc;
  LineMinimum best{0.0, g0};
  if (bracket(g, g0, a, b, c, fa, fb, fc, evals)) {
    best = brent(g, a, b, c, fb, s.line_tol, s.max_line_evals, evals);
  } else {
    best = {b, fb};
  }
  if (!std::isfinite(best.value)) throw SolverError("powell: non-finite objective", x);
  if (best.value < fx && best.t != 0.0) {
    x += best.t * dir;
    return best.value;
  }
  return fx;
}

}  // namespace detail

/// Powell's direction-set method: Brent line minimizations along each stored
/// direction, then replacement of the direction of largest decrease by the
/// sweep displacement when Powell's test allows it.
template <typename F>
  requires std::invocable<const F&, const Vector&>
SolverResult powell_minimize(const F& f, const Vector& x0, const OptimizerSettings& settings = {}) {
  settings.validate();
  const auto m = x0.size();
  SolverResult res;
  res.x = x0;
  res.f = f(res.x);
  res.evaluations = 1;
  if (!std::isfinite(res.f)) throw SolverError("powell: non-finite objective at the start point", res.x);
  res.sweep_values.push_back(res.f);
  if (m == 0) return res;

  Matrix dirs = Matrix::Identity(m, m);
  Vector pt = res.x;
  for (int iter = 1; iter <= settings.max_iters; ++iter) {
    const double fp = res.f;
    Eigen::Index ibig = 0;
    double del = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double before = res.f;
      res.f = detail::line_minimize(f, res.x, res.f, dirs.col(i), settings, res.evaluations);
      if (before - res.f > del) {
        del = before - res.f;
        ibig = i;
      }
    }
    res.iterations = iter;
    if (2.0 * (fp - res.f) <= settings.f_tol * (std::abs(fp) + std::abs(res.f)) + 1e-25) {
      res.sweep_values.push_back(res.f);
      res.status = SolverStatus::Converged;
      return res;
    }
    const Vector ptt = 2.0 * res.x - pt;
    const Vector xit = res.x - pt;
    pt = res.x;
    const double fptt = f(ptt);
    ++res.evaluations;
    if (std::isfinite(fptt) && fptt < fp) {
      const double a = fp - res.f - del;
      const double b = fp - fptt;
      const double t = 2.0 * (fp - 2.0 * res.f + fptt) * a * a - del * b * b;
      if (t < 0.0) {
        res.f = detail::line_minimize(f, res.x, res.f, xit, settings, res.evaluations);
        dirs.col(ibig) = dirs.col(m - 1);
        dirs.col(m - 1) = xit;
      }
    }
    res.sweep_values.push_back(res.f);
  }
  res.status = SolverStatus::MaxIterations;
  return res;
}

}  // namespace fitr

#endif  // FITR_OPTIM_HPP
