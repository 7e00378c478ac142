#pragma once

// Verification oracles: independent brute-force routes used by the fdcheck
// command and by the test suites. Everything here deliberately avoids the
// closed-form code paths it is meant to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "grid.hpp"
#include "sparsity.hpp"

namespace stsparse::verify {

/// An exact first-order point for G = delta_box + mu*j: a base point with
/// mixed regions (positive, negative, zero, at both bounds), a matching
/// subgradient lambda, and gradF := -(mu*lambda + n) with n in N(u), so that
/// 0 = gradF + mu*lambda + n holds cell by cell in exact arithmetic.
struct FirstOrderPoint {
  GridFunction u;
  GridFunction lambda;
  GridFunction gradF;
  Penalty penalty;
};

/// `bound_slack` is the normal-cone magnitude on part of the cells at the
/// bounds; it creates strict-complementarity cells that critical directions
/// must avoid. The first row/cell always carries slack.
inline FirstOrderPoint make_first_order_point(SparsityKind kind, const GridSpec& g,
                                              std::uint64_t seed, double mu = 0.7,
                                              Box box = {-2.0, 2.0}, double bound_slack = 0.4) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  FirstOrderPoint out;
  out.penalty = {kind, mu, box};
  out.u = GridFunction::zeros(g);
  const int nt = g.time_cells;

  auto draw_state = [&](double r) {
    if (r < 0.25) return 0;   // zero
    if (r < 0.45) return 1;   // positive interior
    if (r < 0.65) return -1;  // negative interior
    if (r < 0.85) return 2;   // at upper bound
    return -2;                // at lower bound
  };
  // J3 assigns whole spatial rows so the group structure is exercised.
  if (kind == SparsityKind::J3) {
    for (int s = 0; s < g.num_spatial(); ++s) {
      const int row_state = draw_state(unif(rng));
      for (int k = 0; k < nt; ++k) {
        switch (row_state) {
          case 0: out.u(s, k) = 0.0; break;
          case 1: out.u(s, k) = 1.0 + 0.3 * std::sin(1.0 + s + k); break;
          case -1: out.u(s, k) = -1.0 - 0.3 * std::cos(2.0 + s + 2 * k); break;
          case 2: out.u(s, k) = box.upper; break;
          case -2: out.u(s, k) = box.lower; break;
        }
      }
    }
  } else {
    for (int i = 0; i < out.u.size(); ++i) {
      switch (draw_state(unif(rng))) {
        case 0: out.u[i] = 0.0; break;
        case 1: out.u[i] = 1.0 + 0.3 * std::sin(1.0 + i); break;
        case -1: out.u[i] = -1.0 - 0.3 * std::cos(2.0 + i); break;
        case 2: out.u[i] = box.upper; break;
        case -2: out.u[i] = box.lower; break;
      }
    }
  }
  // guarantee one strict-complementarity location
  if (kind == SparsityKind::J3) {
    for (int k = 0; k < nt; ++k) out.u(0, k) = box.upper;
  } else {
    out.u[0] = box.upper;
  }

  const SignClassification cls = classify_signs(out.u);

  out.lambda = GridFunction::zeros(g);
  switch (kind) {
    case SparsityKind::J1:
      for (int i = 0; i < out.u.size(); ++i) {
        switch (cls.cell[static_cast<std::size_t>(i)]) {
          case CellSign::Pos: out.lambda[i] = 1.0; break;
          case CellSign::Neg: out.lambda[i] = -1.0; break;
          case CellSign::Zero: {
            const double r = unif(rng);
            out.lambda[i] = r < 0.35 ? 1.0 : (r < 0.7 ? -1.0 : 0.5 * (2.0 * unif(rng) - 1.0));
            break;
          }
        }
      }
      break;
    case SparsityKind::J2: {
      const double j2u = j_value(SparsityKind::J2, out.u);
      for (int s = 0; s < g.num_spatial(); ++s)
        for (int k = 0; k < nt; ++k) {
          const double c_t = cls.time_l1[k] / j2u;
          switch (cls.cell[static_cast<std::size_t>(s) * nt + k]) {
            case CellSign::Pos: out.lambda(s, k) = c_t; break;
            case CellSign::Neg: out.lambda(s, k) = -c_t; break;
            case CellSign::Zero: {
              const double r = unif(rng);
              out.lambda(s, k) = r < 0.35 ? c_t : (r < 0.7 ? -c_t : 0.4 * c_t);
              break;
            }
          }
        }
      break;
    }
    case SparsityKind::J3:
      for (int s = 0; s < g.num_spatial(); ++s) {
        if (cls.space_nonzero[s]) {
          for (int k = 0; k < nt; ++k) out.lambda(s, k) = out.u(s, k) / cls.space_l2[s];
        } else {
          // unit-norm trace on half the zero rows (those admit critical
          // directions), strictly interior on the rest
          const bool saturate = unif(rng) < 0.5;
          double n2 = 0.0;
          std::vector<double> prof(static_cast<std::size_t>(nt));
          for (int k = 0; k < nt; ++k) {
            prof[static_cast<std::size_t>(k)] = std::sin(0.5 + s + k) + 1.2;
            n2 += prof[static_cast<std::size_t>(k)] * prof[static_cast<std::size_t>(k)];
          }
          const double norm = std::sqrt(n2 * g.cell_measure_time());
          const double scale = (saturate ? 1.0 : 0.6) / norm;
          for (int k = 0; k < nt; ++k)
            out.lambda(s, k) = scale * prof[static_cast<std::size_t>(k)];
        }
      }
      break;
  }

  out.gradF = GridFunction::zeros(g);
  for (int i = 0; i < out.u.size(); ++i) {
    double n_i = 0.0;
    if (out.u[i] >= box.upper - 1e-14 && (i == 0 || unif(rng) < 0.5)) n_i = bound_slack;
    if (out.u[i] <= box.lower + 1e-14 && unif(rng) < 0.5) n_i = -bound_slack;
    out.gradF[i] = -(mu * out.lambda[i] + n_i);
  }
  return out;
}

/// Least-squares slope of log(err) against log(h). Points at or below the
/// noise floor are excluded: agreement down to roundoff is better than any
/// finite rate, so fewer than two genuine points yields a large order.
inline double observed_order(std::span<const double> h, std::span<const double> err,
                             double floor = 1e-13) {
  if (h.size() != err.size() || h.size() < 2) throw ConfigError("observed_order: need >= 2 points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (err[i] <= floor) continue;
    const double x = std::log(h[i]);
    const double y = std::log(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 2) return 99.0;
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Forward difference quotients (j(u + t v) - j(u)) / t against the closed
/// form j'(u; v); returns the per-t errors for an order fit. The difference
/// goes through the cancellation-free j_diff so the small-t points measure
/// the functional, not floating-point noise.
inline std::vector<double> dirderiv_forward_errors(
    SparsityKind kind, const GridFunction& u, const GridFunction& v, std::span<const double> ts,
    const std::function<double(SparsityKind, const GridFunction&, const GridFunction&)>& dirderiv) {
  const double ref = dirderiv(kind, u, v);
  std::vector<double> errs;
  errs.reserve(ts.size());
  for (double t : ts) errs.push_back(std::abs(j_diff(kind, u, t, v) / t - ref));
  return errs;
}

inline std::vector<double> dirderiv_forward_errors(SparsityKind kind, const GridFunction& u,
                                                   const GridFunction& v,
                                                   std::span<const double> ts) {
  return dirderiv_forward_errors(kind, u, v, ts,
                                 [](SparsityKind k, const GridFunction& uu, const GridFunction& vv) {
                                   return j_dir_deriv(k, uu, vv, classify_signs(uu));
                                 });
}

// -- brute-force prox oracle ------------------------------------------------------

/// Value of the prox objective 0.5 ||w - u||^2 + step*mu*j(w) (+ box indicator
/// handled by the search domain).
inline double prox_objective(SparsityKind kind, double mu, double step, const GridFunction& u,
                             const GridFunction& w) {
  const GridFunction d = w - u;
  return 0.5 * inner(d, d) + step * mu * j_value(kind, w);
}

namespace detail {

/// Exact minimization of a convex 1-D function on [lo, hi] by golden-section.
/// The quadratic fidelity term makes every coordinate slice strictly convex,
/// so the minimizer is unique and golden-section converges to it.
template <class F>
double golden_min(F&& f, double lo, double hi, double xtol) {
  constexpr double inv_phi = 0.6180339887498949;
  double a = lo, b = hi;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > xtol) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = f(x2);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace detail

/// Brute-force prox by cyclic exact coordinate minimization with multiple
/// starts. Intended for tiny grids (<= a few dozen cells); the group norms
/// couple coordinates, so several starts plus perturbation restarts guard
/// against the (measure-zero) configurations where a coordinate path could
/// stall on a kink.
inline GridFunction prox_reference(SparsityKind kind, double mu, double step,
                                   const GridFunction& u, const Box& box,
                                   std::uint64_t seed = 1234, int max_sweeps = 2000) {
  box.validate();
  const double xtol = 1e-14 * std::max(1.0, box.width());

  auto refine = [&](GridFunction w) {
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
      double max_move = 0.0;
      for (int i = 0; i < w.size(); ++i) {
        const double old = w[i];
        auto f1d = [&](double xi) {
          w[i] = xi;
          return prox_objective(kind, mu, step, u, w);
        };
        const double best = detail::golden_min(f1d, box.lower, box.upper, xtol);
        w[i] = best;
        max_move = std::max(max_move, std::abs(best - old));
      }
      if (max_move < 1e-13 * std::max(1.0, box.width())) break;
    }
    return w;
  };

  GridFunction clamped = u;
  for (double& v : clamped.values()) v = box.clamp(v);
  std::vector<GridFunction> starts;
  starts.push_back(std::move(clamped));
  starts.push_back(GridFunction::zeros(u.spec()));

  GridFunction best = refine(starts[0]);
  double best_val = prox_objective(kind, mu, step, u, best);
  for (std::size_t i = 1; i < starts.size(); ++i) {
    GridFunction cand = refine(starts[i]);
    const double val = prox_objective(kind, mu, step, u, cand);
    if (val < best_val) {
      best_val = val;
      best = cand;
    }
  }
  // perturbation restarts around the incumbent
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  for (int r = 0; r < 2; ++r) {
    GridFunction cand = best;
    for (double& v : cand.values()) v = box.clamp(v + jitter(rng) * box.width());
    cand = refine(cand);
    const double val = prox_objective(kind, mu, step, u, cand);
    if (val < best_val) {
      best_val = val;
      best = cand;
    }
  }
  return best;
}

// -- smooth random fields for order studies ----------------------------------------

/// Base point whose |values| are uniformly graded across [0, band] on part of
/// the grid and O(1) elsewhere. j1 is piecewise linear, so its forward
/// quotients only deviate from the directional derivative on cells whose sign
/// flips; uniform grading puts a t-proportional number of cells into the flip
/// band at every t of the study, which makes the first-order rate measurable
/// instead of exactly zero.
inline GridFunction graded_field(const GridSpec& g, std::uint64_t seed, double band = 1.5e-3,
                                 double graded_fraction = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  GridFunction u(g);
  const int n = u.size();
  const int n_graded = std::max(2, static_cast<int>(graded_fraction * n));
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  for (int r = 0; r < n; ++r) {
    const int i = perm[static_cast<std::size_t>(r)];
    const double sign = unif(rng) < 0.5 ? -1.0 : 1.0;
    if (r < n_graded)
      u[i] = sign * (r + 0.5) / n_graded * band;
    else
      u[i] = sign * (0.5 + unif(rng));
  }
  return u;
}

/// Random low-frequency field: a short Fourier-type mode sum. Smooth zero
/// crossings give finite-difference studies clean first-order behaviour.
inline GridFunction random_smooth_field(const GridSpec& g, std::uint64_t seed, double amplitude = 1.0,
                                        int modes = 3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  std::uniform_int_distribution<int> freq(1, 3);
  struct Mode {
    double a;
    int kx, ky, kt;
    double px, py, pt;
  };
  std::vector<Mode> ms(static_cast<std::size_t>(modes));
  std::uniform_real_distribution<double> phase(0.0, 6.283185307179586);
  for (auto& m : ms)
    m = {coef(rng), freq(rng), freq(rng), freq(rng), phase(rng), phase(rng), phase(rng)};
  const double pi = 3.141592653589793;
  return GridFunction::sample(g, [&](std::array<double, 2> x, double t) {
    double v = 0.0;
    for (const auto& m : ms)
      v += m.a * std::sin(pi * m.kx * x[0] / g.spatial_extent[0] + m.px) *
           (g.spatial_dim == 2 ? std::sin(pi * m.ky * x[1] / g.spatial_extent[1] + m.py) : 1.0) *
           std::sin(pi * m.kt * t / g.horizon + m.pt);
    return amplitude * v;
  });
}

}  // namespace stsparse::verify
