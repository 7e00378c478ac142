#pragma once

#include <cmath>
#include <vector>

#include "cones.hpp"
#include "errors.hpp"
#include "grid.hpp"
#include "pde.hpp"
#include "sparsity.hpp"

namespace stsparse {

/// The optimal control problem: smooth tracking part plus box-constrained
/// sparsity penalty.
struct ProblemConfig {
  PdeConfig pde;
  Penalty penalty;

  void validate() const {
    pde.validate();
    penalty.box.validate();
    if (penalty.mu < 0.0) throw ConfigError("ProblemConfig: mu must be >= 0");
  }
};

struct SolveOptions {
  double tol = 1e-8;        // on ||u+ - u|| / s
  int max_iter = 2000;
  double initial_step = 0.0;  // 0: estimate 1/L by power iteration
  int max_backtracks = 60;
  int lipschitz_power_iters = 25;
};

struct SolveResult {
  GridFunction u;
  GridFunction lambda;  // certified subgradient at u
  int iterations = 0;
  double kkt = 0.0;
  std::vector<double> objective_history;
  bool converged = false;  // false: iteration cap hit, best iterate returned
};

/// Projected/normal-cone residual of 0 in F'(u) + mu lambda + N(u): the
/// projected fixed-point norm plus the L1 measure of normal-cone violations
/// on the cells where lambda is sign-determined.
inline double kkt_residual(const ProblemConfig& cfg, const GridFunction& u,
                           const GridFunction& lambda) {
  const GridFunction grad = grad_smooth(cfg.pde, u);
  const double r1 = first_order_residual(u, grad, lambda, cfg.penalty.mu, cfg.penalty.box);

  const SignClassification cls = classify_signs(u);
  const Box& box = cfg.penalty.box;
  const double atol = detail::active_tol(box);
  const int nt = u.time_cells();
  double viol = 0.0;
  for (int s = 0; s < u.num_spatial(); ++s) {
    for (int k = 0; k < nt; ++k) {
      const int i = s * nt + k;
      bool determined = false;
      switch (cfg.penalty.kind) {
        case SparsityKind::J1:
          determined = cls.cell[static_cast<std::size_t>(i)] != CellSign::Zero;
          break;
        case SparsityKind::J2:
          determined = !cls.all_zero && (cls.cell[static_cast<std::size_t>(i)] != CellSign::Zero ||
                                         !cls.time_nonzero[k]);
          break;
        case SparsityKind::J3:
          determined = cls.space_nonzero[s] != 0;
          break;
      }
      if (!determined) continue;
      const double w = -(grad[i] + cfg.penalty.mu * lambda[i]);
      double amount;
      if (u[i] <= box.lower + atol)
        amount = std::max(w, 0.0);
      else if (u[i] >= box.upper - atol)
        amount = std::max(-w, 0.0);
      else
        amount = std::abs(w);
      viol += amount * u.spec().cell_measure();
    }
  }
  return r1 + viol;
}

/// Proximal gradient with a Barzilai-Borwein step seed and Armijo-type
/// backtracking on the smooth part; the penalty and the box are handled by
/// the prox. Terminates on the scaled step norm.
inline SolveResult solve_ocp(const ProblemConfig& cfg, const GridFunction& u0,
                             const SolveOptions& opts = {}) {
  cfg.validate();
  if (!(u0.spec() == cfg.pde.grid)) throw ConfigError("solve_ocp: u0 on wrong grid");
  if (detail::box_violation(u0, cfg.penalty.box) > 0.0)
    throw ConfigError("solve_ocp: u0 must be feasible");

  const Penalty& pen = cfg.penalty;
  GridFunction u = u0;
  StateTriple prep = prepare(cfg.pde, u);
  double F_u = objective_smooth(cfg.pde, prep.state, u);
  GridFunction g = grad_smooth(cfg.pde, prep, u);

  double step = opts.initial_step;
  if (step <= 0.0) {
    // Lipschitz seed: power iteration on the Hessian at u0.
    GridFunction v(cfg.pde.grid, 1.0);
    v = (1.0 / norm_l2(v)) * v;
    double lip = 0.0;
    for (int it = 0; it < opts.lipschitz_power_iters; ++it) {
      GridFunction hv = hess_vec(cfg.pde, prep, v);
      lip = norm_l2(hv);
      if (lip <= 1e-14) break;
      v = (1.0 / lip) * hv;
    }
    step = lip > 1e-14 ? 1.0 / lip : 1.0;
  }

  SolveResult out;
  out.objective_history.push_back(F_u + pen.mu * j_value(pen.kind, u));

  GridFunction u_prev = u, g_prev = g;
  bool have_prev = false;

  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    if (have_prev) {
      // BB1 step from the last pair, clipped to a sane range.
      const GridFunction du = u - u_prev;
      const GridFunction dg = g - g_prev;
      const double num = inner(du, du), den = inner(du, dg);
      if (den > 1e-16 * num) step = std::clamp(num / den, 1e-10, 1e10);
    }

    double s = step;
    GridFunction u_next(cfg.pde.grid);
    StateTriple prep_next;
    double F_next = 0.0;
    bool accepted = false;
    for (int bt = 0; bt <= opts.max_backtracks; ++bt) {
      u_next = prox(pen.kind, pen.mu, s, lincomb(1.0, u, -s, g), pen.box);
      const GridFunction d = u_next - u;
      const double dn2 = inner(d, d);
      prep_next = prepare(cfg.pde, u_next);
      F_next = objective_smooth(cfg.pde, prep_next.state, u_next);
      const double surrogate = F_u + inner(g, d) + dn2 / (2.0 * s);
      if (F_next <= surrogate + 1e-12 * (1.0 + std::abs(F_u))) {
        accepted = true;
        break;
      }
      s *= 0.5;
    }
    if (!accepted) {
      out.iterations = iter;
      break;  // step collapsed; report best iterate below
    }

    const GridFunction d = u_next - u;
    const double move = norm_l2(d) / s;

    u_prev = u;
    g_prev = g;
    have_prev = true;
    u = u_next;
    prep = std::move(prep_next);
    F_u = F_next;
    g = grad_smooth(cfg.pde, prep, u);
    out.objective_history.push_back(F_u + pen.mu * j_value(pen.kind, u));
    out.iterations = iter;

    if (move <= opts.tol) {
      out.converged = true;
      break;
    }
  }

  out.u = u;
  if (pen.mu > 0.0) {
    out.lambda = canonical_subgradient(pen.kind, u, g, pen.mu, pen.box).lambda;
  } else {
    out.lambda = GridFunction::zeros(cfg.pde.grid);
  }
  out.kkt = kkt_residual(cfg, u, out.lambda);
  return out;
}

}  // namespace stsparse
