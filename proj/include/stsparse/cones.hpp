#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"
#include "sparsity.hpp"

namespace stsparse {

/// Result of a cone membership test. `member` holds iff no cell violates the
/// pointwise characterization beyond tolerance; the worst offender is kept
/// for diagnostics.
struct ConeReport {
  bool member = false;
  double violation_measure = 0.0;
  int worst_cell = -1;
  double worst_value = 0.0;

  void record(int cell, double amount, double tol, double cell_measure) {
    if (amount > worst_value) {
      worst_value = amount;
      worst_cell = cell;
    }
    if (amount > tol) violation_measure += cell_measure;
  }
  void finish() { member = violation_measure == 0.0; }
};

inline GridFunction project_box(const GridFunction& u, const Box& box) {
  box.validate();
  GridFunction w = u;
  for (double& v : w.values()) v = box.clamp(v);
  return w;
}

namespace detail {

inline double box_violation(const GridFunction& u, const Box& box) {
  double m = 0.0;
  for (double v : u.values())
    m = std::max(m, std::max(box.lower - v, v - box.upper));
  return std::max(m, 0.0);
}

/// Active-set tolerance: grid analogue of the a.e. statements at the bounds.
inline double active_tol(const Box& box) { return 1e-10 * box.width(); }

}  // namespace detail

/// v in the tangent cone of the box at u: v >= 0 where u = alpha,
/// v <= 0 where u = beta.
inline ConeReport tangent_contains(const GridFunction& u, const GridFunction& v, const Box& box,
                                   double tol) {
  require_same_spec(u, v);
  box.validate();
  const double feas = detail::box_violation(u, box);
  if (feas > tol) throw InfeasibleBase("tangent_contains: base point outside the box");
  const double atol = detail::active_tol(box);
  const double meas = u.spec().cell_measure();
  ConeReport rep;
  for (int i = 0; i < u.size(); ++i) {
    double viol = 0.0;
    if (u[i] <= box.lower + atol) viol = std::max(viol, -v[i]);
    if (u[i] >= box.upper - atol) viol = std::max(viol, v[i]);
    rep.record(i, viol, tol, meas);
  }
  rep.finish();
  return rep;
}

/// w in the normal cone of the box at u: w <= 0 where u = alpha, w >= 0 where
/// u = beta, w = 0 on the inactive set.
inline ConeReport normal_contains(const GridFunction& u, const GridFunction& w, const Box& box,
                                  double tol) {
  require_same_spec(u, w);
  box.validate();
  const double feas = detail::box_violation(u, box);
  if (feas > tol) throw InfeasibleBase("normal_contains: base point outside the box");
  const double atol = detail::active_tol(box);
  const double meas = u.spec().cell_measure();
  ConeReport rep;
  for (int i = 0; i < u.size(); ++i) {
    const bool at_lower = u[i] <= box.lower + atol;
    const bool at_upper = u[i] >= box.upper - atol;
    double viol;
    if (at_lower)
      viol = std::max(w[i], 0.0);
    else if (at_upper)
      viol = std::max(-w[i], 0.0);
    else
      viol = std::abs(w[i]);
    rep.record(i, viol, tol, meas);
  }
  rep.finish();
  return rep;
}

/// Projected-residual norm of the first-order condition
/// 0 in gradF + mu*lambda + N(u): ||u - P_box(u - (gradF + mu*lambda))||_{L2}.
inline double first_order_residual(const GridFunction& u, const GridFunction& gradF,
                                   const GridFunction& lambda, double mu, const Box& box) {
  require_same_spec(u, gradF);
  require_same_spec(u, lambda);
  double acc = 0.0;
  for (int i = 0; i < u.size(); ++i) {
    const double step = u[i] - (gradF[i] + mu * lambda[i]);
    const double d = u[i] - box.clamp(step);
    acc += d * d;
  }
  return std::sqrt(acc * u.spec().cell_measure());
}

/// Membership in the critical cone at a first-order point, tested through the
/// pointwise characterization: v tangent, (gradF + mu*lambda) v = 0 a.e., and
/// j'(u;v) = <lambda, v>. The defining identity gradF v + mu j'(u;v) = 0 is
/// cross-checked as well.
inline ConeReport critical_contains(const Penalty& pen, const GridFunction& u,
                                    const GridFunction& gradF, const GridFunction& lambda,
                                    const GridFunction& v, const SignClassification& cls,
                                    double tol, double stationarity_tol = 1e-8) {
  require_same_spec(u, v);
  const double fo = first_order_residual(u, gradF, lambda, pen.mu, pen.box);
  if (fo > stationarity_tol)
    throw NotStationary("critical_contains requires a first-order point", fo);

  ConeReport rep = tangent_contains(u, v, pen.box, tol);

  const double meas = u.spec().cell_measure();
  double ginf = 0.0, vinf = norm_linf(v);
  for (int i = 0; i < u.size(); ++i) ginf = std::max(ginf, std::abs(gradF[i] + pen.mu * lambda[i]));
  const double scale_pw = std::max(1.0, ginf) * std::max(1.0, vinf);
  for (int i = 0; i < u.size(); ++i) {
    const double prod = std::abs((gradF[i] + pen.mu * lambda[i]) * v[i]);
    rep.record(i, prod / scale_pw, tol, meas);
  }

  const double dd = j_dir_deriv(pen.kind, u, v, cls);
  const double pair = inner(lambda, v);
  const double pairing_gap = std::abs(dd - pair) / (1.0 + std::abs(dd) + std::abs(pair));
  rep.record(-1, pairing_gap, tol, u.spec().spacetime_measure());

  const double ident = std::abs(inner(gradF, v) + pen.mu * dd) /
                       (1.0 + std::abs(inner(gradF, v)) + pen.mu * std::abs(dd));
  rep.record(-1, ident, tol, u.spec().spacetime_measure());

  rep.finish();
  return rep;
}

inline ConeReport critical_contains(const Penalty& pen, const GridFunction& u,
                                    const GridFunction& gradF, const GridFunction& lambda,
                                    const GridFunction& v, double tol,
                                    double stationarity_tol = 1e-8) {
  return critical_contains(pen, u, gradF, lambda, v, classify_signs(u), tol, stationarity_tol);
}

/// Draw directions from the critical cone at a first-order point by zeroing
/// cells where gradF + mu*lambda is bounded away from zero, aligning signs
/// with lambda on the sign-sensitive regions of the kind, and respecting the
/// tangent signs at active bounds. Every returned direction passes
/// critical_contains and has unit L2 norm. Returns an empty list when no
/// nonzero direction survives (strict complementarity everywhere).
inline std::vector<GridFunction> sample_critical(const Penalty& pen, const GridFunction& u,
                                                 const GridFunction& gradF,
                                                 const GridFunction& lambda, int count,
                                                 std::uint64_t seed) {
  const SignClassification cls = classify_signs(u);
  const double fo = first_order_residual(u, gradF, lambda, pen.mu, pen.box);
  if (fo > 1e-8) throw NotStationary("sample_critical requires a first-order point", fo);

  const GridSpec& g = u.spec();
  const int nt = g.time_cells;
  const double atol = detail::active_tol(pen.box);
  const double delta_switch = 1e-10 * std::max(1.0, norm_linf(gradF) + pen.mu * norm_linf(lambda));

  // Per-cell admissible sign set: -1 (v<=0), +1 (v>=0), 0 (forced zero),
  // 2 (free). Assembled from the support, tangent and pairing constraints.
  std::vector<int> allowed(static_cast<std::size_t>(u.size()), 2);
  auto restrict_sign = [&](int i, int sign) {
    int& a = allowed[static_cast<std::size_t>(i)];
    if (a == 2) a = sign;
    else if (a != sign) a = 0;
  };
  for (int i = 0; i < u.size(); ++i) {
    if (std::abs(gradF[i] + pen.mu * lambda[i]) > delta_switch) allowed[i] = 0;
  }
  for (int i = 0; i < u.size(); ++i) {
    if (allowed[i] == 0) continue;
    if (u[i] <= pen.box.lower + atol) restrict_sign(i, 1);
    if (u[i] >= pen.box.upper - atol) restrict_sign(i, -1);
  }

  const double lam_tol = 1e-8;
  switch (pen.kind) {
    case SparsityKind::J1:
      for (int i = 0; i < u.size(); ++i) {
        if (allowed[i] == 0 || cls.cell[static_cast<std::size_t>(i)] != CellSign::Zero) continue;
        if (std::abs(lambda[i] - 1.0) <= lam_tol) restrict_sign(i, 1);
        else if (std::abs(lambda[i] + 1.0) <= lam_tol) restrict_sign(i, -1);
        else allowed[i] = 0;
      }
      break;
    case SparsityKind::J2: {
      if (cls.all_zero) break;  // handled by the aligned construction below
      const double j2u = j_value(SparsityKind::J2, u);
      for (int s = 0; s < g.num_spatial(); ++s)
        for (int k = 0; k < nt; ++k) {
          const int i = s * nt + k;
          if (allowed[i] == 0) continue;
          if (cls.cell[static_cast<std::size_t>(i)] != CellSign::Zero) continue;
          const double c_t = cls.time_l1[k] / j2u;
          if (c_t <= lam_tol) continue;  // dead slice: unconstrained
          if (std::abs(lambda(s, k) - c_t) <= lam_tol * (1.0 + c_t)) restrict_sign(i, 1);
          else if (std::abs(lambda(s, k) + c_t) <= lam_tol * (1.0 + c_t)) restrict_sign(i, -1);
          else allowed[i] = 0;
        }
      break;
    }
    case SparsityKind::J3:
      break;  // group handling below
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.1, 1.0);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  std::vector<GridFunction> out;

  const int max_tries = 20 * std::max(count, 1);
  for (int attempt = 0; attempt < max_tries && static_cast<int>(out.size()) < count; ++attempt) {
    GridFunction v = GridFunction::zeros(g);

    if (pen.kind == SparsityKind::J2 && cls.all_zero) {
      // At u = 0 criticality needs lambda in del j2(v): support the direction
      // on per-slice cells where |lambda| attains the slice maximum, with the
      // slice weight profile proportional to that maximum. Only possible when
      // the dual norm of lambda equals one.
      if (std::abs(norm_l2t_linfx(lambda) - 1.0) > 1e-8) break;
      for (int k = 0; k < nt; ++k) {
        double c_t = 0.0;
        for (int s = 0; s < g.num_spatial(); ++s) c_t = std::max(c_t, std::abs(lambda(s, k)));
        if (c_t <= lam_tol) continue;
        int n_sup = 0;
        for (int s = 0; s < g.num_spatial(); ++s)
          if (std::abs(std::abs(lambda(s, k)) - c_t) <= 1e-12 * (1.0 + c_t)) ++n_sup;
        const double wt = c_t / (n_sup * g.cell_measure_space());
        for (int s = 0; s < g.num_spatial(); ++s)
          if (std::abs(std::abs(lambda(s, k)) - c_t) <= 1e-12 * (1.0 + c_t)) {
            const int i = s * nt + k;
            if (allowed[i] == 0) { v(s, k) = 0.0; continue; }
            v(s, k) = (lambda(s, k) >= 0.0 ? 1.0 : -1.0) * wt;
          }
      }
    } else if (pen.kind == SparsityKind::J3) {
      for (int s = 0; s < g.num_spatial(); ++s) {
        if (cls.space_nonzero[s]) {
          for (int k = 0; k < nt; ++k) {
            const int i = s * nt + k;
            if (allowed[i] == 0) continue;
            double val = sym(rng);
            if (allowed[i] == 1) val = std::abs(val);
            if (allowed[i] == -1) val = -std::abs(val);
            v(s, k) = val;
          }
        } else {
          // On the zero rows a nonzero column must be a positive multiple of
          // lambda(x, .), which in turn must have unit temporal norm.
          if (std::abs(space_slice_norm_l2t(lambda, s) - 1.0) > lam_tol) continue;
          bool feasible_row = true;
          for (int k = 0; k < nt; ++k) {
            const int i = s * nt + k;
            const int a = allowed[i];
            const double lv = lambda(s, k);
            if (a == 0 && std::abs(lv) > lam_tol) feasible_row = false;
            if (a == 1 && lv < -lam_tol) feasible_row = false;
            if (a == -1 && lv > lam_tol) feasible_row = false;
          }
          if (!feasible_row || unif(rng) < 0.3) continue;
          const double c = unif(rng);
          for (int k = 0; k < nt; ++k) v(s, k) = c * lambda(s, k);
        }
      }
    } else {
      for (int i = 0; i < u.size(); ++i) {
        if (allowed[i] == 0) continue;
        double val = sym(rng);
        if (allowed[i] == 1) val = std::abs(val);
        if (allowed[i] == -1) val = -std::abs(val);
        v[i] = val;
      }
    }

    const double n = norm_l2(v);
    if (n <= 1e-14) {
      if (pen.kind == SparsityKind::J2 && cls.all_zero) break;
      continue;
    }
    v = (1.0 / n) * v;
    try {
      if (critical_contains(pen, u, gradF, lambda, v, cls, 1e-9).member) out.push_back(v);
    } catch (const Error&) {
      // a rejected draw is not a failure
    }
    if (pen.kind == SparsityKind::J2 && cls.all_zero && !out.empty()) {
      // the aligned construction is deterministic; replicating it adds nothing
      break;
    }
  }
  return out;
}

}  // namespace stsparse
