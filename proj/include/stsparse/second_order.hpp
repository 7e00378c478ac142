#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "cones.hpp"
#include "errors.hpp"
#include "ext_real.hpp"
#include "grid.hpp"
#include "sparsity.hpp"

namespace stsparse {

// -- second-order difference quotient of G = delta_box + mu*j -------------------

/// [G(u + t v) - G(u) - t <w, v>] / (t^2/2). Returns +inf when u + t v leaves
/// the box (beyond a relative feasibility tolerance that absorbs roundoff of
/// the t*v products). The nonsmooth difference is evaluated through the
/// cancellation-free j_diff, so quotients stay meaningful down to t ~ 1e-7.
inline ExtReal curvature_quotient(const Penalty& pen, const GridFunction& u, const GridFunction& w,
                                  const GridFunction& v, double t, double feas_tol = 1e-12) {
  require_same_spec(u, w);
  require_same_spec(u, v);
  if (!(t > 0.0)) throw ConfigError("curvature_quotient requires t > 0");
  const Box& box = pen.box;
  box.validate();
  const double ftol = feas_tol * std::max(1.0, box.width());
  for (int i = 0; i < u.size(); ++i) {
    const double p = u[i] + t * v[i];
    if (p < box.lower - ftol || p > box.upper + ftol) return ExtReal::pos_inf();
  }
  const double dj = j_diff(pen.kind, u, t, v);
  const double numer = pen.mu * dj - t * inner(w, v);
  return ExtReal(numer * 2.0 / (t * t));
}

// -- auxiliary analytic forms ----------------------------------------------------

/// Theta(u, v) = (1/j2(u)) [ int_0^T jOmega'(u(t); v(t))^2 dt - j2'(u;v)^2 ],
/// nonnegative by Hoelder; the J2 curvature equals mu * Theta on the critical
/// cone.
inline double theta_j2(const GridFunction& u, const GridFunction& v,
                       const SignClassification& cls, double zero_tol = 1e-14) {
  require_same_spec(u, v);
  const double j2u = j_value(SparsityKind::J2, u);
  if (j2u <= zero_tol * std::max(1.0, norm_linf(u)))
    throw ZeroBase("theta_j2 requires j2(u) > 0");
  const double dt = u.spec().cell_measure_time();
  double int_sq = 0.0;
  for (int k = 0; k < u.time_cells(); ++k) {
    const double d = detail::slice_l1_dirderiv(u, v, cls, k);
    int_sq += d * d;
  }
  const double dd = j_dir_deriv(SparsityKind::J2, u, v, cls);
  return (int_sq * dt - dd * dd) / j2u;
}

inline double theta_j2(const GridFunction& u, const GridFunction& v) {
  return theta_j2(u, v, classify_signs(u));
}

/// q_M(v) over M = Omega_sigma = { x : ||u(x,.)||_{L2(0,T)} >= sigma }:
/// the truncated J3 curvature integrand. Nonnegative, nondecreasing as sigma
/// decreases; its supremum over sigma is the J3 second-subderivative integral.
inline double qform_j3(const GridFunction& u, const GridFunction& v, double sigma,
                       const SignClassification& cls) {
  require_same_spec(u, v);
  if (!(sigma > 0.0)) throw ConfigError("qform_j3 requires sigma > 0");
  const double dt = u.spec().cell_measure_time();
  double acc = 0.0;
  for (int s = 0; s < u.num_spatial(); ++s) {
    const double n = cls.space_l2[s];
    if (n < sigma) continue;
    const auto us = u.space_slice(s), vs = v.space_slice(s);
    double v2 = 0.0, uv = 0.0;
    for (std::size_t k = 0; k < us.size(); ++k) {
      v2 += vs[k] * vs[k];
      uv += us[k] * vs[k];
    }
    const double proj = uv * dt / n;
    acc += (v2 * dt - proj * proj) / n;
  }
  return acc * u.spec().cell_measure_space();
}

inline double qform_j3(const GridFunction& u, const GridFunction& v, double sigma) {
  return qform_j3(u, v, sigma, classify_signs(u));
}

/// Psi(f) = ||f||_{L2(0,T)} and its first three directional derivatives at f
/// in direction g, plus the cubic bound |Psi'''(f) g^3| <= 6 ||g||^3 / ||f||^2.
struct PsiDerivatives {
  double value = 0.0;
  double first = 0.0;
  double second = 0.0;
  double third = 0.0;
};

inline PsiDerivatives psi_eval(std::span<const double> f, std::span<const double> g, double dt,
                               double zero_tol = 1e-14) {
  if (f.size() != g.size()) throw ConfigError("psi_eval: profile lengths differ");
  double ff = 0.0, fg = 0.0, gg = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    ff += f[i] * f[i];
    fg += f[i] * g[i];
    gg += g[i] * g[i];
  }
  ff *= dt;
  fg *= dt;
  gg *= dt;
  const double nf = std::sqrt(ff);
  if (nf <= zero_tol) throw ZeroBase("psi_eval requires ||f|| > 0");
  PsiDerivatives out;
  out.value = nf;
  out.first = fg / nf;
  out.second = (gg - fg * fg / ff) / nf;
  out.third = 3.0 / (nf * ff) * (fg * fg * fg / ff - gg * fg);
  return out;
}

/// Remainder of the lower Taylor expansion of j2 at u in direction v with the
/// cubic term omitted:
///   j2(u+v) - j2(u) - j2'(u;v) - (1/(2 j2(u))) [ int jOmega'^2 dt - j2'^2 ].
/// The expansion asserts gap >= -C ||v||^3 / j2(u)^2 for some C; fitting C
/// over samples is the caller's (test's) business.
inline double lower_taylor_gap_j2(const GridFunction& u, const GridFunction& v,
                                  const SignClassification& cls) {
  require_same_spec(u, v);
  const double j2u = j_value(SparsityKind::J2, u);
  if (j2u <= 1e-14 * std::max(1.0, norm_linf(u)))
    throw ZeroBase("lower_taylor_gap_j2 requires j2(u) > 0");
  const double diff = j_diff(SparsityKind::J2, u, 1.0, v);
  const double dd = j_dir_deriv(SparsityKind::J2, u, v, cls);
  const double quad = 0.5 * theta_j2(u, v, cls);  // (1/(2 j2)) { int jOmega'^2 - j2'^2 }
  return diff - dd - quad;
}

inline double lower_taylor_gap_j2(const GridFunction& u, const GridFunction& v) {
  return lower_taylor_gap_j2(u, v, classify_signs(u));
}

// -- closed-form second subderivatives -------------------------------------------

struct CurvatureValue {
  ExtReal value;
  /// J3 only: the grid integral stayed finite but its integrand exceeded the
  /// divergence threshold, standing in for the continuous value +inf.
  bool divergent = false;
};

/// G''(u, -F'(u); v) in closed form at a first-order point. J1: 0 on the
/// critical cone. J2 (u != 0): mu * Theta(u, v). J3: the Omega_u integral,
/// 0 at u = 0. Off the critical cone every kind returns +inf. J2 at u = 0 in
/// a critical direction throws UnknownValue: that value is an open problem
/// and the library only ever reports difference quotients for it.
inline CurvatureValue second_subderivative(const Penalty& pen, const GridFunction& u,
                                           const GridFunction& gradF, const GridFunction& lambda,
                                           const GridFunction& v, const SignClassification& cls,
                                           double tol = 1e-9, double divergence_threshold = 1e12) {
  const ConeReport crit = critical_contains(pen, u, gradF, lambda, v, cls, tol);
  if (!crit.member) return {ExtReal::pos_inf(), false};

  switch (pen.kind) {
    case SparsityKind::J1:
      return {ExtReal(0.0), false};

    case SparsityKind::J2:
      if (cls.all_zero)
        throw UnknownValue("G2'' at u = 0 in a critical direction is an open problem");
      return {ExtReal(pen.mu * theta_j2(u, v, cls)), false};

    case SparsityKind::J3: {
      if (cls.all_zero) return {ExtReal(0.0), false};
      const double dt = u.spec().cell_measure_time();
      double acc = 0.0;
      bool divergent = false;
      for (int s = 0; s < u.num_spatial(); ++s) {
        if (!cls.space_nonzero[s]) continue;
        const double n = cls.space_l2[s];
        const auto us = u.space_slice(s), vs = v.space_slice(s);
        double v2 = 0.0, uv = 0.0;
        for (std::size_t k = 0; k < us.size(); ++k) {
          v2 += vs[k] * vs[k];
          uv += us[k] * vs[k];
        }
        const double proj = uv * dt / n;
        const double integrand = (v2 * dt - proj * proj) / n;
        if (integrand > divergence_threshold) divergent = true;
        acc += integrand;
      }
      return {ExtReal(pen.mu * acc * u.spec().cell_measure_space()), divergent};
    }
  }
  return {ExtReal(0.0), false};
}

inline CurvatureValue second_subderivative(const Penalty& pen, const GridFunction& u,
                                           const GridFunction& gradF, const GridFunction& lambda,
                                           const GridFunction& v, double tol = 1e-9) {
  return second_subderivative(pen, u, gradF, lambda, v, classify_signs(u), tol);
}

// -- recovery sequences ------------------------------------------------------------

/// The explicit perturbation v_t realizing the second subderivative in the
/// quotient limit. J1/J2: zero inside the sqrt(t)-bands around the bounds and
/// the origin, clamp to [-1/sqrt(t), 1/sqrt(t)] elsewhere. J3 additionally
/// zeroes spatial rows with small temporal norm on Omega_u, and on the
/// complement keeps v(x, .) unchanged unless its temporal norm exceeds
/// 1/sqrt(t), in which case the whole row is zeroed.
inline GridFunction recovery_sequence(const Penalty& pen, const GridFunction& u,
                                      const GridFunction& v, double t, const GridFunction& gradF,
                                      const GridFunction& lambda, const SignClassification& cls,
                                      double criticality_tol = 1e-9) {
  require_same_spec(u, v);
  if (!(t > 0.0)) throw ConfigError("recovery_sequence requires t > 0");
  if (pen.kind == SparsityKind::J2 && cls.all_zero)
    throw NotCritical("the j2 recovery construction requires u != 0");
  const ConeReport crit = critical_contains(pen, u, gradF, lambda, v, cls, criticality_tol);
  if (!crit.member)
    throw NotCritical("recovery_sequence requires a critical direction");

  const double rt = std::sqrt(t);
  const double cap = 1.0 / rt;
  const Box& box = pen.box;
  const int nt = u.time_cells();
  GridFunction vt = GridFunction::zeros(u.spec());

  auto banded = [&](double uv) {
    return (uv > box.lower && uv < box.lower + rt) || (uv > box.upper - rt && uv < box.upper) ||
           (uv > -rt && uv < 0.0) || (uv > 0.0 && uv < rt);
  };

  if (pen.kind == SparsityKind::J3) {
    for (int s = 0; s < u.num_spatial(); ++s) {
      if (cls.space_nonzero[s]) {
        if (cls.space_l2[s] < rt) continue;  // row zeroed
        for (int k = 0; k < nt; ++k)
          vt(s, k) = banded(u(s, k)) ? 0.0 : std::clamp(v(s, k), -cap, cap);
      } else {
        if (space_slice_norm_l2t(v, s) > cap) continue;  // row zeroed
        for (int k = 0; k < nt; ++k) vt(s, k) = v(s, k);
      }
    }
  } else {
    for (int i = 0; i < u.size(); ++i)
      vt[i] = banded(u[i]) ? 0.0 : std::clamp(v[i], -cap, cap);
  }
  return vt;
}

/// Every defining property of the recovery construction at one value of t,
/// evaluated as data: feasibility of u + t v_t, criticality of v_t, the
/// per-kind exact identity, the distance to v, and the quotient at this t.
struct RecoveryCheck {
  double t = 0.0;
  bool feasible = false;
  bool critical = false;
  bool identity = false;
  double identity_residual = 0.0;
  double distance_to_v = 0.0;
  ExtReal quotient;

  bool all_ok() const { return feasible && critical && identity; }
};

inline RecoveryCheck check_recovery_properties(const Penalty& pen, const GridFunction& u,
                                               const GridFunction& v, double t,
                                               const GridFunction& gradF,
                                               const GridFunction& lambda,
                                               const SignClassification& cls,
                                               double identity_tol = 1e-10) {
  RecoveryCheck out;
  out.t = t;
  const GridFunction vt = recovery_sequence(pen, u, v, t, gradF, lambda, cls);
  const GridFunction step = u + t * vt;

  out.feasible = detail::box_violation(step, pen.box) <= 1e-12 * std::max(1.0, pen.box.width());
  try {
    out.critical = critical_contains(pen, u, gradF, lambda, vt, cls, 1e-9).member;
  } catch (const Error&) {
    out.critical = false;
  }
  out.distance_to_v = norm_l2(vt - v);

  double resid = 0.0;
  switch (pen.kind) {
    case SparsityKind::J1: {
      const double lhs = j_value(SparsityKind::J1, step) - j_value(SparsityKind::J1, u);
      const double rhs = t * j_dir_deriv(SparsityKind::J1, u, vt, cls);
      resid = std::abs(lhs - rhs);
      break;
    }
    case SparsityKind::J2: {
      // the j2 construction satisfies the identity slice-wise
      for (int k = 0; k < u.time_cells(); ++k) {
        double m_u = 0.0, m_step = 0.0;
        for (int s = 0; s < u.num_spatial(); ++s) {
          m_u += std::abs(u(s, k));
          m_step += std::abs(step(s, k));
        }
        const double dx = u.spec().cell_measure_space();
        const double lhs = (m_step - m_u) * dx;
        const double rhs = t * detail::slice_l1_dirderiv(u, vt, cls, k);
        resid = std::max(resid, std::abs(lhs - rhs));
      }
      break;
    }
    case SparsityKind::J3: {
      const double dt = u.spec().cell_measure_time();
      for (int s = 0; s < u.num_spatial(); ++s) {
        const double n_u = cls.space_l2[s];
        const double n_step = space_slice_norm_l2t(step, s);
        const double lhs = n_step - n_u;
        double rhs;
        if (cls.space_nonzero[s]) {
          double acc = 0.0;
          const auto us = u.space_slice(s), vs = vt.space_slice(s);
          for (std::size_t k = 0; k < us.size(); ++k)
            acc += (2.0 * us[k] + t * vs[k]) * vs[k];
          const double kk = n_step + n_u;
          rhs = kk > 0.0 ? t * acc * dt / kk : 0.0;
        } else {
          rhs = t * space_slice_norm_l2t(vt, s);
        }
        resid = std::max(resid, std::abs(lhs - rhs));
      }
      break;
    }
  }
  out.identity_residual = resid;
  out.identity = resid <= identity_tol * std::max(1.0, norm_linf(u));
  out.quotient = curvature_quotient(pen, u, (-1.0) * gradF, vt, t);
  return out;
}

inline RecoveryCheck check_recovery_properties(const Penalty& pen, const GridFunction& u,
                                               const GridFunction& v, double t,
                                               const GridFunction& gradF,
                                               const GridFunction& lambda) {
  return check_recovery_properties(pen, u, v, t, gradF, lambda, classify_signs(u));
}

}  // namespace stsparse
