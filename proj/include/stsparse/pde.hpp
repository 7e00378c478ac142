#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"

namespace stsparse {

/// Monotone nondecreasing reaction terms; three instances are enough to
/// exercise every derivative formula.
enum class Nonlinearity { None, Cubic, LinearCubic };

inline double a_value(Nonlinearity a, double y) {
  switch (a) {
    case Nonlinearity::None: return 0.0;
    case Nonlinearity::Cubic: return y * y * y;
    case Nonlinearity::LinearCubic: return y + y * y * y;
  }
  return 0.0;
}
inline double a_prime(Nonlinearity a, double y) {
  switch (a) {
    case Nonlinearity::None: return 0.0;
    case Nonlinearity::Cubic: return 3.0 * y * y;
    case Nonlinearity::LinearCubic: return 1.0 + 3.0 * y * y;
  }
  return 0.0;
}
inline double a_second(Nonlinearity a, double y) {
  switch (a) {
    case Nonlinearity::None: return 0.0;
    case Nonlinearity::Cubic: return 6.0 * y;
    case Nonlinearity::LinearCubic: return 6.0 * y;
  }
  return 0.0;
}

enum class TimeScheme { ImplicitEuler };

/// Semilinear parabolic problem data: state operator -kappa*Laplace with
/// homogeneous Dirichlet walls, reaction a(y), tracking objective
/// L = 0.5 (y - y_d)^2, Tikhonov weight nu.
struct PdeConfig {
  GridSpec grid;
  double kappa = 1.0;
  Nonlinearity nonlinearity = Nonlinearity::None;
  double nu = 0.0;
  GridFunction y_target;    // y_d; empty means zero
  std::vector<double> y0;   // initial spatial field; empty means zero
  double newton_tol = 1e-13;
  int newton_max_iter = 30;
  TimeScheme scheme = TimeScheme::ImplicitEuler;

  void validate() const {
    grid.validate();
    if (!(kappa > 0.0)) throw ConfigError("PdeConfig: kappa must be > 0");
    if (nu < 0.0) throw ConfigError("PdeConfig: nu must be >= 0");
    if (y_target.size() != 0 && !(y_target.spec() == grid))
      throw ConfigError("PdeConfig: y_target lives on a different grid");
    if (!y0.empty() && static_cast<int>(y0.size()) != grid.num_spatial())
      throw ConfigError("PdeConfig: y0 has wrong spatial size");
  }

  double target_at(int s, int k) const { return y_target.size() ? y_target(s, k) : 0.0; }
  double initial_at(int s) const { return y0.empty() ? 0.0 : y0[static_cast<std::size_t>(s)]; }
};

namespace pde_detail {

using SpMat = Eigen::SparseMatrix<double>;
using Solver = Eigen::SimplicialLDLT<SpMat>;

/// kappa-scaled Laplacian on cell midpoints with reflection ghosts: the wall
/// value sits midway between the ghost and the first interior center, so the
/// homogeneous Dirichlet condition is enforced to second order.
inline SpMat dirichlet_operator(const GridSpec& g, double kappa) {
  const int ns = g.num_spatial();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(5 * ns));
  const int nx = g.spatial_cells[0];
  const int ny = g.spatial_dim == 2 ? g.spatial_cells[1] : 1;
  const double cx = kappa / (g.dx(0) * g.dx(0));
  const double cy = g.spatial_dim == 2 ? kappa / (g.dx(1) * g.dx(1)) : 0.0;
  for (int ix = 0; ix < nx; ++ix) {
    for (int iy = 0; iy < ny; ++iy) {
      const int row = g.flat_spatial(ix, iy);
      double diag = 2.0 * cx + (g.spatial_dim == 2 ? 2.0 * cy : 0.0);
      if (ix == 0) diag += cx; else trip.emplace_back(row, g.flat_spatial(ix - 1, iy), -cx);
      if (ix == nx - 1) diag += cx; else trip.emplace_back(row, g.flat_spatial(ix + 1, iy), -cx);
      if (g.spatial_dim == 2) {
        if (iy == 0) diag += cy; else trip.emplace_back(row, g.flat_spatial(ix, iy - 1), -cy);
        if (iy == ny - 1) diag += cy; else trip.emplace_back(row, g.flat_spatial(ix, iy + 1), -cy);
      }
      trip.emplace_back(row, row, diag);
    }
  }
  SpMat m(ns, ns);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

inline Eigen::VectorXd time_slice(const GridFunction& u, int k) {
  Eigen::VectorXd v(u.num_spatial());
  for (int s = 0; s < u.num_spatial(); ++s) v[s] = u(s, k);
  return v;
}

inline void set_time_slice(GridFunction& u, int k, const Eigen::VectorXd& v) {
  for (int s = 0; s < u.num_spatial(); ++s) u(s, k) = v[s];
}

}  // namespace pde_detail

/// Result of the nonlinear forward solve: the state trajectory plus the
/// per-step factorization of the final implicit-Euler Jacobian
/// M_k = I/dt + kappa*K + diag(a'(y^k)). Linearized and adjoint sweeps reuse
/// these factorizations, which makes the discrete transposition exact.
struct StateSolution {
  GridFunction y;
  std::vector<std::shared_ptr<pde_detail::Solver>> step_solver;  // one per time cell
  std::vector<Eigen::VectorXd> a_prime_diag;                     // a'(y^k)
};

/// Implicit Euler in time, centered differences in space, Newton per step.
inline StateSolution solve_state(const PdeConfig& cfg, const GridFunction& u) {
  cfg.validate();
  if (!(u.spec() == cfg.grid)) throw ConfigError("solve_state: control on wrong grid");
  const GridSpec& g = cfg.grid;
  const int ns = g.num_spatial();
  const int nt = g.time_cells;
  const double dt = g.cell_measure_time();

  const pde_detail::SpMat K = pde_detail::dirichlet_operator(g, cfg.kappa);
  pde_detail::SpMat M0 = K;
  for (int s = 0; s < ns; ++s) M0.coeffRef(s, s) += 1.0 / dt;
  M0.makeCompressed();

  StateSolution out;
  out.y = GridFunction::zeros(g);
  out.step_solver.resize(static_cast<std::size_t>(nt));
  out.a_prime_diag.resize(static_cast<std::size_t>(nt));

  std::shared_ptr<pde_detail::Solver> linear_solver;
  if (cfg.nonlinearity == Nonlinearity::None) {
    linear_solver = std::make_shared<pde_detail::Solver>();
    linear_solver->compute(M0);
    if (linear_solver->info() != Eigen::Success)
      throw SingularSystem("state operator factorization failed");
  }

  Eigen::VectorXd y_prev(ns);
  for (int s = 0; s < ns; ++s) y_prev[s] = cfg.initial_at(s);

  for (int k = 0; k < nt; ++k) {
    const Eigen::VectorXd rhs = y_prev / dt + pde_detail::time_slice(u, k);
    Eigen::VectorXd y = y_prev;

    if (cfg.nonlinearity == Nonlinearity::None) {
      y = linear_solver->solve(rhs);
      out.step_solver[static_cast<std::size_t>(k)] = linear_solver;
      out.a_prime_diag[static_cast<std::size_t>(k)] = Eigen::VectorXd::Zero(ns);
    } else {
      const double scale = 1.0 + rhs.norm();
      double res_norm = 0.0, prev_norm = std::numeric_limits<double>::infinity();
      bool done = false;
      for (int it = 0; it <= cfg.newton_max_iter; ++it) {
        Eigen::VectorXd res = M0 * y - rhs;
        for (int s = 0; s < ns; ++s) res[s] += a_value(cfg.nonlinearity, y[s]);
        res_norm = res.norm();
        if (!std::isfinite(res_norm)) throw NewtonDiverged(k, res_norm);
        if (res_norm <= cfg.newton_tol * scale) {
          done = true;
          break;
        }
        // quadratic convergence stalls only at the roundoff floor; accept the
        // floor, reject genuine stagnation
        if (it >= 3 && res_norm >= 0.5 * prev_norm) {
          if (res_norm <= 1e-11 * scale) {
            done = true;
            break;
          }
          throw NewtonDiverged(k, res_norm);
        }
        prev_norm = res_norm;
        pde_detail::SpMat J = M0;
        for (int s = 0; s < ns; ++s) J.coeffRef(s, s) += a_prime(cfg.nonlinearity, y[s]);
        pde_detail::Solver newton;
        newton.compute(J);
        if (newton.info() != Eigen::Success) throw SingularSystem("Newton Jacobian not SPD");
        y -= newton.solve(res);
      }
      if (!done) throw NewtonDiverged(k, res_norm);

      // Final Jacobian at the converged state; this is the matrix the
      // linearized/adjoint systems must share for exact transposition.
      pde_detail::SpMat J = M0;
      Eigen::VectorXd ap(ns);
      for (int s = 0; s < ns; ++s) {
        ap[s] = a_prime(cfg.nonlinearity, y[s]);
        J.coeffRef(s, s) += ap[s];
      }
      auto solver = std::make_shared<pde_detail::Solver>();
      solver->compute(J);
      if (solver->info() != Eigen::Success) throw SingularSystem("step Jacobian not SPD");
      out.step_solver[static_cast<std::size_t>(k)] = solver;
      out.a_prime_diag[static_cast<std::size_t>(k)] = std::move(ap);
    }
    pde_detail::set_time_slice(out.y, k, y);
    y_prev = y;
  }
  return out;
}

/// Forward sweep of z' + A z + a'(y) z = v, z(0) = 0; linear in v.
inline GridFunction solve_linearized(const PdeConfig& cfg, const StateSolution& state,
                                     const GridFunction& v) {
  if (!(v.spec() == cfg.grid)) throw ConfigError("solve_linearized: direction on wrong grid");
  const int nt = cfg.grid.time_cells;
  const double dt = cfg.grid.cell_measure_time();
  GridFunction z = GridFunction::zeros(cfg.grid);
  Eigen::VectorXd z_prev = Eigen::VectorXd::Zero(cfg.grid.num_spatial());
  for (int k = 0; k < nt; ++k) {
    const Eigen::VectorXd rhs = z_prev / dt + pde_detail::time_slice(v, k);
    Eigen::VectorXd zk = state.step_solver[static_cast<std::size_t>(k)]->solve(rhs);
    pde_detail::set_time_slice(z, k, zk);
    z_prev = std::move(zk);
  }
  return z;
}

/// Backward sweep of the transposed linearized operator with a general right
/// hand side; with rhs = dL/dy this is the adjoint state.
inline GridFunction solve_transposed(const PdeConfig& cfg, const StateSolution& state,
                                     const GridFunction& rhs) {
  if (!(rhs.spec() == cfg.grid)) throw ConfigError("solve_transposed: rhs on wrong grid");
  const int nt = cfg.grid.time_cells;
  const double dt = cfg.grid.cell_measure_time();
  GridFunction q = GridFunction::zeros(cfg.grid);
  Eigen::VectorXd q_next = Eigen::VectorXd::Zero(cfg.grid.num_spatial());
  for (int k = nt - 1; k >= 0; --k) {
    const Eigen::VectorXd r = q_next / dt + pde_detail::time_slice(rhs, k);
    Eigen::VectorXd qk = state.step_solver[static_cast<std::size_t>(k)]->solve(r);
    pde_detail::set_time_slice(q, k, qk);
    q_next = std::move(qk);
  }
  return q;
}

/// Adjoint state: -phi' + A*phi + a'(y) phi = dL/dy(y), phi(T) = 0, realized
/// as the exact transpose of the discrete linearized sweep.
inline GridFunction solve_adjoint(const PdeConfig& cfg, const StateSolution& state) {
  GridFunction ly(cfg.grid);
  for (int s = 0; s < cfg.grid.num_spatial(); ++s)
    for (int k = 0; k < cfg.grid.time_cells; ++k)
      ly(s, k) = state.y(s, k) - cfg.target_at(s, k);
  return solve_transposed(cfg, state, ly);
}

/// State, adjoint and the reusable step factorizations for one control.
struct StateTriple {
  StateSolution state;
  GridFunction phi;
};

inline StateTriple prepare(const PdeConfig& cfg, const GridFunction& u) {
  StateTriple t{solve_state(cfg, u), GridFunction()};
  t.phi = solve_adjoint(cfg, t.state);
  return t;
}

/// F(u) = int L(y_u) + (nu/2) ||u||^2.
inline double objective_smooth(const PdeConfig& cfg, const StateSolution& state,
                               const GridFunction& u) {
  double track = 0.0;
  for (int s = 0; s < cfg.grid.num_spatial(); ++s)
    for (int k = 0; k < cfg.grid.time_cells; ++k) {
      const double d = state.y(s, k) - cfg.target_at(s, k);
      track += d * d;
    }
  double uu = 0.0;
  for (double v : u.values()) uu += v * v;
  return (0.5 * track + 0.5 * cfg.nu * uu) * cfg.grid.cell_measure();
}

inline double objective_smooth(const PdeConfig& cfg, const GridFunction& u) {
  return objective_smooth(cfg, solve_state(cfg, u), u);
}

/// F'(u) = phi_u + nu u.
inline GridFunction grad_smooth(const PdeConfig& cfg, const StateTriple& t, const GridFunction& u) {
  GridFunction g = t.phi;
  if (cfg.nu != 0.0)
    for (int i = 0; i < g.size(); ++i) g[i] += cfg.nu * u[i];
  return g;
}

inline GridFunction grad_smooth(const PdeConfig& cfg, const GridFunction& u) {
  return grad_smooth(cfg, prepare(cfg, u), u);
}

/// Curvature coefficient of the Hessian integrand: d2L/dy2 - phi * d2a/dy2.
inline GridFunction hessian_coefficient(const PdeConfig& cfg, const StateTriple& t) {
  GridFunction c(cfg.grid);
  for (int s = 0; s < cfg.grid.num_spatial(); ++s)
    for (int k = 0; k < cfg.grid.time_cells; ++k)
      c(s, k) = 1.0 - t.phi(s, k) * a_second(cfg.nonlinearity, t.state.y(s, k));
  return c;
}

/// F''(u)(v1, v2) = int { (d2L/dy2 - phi d2a/dy2) z_{v1} z_{v2} + nu v1 v2 }.
inline double hess_apply(const PdeConfig& cfg, const StateTriple& t, const GridFunction& v1,
                         const GridFunction& v2) {
  const GridFunction z1 = solve_linearized(cfg, t.state, v1);
  const GridFunction z2 = (&v1 == &v2) ? z1 : solve_linearized(cfg, t.state, v2);
  const GridFunction c = hessian_coefficient(cfg, t);
  double acc = 0.0;
  for (int i = 0; i < z1.size(); ++i) acc += c[i] * z1[i] * z2[i];
  double vv = 0.0;
  for (int i = 0; i < v1.size(); ++i) vv += v1[i] * v2[i];
  return (acc + cfg.nu * vv) * cfg.grid.cell_measure();
}

inline double hess_apply(const PdeConfig& cfg, const GridFunction& u, const GridFunction& v1,
                         const GridFunction& v2) {
  return hess_apply(cfg, prepare(cfg, u), v1, v2);
}

/// Hessian as an operator: F''(u) v = B^T (c . B v) + nu v with B the
/// linearized solution map; used for Lipschitz estimates.
inline GridFunction hess_vec(const PdeConfig& cfg, const StateTriple& t, const GridFunction& v) {
  GridFunction cz = solve_linearized(cfg, t.state, v);
  const GridFunction c = hessian_coefficient(cfg, t);
  for (int i = 0; i < cz.size(); ++i) cz[i] *= c[i];
  GridFunction out = solve_transposed(cfg, t.state, cz);
  if (cfg.nu != 0.0)
    for (int i = 0; i < out.size(); ++i) out[i] += cfg.nu * v[i];
  return out;
}

/// Operator norm estimate of v -> z_v by power iteration on B^T B; the
/// constant C_Z of the standard parabolic estimate, measured per
/// configuration rather than assumed.
inline double measure_cz(const PdeConfig& cfg, const StateSolution& state, int iters = 40,
                         std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  GridFunction v(cfg.grid);
  for (double& x : v.values()) x = gauss(rng);
  double nv = norm_l2(v);
  if (nv == 0.0) return 0.0;
  v = (1.0 / nv) * v;
  double cz = 0.0;
  for (int it = 0; it < iters; ++it) {
    const GridFunction z = solve_linearized(cfg, state, v);
    cz = norm_l2(z);
    GridFunction q = solve_transposed(cfg, state, z);
    const double nq = norm_l2(q);
    if (nq == 0.0) break;
    v = (1.0 / nq) * q;
  }
  return cz;
}

}  // namespace stsparse
