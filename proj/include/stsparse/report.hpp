#pragma once

#include <algorithm>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "cones.hpp"
#include "second_order.hpp"
#include "solver.hpp"
#include "verify.hpp"

namespace stsparse {

using ordered_json = nlohmann::ordered_json;

// -- the j2 curvature study at u = 0 ------------------------------------------------

struct CounterexampleRow {
  double t = 0.0;
  double j2_grid = 0.0;
  double j2_analytic = 0.0;
  double pairing_grid = 0.0;
  double pairing_analytic = 0.0;
  double quotient = 0.0;
};

struct CounterexampleTable {
  int grid_n = 0;
  std::vector<CounterexampleRow> rows;
  double extrapolated_limit = 0.0;
};

namespace report_detail {

/// integral over [c,d] of W(t) * len(t) dt with len(t) = clamp(t-a, 0, b-a)
/// and W(t) = min(1/t, 1/tau): the exact cell mass of the clamped 1/t profile
/// on the triangle x < t. Piecewise analytic; breakpoints at a, b and tau.
inline double clamped_profile_mass(double a, double b, double c, double d, double tau) {
  std::vector<double> pts = {c, d};
  for (double p : {a, b, tau})
    if (p > c && p < d) pts.push_back(p);
  std::sort(pts.begin(), pts.end());
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double p = pts[i], q = pts[i + 1];
    if (q <= p) continue;
    const double m = 0.5 * (p + q);
    if (m <= a) continue;  // len = 0
    const bool full = m >= b;
    if (m < tau) {
      // W = 1/tau
      acc += full ? (b - a) * (q - p) / tau : ((q * q - p * p) / 2.0 - a * (q - p)) / tau;
    } else {
      // W = 1/t
      acc += full ? (b - a) * std::log(q / p) : (q - p) - a * std::log(q / p);
    }
  }
  return acc;
}

/// integral over [c,d] of len(t) dt: the area of D = {x < t} inside the cell.
inline double triangle_area(double a, double b, double c, double d) {
  std::vector<double> pts = {c, d};
  for (double p : {a, b})
    if (p > c && p < d) pts.push_back(p);
  std::sort(pts.begin(), pts.end());
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double p = pts[i], q = pts[i + 1];
    if (q <= p) continue;
    const double m = 0.5 * (p + q);
    if (m <= a) continue;
    acc += m >= b ? (b - a) * (q - p) : (q * q - p * p) / 2.0 - a * (q - p);
  }
  return acc;
}

}  // namespace report_detail

/// Exact cell averages of v_t = clamp(1/t on {x < t}, 1/t_k) on an n x n grid
/// of the unit square. Cell averaging (rather than midpoint sampling) keeps
/// the per-slice L1 profiles exact away from the clamp region, which the
/// curvature quotient needs: its denominator t^2/2 amplifies any
/// discretization bias of j2.
inline GridFunction counterexample_direction(const GridSpec& g, double tau) {
  GridFunction v(g);
  const double dx = g.dx(0), dt = g.cell_measure_time();
  for (int s = 0; s < g.num_spatial(); ++s) {
    const double a = s * dx, b = (s + 1) * dx;
    for (int k = 0; k < g.time_cells; ++k) {
      const double c = k * dt, d = (k + 1) * dt;
      v(s, k) = report_detail::clamped_profile_mass(a, b, c, d, tau) / (dx * dt);
    }
  }
  return v;
}

/// Grid representation of -F': 1 on every cell meeting D = {x < t}, 1/2 on
/// the rest. Inflating D to the grid-aligned cover keeps |F'| < 1 off D,
/// shrinks back to D under refinement, and makes the discrete pairing with
/// the (D-supported) clamped direction exact; averaging -F' on the diagonal
/// cells instead would bias the pairing by O(dx log n), which the quotient's
/// 1/t amplification cannot tolerate.
inline GridFunction counterexample_weight(const GridSpec& g) {
  GridFunction w(g);
  const double dx = g.dx(0), dt = g.cell_measure_time();
  for (int s = 0; s < g.num_spatial(); ++s) {
    const double a = s * dx, b = (s + 1) * dx;
    for (int k = 0; k < g.time_cells; ++k) {
      const double c = k * dt, d = (k + 1) * dt;
      const double frac = report_detail::triangle_area(a, b, c, d) / (dx * dt);
      w(s, k) = frac > 0.0 ? 1.0 : 0.5;
    }
  }
  return w;
}

/// Reproduce the curvature study of G2 at u = 0: for each t of the schedule,
/// j2 of the clamped direction, its pairing with -F', and the second-order
/// difference quotient, Richardson-extrapolated to the limit. The analytic
/// columns are (1 - 2t/3)^(1/2) and 1 - t/2; the quotient limit is 1/3.
inline CounterexampleTable reproduce_j2_counterexample(std::span<const double> schedule,
                                                       int grid_n = 512) {
  if (schedule.size() < 2) throw ConfigError("counterexample: schedule needs >= 2 values");
  for (std::size_t i = 1; i < schedule.size(); ++i)
    if (!(schedule[i] < schedule[i - 1]))
      throw ConfigError("counterexample: schedule must decrease strictly");

  const GridSpec g = make_grid_1d(grid_n, grid_n);
  const GridFunction u0 = GridFunction::zeros(g);
  const GridFunction w = counterexample_weight(g);
  const Penalty pen{SparsityKind::J2, 1.0, {-1.0, 1.0}};

  CounterexampleTable out;
  out.grid_n = grid_n;
  for (double t : schedule) {
    CounterexampleRow row;
    row.t = t;
    const GridFunction vt = counterexample_direction(g, t);
    row.j2_grid = j_value(SparsityKind::J2, vt);
    row.j2_analytic = std::sqrt(1.0 - 2.0 * t / 3.0);
    row.pairing_grid = inner(w, vt);
    row.pairing_analytic = 1.0 - t / 2.0;
    const ExtReal q = curvature_quotient(pen, u0, w, vt, t);
    row.quotient = q.value();
    out.rows.push_back(row);
  }

  // First-order Richardson on consecutive pairs. Columns whose clamp region
  // t < tau spans fewer than 8 time cells are unresolved (the quotient
  // degenerates linearly there) and are excluded from the extrapolation.
  // Among the resolved extrapolants, the reported limit averages the two
  // most mutually consistent consecutive ones, balancing the O(t) model
  // error at large t against the resolution error at small t.
  const double dt = 1.0 / grid_n;
  auto resolved = [&](double tau) { return tau >= 8.0 * dt; };
  std::vector<double> extr;
  for (std::size_t i = 0; i + 1 < out.rows.size(); ++i) {
    const double t0 = out.rows[i].t, t1 = out.rows[i + 1].t;
    if (!resolved(t1)) continue;
    const double q0 = out.rows[i].quotient, q1 = out.rows[i + 1].quotient;
    extr.push_back(q1 + (q1 - q0) * t1 / (t0 - t1));
  }
  if (extr.empty()) {
    // grid too coarse for any resolved pair; fall back to the first pair
    const double t0 = out.rows[0].t, t1 = out.rows[1].t;
    const double q0 = out.rows[0].quotient, q1 = out.rows[1].quotient;
    out.extrapolated_limit = q1 + (q1 - q0) * t1 / (t0 - t1);
  } else if (extr.size() == 1) {
    out.extrapolated_limit = extr[0];
  } else {
    std::size_t best = 0;
    double best_gap = std::abs(extr[1] - extr[0]);
    for (std::size_t i = 0; i + 1 < extr.size(); ++i) {
      const double gap = std::abs(extr[i + 1] - extr[i]);
      if (gap < best_gap) {
        best_gap = gap;
        best = i;
      }
    }
    out.extrapolated_limit = 0.5 * (extr[best] + extr[best + 1]);
  }
  return out;
}

inline std::vector<double> default_counterexample_schedule(double t_min = 0.5 / 1024.0) {
  std::vector<double> s;
  for (double t = 0.25; t >= t_min * (1.0 - 1e-12); t *= 0.5) s.push_back(t);
  return s;
}

// -- structured analysis report ----------------------------------------------------

struct CriticalSampleResult {
  int id = 0;
  double fpp = 0.0;          // F''(u)(v, v)
  ExtReal gpp;               // G''(u, -F'(u); v)
  bool gpp_known = true;     // false: j2 at u = 0 (open problem)
  bool gpp_divergent = false;
  double sum = 0.0;          // fpp + gpp when known and finite
  bool pass = false;         // sum > 0
};

struct GrowthProbe {
  int sample_count = 0;
  double radius = 0.0;
  double fitted_c = 0.0;   // 2 * min margin
  double min_margin = 0.0; // min (J(u) - J(u*)) / ||u - u*||^2
  bool pass = false;
};

struct QuotientCurve {
  int direction_id = 0;
  std::vector<double> t;
  std::vector<double> quotient;
  std::vector<double> closed_form_gap;  // |quotient - G''| where known
};

struct SocReport {
  int schema_version = 1;
  std::string generated_at;
  std::string kind;
  std::string error;  // nonempty: the analysis aborted and the report is partial
  double first_order_residual = 0.0;
  bool first_order_pass = false;
  int solver_iterations = 0;
  bool solver_converged = false;
  double objective = 0.0;
  bool base_is_zero = false;
  std::vector<CriticalSampleResult> critical_samples;
  GrowthProbe growth;
  std::vector<QuotientCurve> curves;
  bool necessary_condition_violation = false;
  std::optional<CounterexampleTable> counterexample;
};

namespace report_detail {

inline ordered_json to_json(const SocReport& r) {
  ordered_json j;
  j["schema_version"] = r.schema_version;
  j["generated_at"] = r.generated_at;
  j["kind"] = r.kind;
  j["status"] = r.error.empty() ? "complete" : "failed";
  if (!r.error.empty()) j["error"] = r.error;
  j["first_order"] = {{"residual", r.first_order_residual}, {"pass", r.first_order_pass}};
  j["solver"] = {{"iterations", r.solver_iterations},
                 {"converged", r.solver_converged},
                 {"objective", r.objective}};
  j["base_is_zero"] = r.base_is_zero;
  ordered_json samples = ordered_json::array();
  for (const auto& s : r.critical_samples) {
    ordered_json e;
    e["id"] = s.id;
    e["fpp"] = s.fpp;
    if (!s.gpp_known)
      e["gpp"] = "unknown";
    else if (s.gpp.is_pos_inf())
      e["gpp"] = "inf";
    else
      e["gpp"] = s.gpp.value();
    e["gpp_divergent"] = s.gpp_divergent;
    e["sum"] = s.sum;
    e["pass"] = s.pass;
    samples.push_back(e);
  }
  j["critical_samples"] = samples;
  j["growth"] = {{"sample_count", r.growth.sample_count},
                 {"radius", r.growth.radius},
                 {"fitted_c", r.growth.fitted_c},
                 {"min_margin", r.growth.min_margin},
                 {"pass", r.growth.pass}};
  j["necessary_condition_violation"] = r.necessary_condition_violation;
  if (r.counterexample) {
    ordered_json ce;
    ce["grid_n"] = r.counterexample->grid_n;
    ordered_json rows = ordered_json::array();
    for (const auto& row : r.counterexample->rows)
      rows.push_back({{"t", row.t},
                      {"j2", row.j2_grid},
                      {"j2_analytic", row.j2_analytic},
                      {"pairing", row.pairing_grid},
                      {"pairing_analytic", row.pairing_analytic},
                      {"quotient", row.quotient}});
    ce["rows"] = rows;
    ce["extrapolated_limit"] = r.counterexample->extrapolated_limit;
    j["counterexample"] = ce;
  } else {
    j["counterexample"] = nullptr;
  }
  return j;
}

inline std::string timestamp() {
  std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

}  // namespace report_detail

inline void write_json(const SocReport& r, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open for writing: " + path);
  os << report_detail::to_json(r).dump(2) << '\n';
}

inline void write_csv_tables(const SocReport& r, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream os(fs::path(dir) / "critical_samples.csv");
    os.precision(17);
    os << "id,fpp,gpp,sum,pass\n";
    for (const auto& s : r.critical_samples) {
      os << s.id << ',' << s.fpp << ',';
      if (!s.gpp_known) os << "unknown";
      else if (s.gpp.is_pos_inf()) os << "inf";
      else os << s.gpp.value();
      os << ',' << s.sum << ',' << (s.pass ? 1 : 0) << '\n';
    }
  }
  {
    std::ofstream os(fs::path(dir) / "quotient_curves.csv");
    os.precision(17);
    os << "direction,t,quotient,closed_form_gap\n";
    for (const auto& c : r.curves)
      for (std::size_t i = 0; i < c.t.size(); ++i)
        os << c.direction_id << ',' << c.t[i] << ',' << c.quotient[i] << ','
           << c.closed_form_gap[i] << '\n';
  }
  if (r.counterexample) {
    std::ofstream os(fs::path(dir) / "counterexample.csv");
    os.precision(17);
    os << "t,j2,j2_analytic,pairing,pairing_analytic,quotient\n";
    for (const auto& row : r.counterexample->rows)
      os << row.t << ',' << row.j2_grid << ',' << row.j2_analytic << ',' << row.pairing_grid
         << ',' << row.pairing_analytic << ',' << row.quotient << '\n';
  }
}

/// Full second-order analysis of one configured problem: solve, certify the
/// first-order condition, sample the critical cone, evaluate F'' v^2 + G''
/// per direction, probe quadratic growth in an L2 ball, and collect
/// quotient-vs-t curves for plotting.
inline SocReport analyze(const ProblemConfig& cfg, const AnalyzeOptions& opts,
                         const SolveOptions& sopts = {}) {
  cfg.validate();
  SocReport rep;
  rep.generated_at = report_detail::timestamp();
  rep.kind = to_string(cfg.penalty.kind);

  SolveResult sol;
  try {
    sol = solve_ocp(cfg, GridFunction::zeros(cfg.pde.grid), sopts);
  } catch (const Error& e) {
    // the partial report records the failure instead of vanishing with it
    rep.error = e.what();
    return rep;
  }
  rep.solver_iterations = sol.iterations;
  rep.solver_converged = sol.converged;
  rep.first_order_residual = sol.kkt;
  rep.first_order_pass = sol.kkt <= opts.first_order_tol;

  const StateTriple prep = prepare(cfg.pde, sol.u);
  const double j_base = objective_smooth(cfg.pde, prep.state, sol.u) +
                        cfg.penalty.mu * j_value(cfg.penalty.kind, sol.u);
  rep.objective = j_base;

  const SignClassification cls = classify_signs(sol.u);
  rep.base_is_zero = cls.all_zero;
  const GridFunction gradF = grad_smooth(cfg.pde, prep, sol.u);

  std::vector<GridFunction> dirs;
  if (rep.first_order_pass)
    dirs = sample_critical(cfg.penalty, sol.u, gradF, sol.lambda, opts.critical_samples,
                           opts.seed);

  for (std::size_t i = 0; i < dirs.size(); ++i) {
    CriticalSampleResult s;
    s.id = static_cast<int>(i);
    s.fpp = hess_apply(cfg.pde, prep, dirs[i], dirs[i]);
    try {
      const CurvatureValue cv =
          second_subderivative(cfg.penalty, sol.u, gradF, sol.lambda, dirs[i], cls);
      s.gpp = cv.value;
      s.gpp_divergent = cv.divergent;
      if (cv.value.is_finite()) {
        s.sum = s.fpp + cv.value.value();
        s.pass = s.sum > 0.0;
      } else {
        s.sum = std::numeric_limits<double>::infinity();
        s.pass = true;
      }
    } catch (const UnknownValue&) {
      // j2 at u = 0: only F'' v^2 plus the sign information G'' >= 0 is known
      s.gpp_known = false;
      s.sum = s.fpp;
      s.pass = s.fpp > 0.0;
    }
    if (rep.first_order_pass && s.gpp_known && s.sum < -1e-8)
      rep.necessary_condition_violation = true;
    rep.critical_samples.push_back(s);

    // quotient curve along the recovery sequence (or the clamped direction
    // for the open j2-at-zero case, where the cone itself is grid-dependent)
    QuotientCurve curve;
    curve.direction_id = static_cast<int>(i);
    const GridFunction w = (-1.0) * gradF;
    for (int level = 1; level <= opts.quotient_levels; ++level) {
      const double t = std::pow(4.0, -level);
      GridFunction vt(cfg.pde.grid);
      if (cfg.penalty.kind == SparsityKind::J2 && cls.all_zero) {
        vt = dirs[i];
        const double cap = 1.0 / t;
        for (double& x : vt.values()) x = std::clamp(x, -cap, cap);
      } else {
        vt = recovery_sequence(cfg.penalty, sol.u, dirs[i], t, gradF, sol.lambda, cls);
      }
      const ExtReal q = curvature_quotient(cfg.penalty, sol.u, w, vt, t);
      curve.t.push_back(t);
      curve.quotient.push_back(q.value());
      const auto& s_back = rep.critical_samples.back();
      curve.closed_form_gap.push_back(
          s_back.gpp_known && s_back.gpp.is_finite() && q.is_finite()
              ? std::abs(q.value() - s_back.gpp.value())
              : std::numeric_limits<double>::quiet_NaN());
    }
    rep.curves.push_back(std::move(curve));
  }

  // growth probe: uniform random feasible points in the ball plus directed
  // probes along the sampled critical directions (where growth is tight)
  std::mt19937_64 rng(opts.seed + 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> radial(0.1, 1.0);
  rep.growth.radius = opts.growth_radius;
  double min_margin = std::numeric_limits<double>::infinity();
  int used = 0;
  auto probe = [&](const GridFunction& u_probe) {
    const GridFunction d = u_probe - sol.u;
    const double dn = norm_l2(d);
    if (dn <= 1e-14 || dn > opts.growth_radius * (1.0 + 1e-12)) return;
    const double j_probe = objective_smooth(cfg.pde, u_probe) +
                           cfg.penalty.mu * j_value(cfg.penalty.kind, u_probe);
    min_margin = std::min(min_margin, (j_probe - j_base) / (dn * dn));
    ++used;
  };
  for (int i = 0; i < opts.growth_samples; ++i) {
    GridFunction e(cfg.pde.grid);
    for (double& x : e.values()) x = gauss(rng);
    const double en = norm_l2(e);
    if (en == 0.0) continue;
    const double r = opts.growth_radius * radial(rng);
    probe(project_box(lincomb(1.0, sol.u, r / en, e), cfg.penalty.box));
  }
  for (const auto& v : dirs) {
    probe(project_box(lincomb(1.0, sol.u, opts.growth_radius * 0.9, v), cfg.penalty.box));
    probe(project_box(lincomb(1.0, sol.u, -opts.growth_radius * 0.9, v), cfg.penalty.box));
  }
  rep.growth.sample_count = used;
  rep.growth.min_margin = used ? min_margin : 0.0;
  rep.growth.fitted_c = used ? 2.0 * min_margin : 0.0;
  rep.growth.pass = used > 0 && min_margin > 0.0;
  return rep;
}

// -- the fd-check suite --------------------------------------------------------------

struct FdCheckRow {
  std::string name;
  double observed = 0.0;
  double threshold = 0.0;
  bool larger_is_better = true;
  bool pass = false;
};

struct FdCheckReport {
  std::vector<FdCheckRow> rows;
  bool all_pass = true;

  void add(std::string name, double observed, double threshold, bool larger_is_better) {
    FdCheckRow r{std::move(name), observed, threshold, larger_is_better, false};
    r.pass = larger_is_better ? observed >= threshold : observed <= threshold;
    all_pass = all_pass && r.pass;
    rows.push_back(std::move(r));
  }
};

using DirDerivFn = std::function<double(SparsityKind, const GridFunction&, const GridFunction&)>;

/// One command aggregating the finite-difference and brute-force oracles:
/// directional derivatives, PDE gradient and Hessian, the psi bound, the
/// prox reference, and the recovery-sequence properties. The directional
/// derivative is injectable so a deliberately broken formula can be shown to
/// fail its row.
inline FdCheckReport fd_check_suite(const ProblemConfig& cfg, std::uint64_t seed = 1,
                                    const DirDerivFn& dirderiv = {}) {
  cfg.validate();
  FdCheckReport rep;
  std::mt19937_64 rng(seed);

  const DirDerivFn dd = dirderiv ? dirderiv
                                 : DirDerivFn([](SparsityKind k, const GridFunction& u,
                                                 const GridFunction& v) {
                                     return j_dir_deriv(k, u, v, classify_signs(u));
                                   });

  // directional derivatives against forward quotients
  {
    const std::vector<double> ts = {1e-3, 1e-4, 1e-5};
    const GridSpec g1 = make_grid_1d(32, 512);
    const GridFunction u1 = verify::graded_field(g1, seed, 1.2e-3);
    GridFunction v1(g1);
    {
      std::uniform_real_distribution<double> mag(0.5, 1.0);
      for (int i = 0; i < v1.size(); ++i)
        v1[i] = (u1[i] > 0.0 ? -1.0 : 1.0) * mag(rng);
    }
    rep.add("j1_dirderiv_order",
            verify::observed_order(ts, verify::dirderiv_forward_errors(SparsityKind::J1, u1, v1,
                                                                       ts, dd)),
            0.9, true);
    const GridSpec g2 = make_grid_1d(4, 12);
    const GridFunction u2 = verify::random_smooth_field(g2, seed + 1);
    const GridFunction v2 = verify::random_smooth_field(g2, seed + 2);
    rep.add("j2_dirderiv_order",
            verify::observed_order(ts, verify::dirderiv_forward_errors(SparsityKind::J2, u2, v2,
                                                                       ts, dd)),
            0.9, true);
    rep.add("j3_dirderiv_order",
            verify::observed_order(ts, verify::dirderiv_forward_errors(SparsityKind::J3, u2, v2,
                                                                       ts, dd)),
            0.9, true);
  }

  // PDE gradient and Hessian against central differences. The check runs on
  // a dedicated small instance with weak diffusion and O(1) states, so that
  // the third derivative of F stays well above roundoff and the fit measures
  // a genuine rate; the configured nonlinearity and Tikhonov weight carry
  // over when they make the problem nontrivial.
  {
    PdeConfig pde;
    pde.grid = make_grid_1d(8, 6);
    pde.kappa = 0.1;
    pde.nonlinearity = cfg.pde.nonlinearity == Nonlinearity::None ? Nonlinearity::Cubic
                                                                  : cfg.pde.nonlinearity;
    pde.nu = cfg.pde.nu > 0.0 ? cfg.pde.nu : 0.3;
    pde.newton_tol = 1e-15;
    pde.y_target = verify::random_smooth_field(pde.grid, seed + 3, 0.5);
    const GridFunction u = verify::random_smooth_field(pde.grid, seed + 4, 8.0);
    const GridFunction v = verify::random_smooth_field(pde.grid, seed + 5, 3.0);
    const GridFunction v2 = verify::random_smooth_field(pde.grid, seed + 6, 3.0);
    const StateTriple t = prepare(pde, u);
    const GridFunction grad = grad_smooth(pde, t, u);
    const double href = inner(grad, v);
    const double hess = hess_apply(pde, t, v, v2);
    std::vector<double> hs = {1e-2, 1e-3, 1e-4}, ge, he;
    for (double h : hs) {
      const double fp = objective_smooth(pde, lincomb(1.0, u, h, v));
      const double fm = objective_smooth(pde, lincomb(1.0, u, -h, v));
      ge.push_back(std::abs((fp - fm) / (2 * h) - href));
      const GridFunction gp = grad_smooth(pde, lincomb(1.0, u, h, v));
      const GridFunction gm = grad_smooth(pde, lincomb(1.0, u, -h, v));
      he.push_back(std::abs(inner(gp - gm, v2) / (2 * h) - hess));
    }
    rep.add("grad_order", verify::observed_order(hs, ge, 1e-11), 1.9, true);
    rep.add("hess_order", verify::observed_order(hs, he, 5e-13), 1.9, true);
  }

  // psi: derivative bound on random pairs
  {
    std::normal_distribution<double> gauss;
    const double dt = 1.0 / 16.0;
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<double> f(16), gdir(16);
      for (auto& x : f) x = gauss(rng);
      for (auto& x : gdir) x = gauss(rng);
      double nf2 = 0.0, ng2 = 0.0;
      for (double x : f) nf2 += x * x;
      for (double x : gdir) ng2 += x * x;
      nf2 *= dt;
      ng2 *= dt;
      if (nf2 < 1e-12) continue;
      const auto d = psi_eval(f, gdir, dt);
      worst = std::max(worst,
                       std::abs(d.third) - 6.0 * std::pow(std::sqrt(ng2), 3) / nf2);
    }
    rep.add("psi_third_bound_excess", worst, 1e-12, false);
  }

  // prox against the brute-force oracle on a tiny grid
  {
    const GridSpec g = make_grid_1d(3, 4);
    std::uniform_real_distribution<double> mu_d(0.05, 1.0), step_d(0.2, 2.0),
        val(-2.0, 2.0);
    for (auto kind : {SparsityKind::J1, SparsityKind::J2, SparsityKind::J3}) {
      double worst = 0.0;
      for (int trial = 0; trial < 5; ++trial) {
        GridFunction u(g);
        for (double& x : u.values()) x = val(rng);
        const double mu = mu_d(rng), step = step_d(rng);
        const GridFunction w = prox(kind, mu, step, u, cfg.penalty.box);
        const GridFunction ref =
            verify::prox_reference(kind, mu, step, u, cfg.penalty.box, seed + trial);
        worst = std::max(worst, norm_l2(w - ref));
      }
      rep.add(std::string("prox_oracle_gap_") + to_string(kind), worst, 1e-6, false);
    }
  }

  // recovery-sequence properties on synthetic first-order points
  {
    const GridSpec g = make_grid_2d(3, 2, 4);
    for (auto kind : {SparsityKind::J1, SparsityKind::J2, SparsityKind::J3}) {
      const auto pt = verify::make_first_order_point(kind, g, seed + 7);
      const SignClassification cls = classify_signs(pt.u);
      const auto dirs = sample_critical(pt.penalty, pt.u, pt.gradF, pt.lambda, 2, seed + 8);
      bool ok = !dirs.empty();
      for (const auto& v : dirs)
        for (int level = 1; level <= 8; ++level) {
          const auto chk = check_recovery_properties(pt.penalty, pt.u, v,
                                                     std::pow(4.0, -level), pt.gradF,
                                                     pt.lambda, cls);
          ok = ok && chk.all_ok();
        }
      rep.add(std::string("recovery_properties_") + to_string(kind), ok ? 1.0 : 0.0, 1.0, true);
    }
  }

  return rep;
}

}  // namespace stsparse
