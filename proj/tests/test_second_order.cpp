#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "stsparse/second_order.hpp"
#include "stsparse/verify.hpp"
#include "test_support.hpp"

using namespace stsparse;
using test_support::make_synthetic_point;
using test_support::random_field;

namespace {
const SparsityKind kinds[] = {SparsityKind::J1, SparsityKind::J2, SparsityKind::J3};

GridFunction subgradient_composite(const test_support::SyntheticPoint& pt) {
  // w = mu*lambda + n = -gradF lies in del G(u) by construction
  return (-1.0) * pt.gradF;
}
}  // namespace

TEST_CASE("extended reals: total order and the upper addition convention") {
  const ExtReal pinf = ExtReal::pos_inf(), ninf = ExtReal::neg_inf();
  CHECK(ninf < ExtReal(-1e300));
  CHECK(ExtReal(1e300) < pinf);
  CHECK(ExtReal(2.0) <= ExtReal(2.0));
  CHECK(pinf.add_upper(ninf).is_pos_inf());
  CHECK(ninf.add_upper(pinf).is_pos_inf());
  CHECK(pinf.add_upper(ExtReal(5.0)).is_pos_inf());
  CHECK(ExtReal(2.0).add_upper(ExtReal(3.0)).value() == 5.0);
}

TEST_CASE("curvature quotient: zero direction gives zero for any t") {
  const GridSpec g = make_grid_2d(3, 2, 4);
  for (auto k : kinds) {
    const auto pt = make_synthetic_point(k, g, 100 + static_cast<int>(k));
    for (double t : {1.0, 1e-3, 1e-6}) {
      const ExtReal q = curvature_quotient(pt.penalty, pt.u, subgradient_composite(pt),
                                           GridFunction::zeros(g), t);
      REQUIRE(q.is_finite());
      CHECK(q.value() == 0.0);
    }
  }
}

TEST_CASE("curvature quotient: box violation is +inf") {
  const GridSpec g = make_grid_1d(3, 3);
  const Penalty pen{SparsityKind::J1, 1.0, {-1.0, 1.0}};
  const GridFunction u = GridFunction::constant(g, 0.9);
  const GridFunction v = GridFunction::constant(g, 1.0);
  const ExtReal q = curvature_quotient(pen, u, GridFunction::zeros(g), v, 0.5);
  CHECK(q.is_pos_inf());
}

TEST_CASE("nonnegativity of quotients at subgradients of G") {
  const GridSpec g = make_grid_2d(3, 2, 4);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> tdist(1e-6, 1e-1);
  for (auto k : kinds) {
    const auto pt = make_synthetic_point(k, g, 200 + static_cast<int>(k));
    const GridFunction w = subgradient_composite(pt);
    for (int trial = 0; trial < 60; ++trial) {
      const GridFunction v = random_field(g, 3000 + trial, -2.0, 2.0);
      const ExtReal q = curvature_quotient(pt.penalty, pt.u, w, v, tdist(rng));
      CHECK(q >= ExtReal(-1e-8));
    }
  }
}

TEST_CASE("sum rule: the composite quotient dominates the split parts") {
  const GridSpec g = make_grid_2d(3, 2, 3);
  for (auto k : kinds) {
    const auto pt = make_synthetic_point(k, g, 300 + static_cast<int>(k));
    // w1 = n in N(u) (the slack), w2 = mu*lambda in del(mu*j)(u)
    const GridFunction w2 = pt.penalty.mu * pt.lambda;
    const GridFunction w1 = (-1.0) * pt.gradF - w2;
    for (int trial = 0; trial < 20; ++trial) {
      const GridFunction v = random_field(g, 4000 + trial, -1.0, 1.0);
      const double t = 1e-3 * (trial + 1);
      const GridFunction step = lincomb(1.0, pt.u, t, v);
      if (detail::box_violation(step, pt.penalty.box) > 0.0) continue;
      const double q_delta = -2.0 * inner(w1, v) / t;  // indicator part
      const double q_j =
          (pt.penalty.mu * j_diff(k, pt.u, t, v) - t * inner(w2, v)) * 2.0 / (t * t);
      const ExtReal q_total = curvature_quotient(pt.penalty, pt.u, (-1.0) * pt.gradF, v, t);
      REQUIRE(q_total.is_finite());
      CHECK(q_total.value() >= q_delta + q_j - 1e-7 * (1.0 + std::abs(q_total.value())));
    }
  }
}

TEST_CASE("theta_j2: aligned directions annihilate, others are nonnegative") {
  const GridSpec g = make_grid_2d(3, 2, 4);
  const GridFunction u = random_field(g, 11, 0.2, 2.0);
  CHECK(theta_j2(u, 0.4 * u) == Catch::Approx(0.0).margin(1e-12));
  for (int trial = 0; trial < 30; ++trial)
    CHECK(theta_j2(u, random_field(g, 500 + trial)) >= -1e-12);
  CHECK_THROWS_AS(theta_j2(GridFunction::zeros(g), u), ZeroBase);
}

TEST_CASE("theta_j2 matches the hand computation on a 2x2 grid") {
  const GridSpec g = make_grid_1d(2, 2);
  GridFunction u(g), v(g);
  u(0, 0) = 1.0; u(0, 1) = 2.0; u(1, 0) = 3.0; u(1, 1) = 4.0;
  v(0, 0) = 1.0; v(0, 1) = -1.0; v(1, 0) = 2.0; v(1, 1) = 0.5;
  // dx = dt = 1/2: m = (2, 3), jOmega' = (1.5, -0.25), j2^2 = 13/2,
  // int jOmega'^2 dt = 37/32, j2' = (9/8)/sqrt(13/2),
  // Theta = (37/32 - 81/416)/sqrt(13/2) = 25/(26 sqrt(6.5))
  CHECK(theta_j2(u, v) == Catch::Approx(25.0 / (26.0 * std::sqrt(6.5))).epsilon(1e-13));
}

TEST_CASE("qform_j3: empty truncation, aligned annihilation, monotone in sigma") {
  const GridSpec g = make_grid_1d(5, 4);
  const GridFunction u = random_field(g, 21, 0.3, 1.5);
  const SignClassification cls = classify_signs(u);
  double max_norm = 0.0;
  for (double n : cls.space_l2) max_norm = std::max(max_norm, n);

  CHECK(qform_j3(u, random_field(g, 22), max_norm * 1.01) == 0.0);
  for (double sigma : {0.1, 0.5, max_norm * 0.99})
    CHECK(qform_j3(u, -2.0 * u, sigma) == Catch::Approx(0.0).margin(1e-12));

  for (int trial = 0; trial < 20; ++trial) {
    const GridFunction v = random_field(g, 600 + trial);
    double prev = qform_j3(u, v, max_norm * 1.01);
    for (double sigma : {max_norm * 0.9, 0.4, 0.2, 0.05}) {
      const double q = qform_j3(u, v, sigma);
      CHECK(q >= prev - 1e-12);
      prev = q;
    }
  }
}

TEST_CASE("qform_j3 supremum over sigma equals the j3 curvature integral") {
  const GridSpec g = make_grid_1d(4, 5);
  const auto pt = make_synthetic_point(SparsityKind::J3, g, 31);
  const auto dirs = sample_critical(pt.penalty, pt.u, pt.gradF, pt.lambda, 2, 5);
  const SignClassification cls = classify_signs(pt.u);
  double sigma_min = 1e300;
  for (int s = 0; s < g.num_spatial(); ++s)
    if (cls.space_nonzero[s]) sigma_min = std::min(sigma_min, cls.space_l2[s]);
  for (const auto& v : dirs) {
    const auto gpp = second_subderivative(pt.penalty, pt.u, pt.gradF, pt.lambda, v, cls);
    REQUIRE(gpp.value.is_finite());
    CHECK(pt.penalty.mu * qform_j3(pt.u, v, 0.5 * sigma_min, cls) ==
          Catch::Approx(gpp.value.value()).margin(1e-10));
  }
}

// -- psi -----------------------------------------------------------------------------

TEST_CASE("psi derivatives: homogeneous and orthogonal directions") {
  const double dt = 0.125;
  std::vector<double> f = {1.0, -2.0, 0.5, 3.0, -1.0, 0.25, 2.0, -0.75};
  const auto self = psi_eval(f, f, dt);
  CHECK(self.first == Catch::Approx(self.value).epsilon(1e-13));
  CHECK(self.second == Catch::Approx(0.0).margin(1e-12));
  CHECK(self.third == Catch::Approx(0.0).margin(1e-12));

  // g orthogonal to f
  std::vector<double> go(f.size(), 0.0);
  go[0] = f[1];
  go[1] = -f[0];
  double gg = 0.0, nf2 = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) nf2 += f[i] * f[i];
  for (std::size_t i = 0; i < go.size(); ++i) gg += go[i] * go[i];
  const auto orth = psi_eval(f, go, dt);
  CHECK(orth.first == Catch::Approx(0.0).margin(1e-13));
  CHECK(orth.second == Catch::Approx(gg * dt / std::sqrt(nf2 * dt)).epsilon(1e-12));
  CHECK(orth.third == Catch::Approx(0.0).margin(1e-12));

  CHECK_THROWS_AS(psi_eval(std::vector<double>(8, 0.0), f, dt), ZeroBase);
}

TEST_CASE("psi derivatives match central differences") {
  const double dt = 0.2;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> f(5), gdir(5);
    for (auto& x : f) x = gauss(rng) + 2.0;
    for (auto& x : gdir) x = gauss(rng);
    auto psi_at = [&](double h) {
      std::vector<double> fh(f);
      for (std::size_t i = 0; i < fh.size(); ++i) fh[i] += h * gdir[i];
      double n2 = 0.0;
      for (double x : fh) n2 += x * x;
      return std::sqrt(n2 * dt);
    };
    const auto d = psi_eval(f, gdir, dt);
    std::vector<double> hs = {1e-2, 1e-3, 1e-4};
    std::vector<double> e1;
    for (double h : hs)
      e1.push_back(std::abs((psi_at(h) - psi_at(-h)) / (2 * h) - d.first));
    CHECK(verify::observed_order(hs, e1, 1e-11) >= 1.9);
    // second/third stencils lose digits fast; require agreement at h = 1e-2
    const double h = 1e-2;
    const double d2 = (psi_at(h) - 2 * psi_at(0) + psi_at(-h)) / (h * h);
    const double d3 =
        (psi_at(2 * h) - 2 * psi_at(h) + 2 * psi_at(-h) - psi_at(-2 * h)) / (2 * h * h * h);
    CHECK(std::abs(d2 - d.second) <= 1e-3 * (1.0 + std::abs(d.second)));
    CHECK(std::abs(d3 - d.third) <= 1e-1 * (1.0 + std::abs(d.third)));
  }
}

TEST_CASE("psi third-derivative bound holds on random pairs") {
  const double dt = 1.0 / 16.0;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> gauss;
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
    const double bound = 6.0 * std::pow(std::sqrt(ng2), 3) / nf2;
    CHECK(std::abs(d.third) <= bound + 1e-12);
  }
}

// -- lower Taylor expansion of j2 ------------------------------------------------------

TEST_CASE("lower taylor gap of j2: zero direction and cubic decay along the ray") {
  const GridSpec g = make_grid_2d(3, 2, 4);
  const GridFunction u = random_field(g, 41, 0.3, 1.5);
  CHECK(lower_taylor_gap_j2(u, GridFunction::zeros(g)) == Catch::Approx(0.0).margin(1e-14));

  // along v = eps*u the expansion is exact to second order: gap = O(eps^3)
  std::vector<double> eps = {1e-1, 1e-2, 1e-3};
  std::vector<double> gaps;
  for (double e : eps) gaps.push_back(std::abs(lower_taylor_gap_j2(u, e * u)));
  CHECK(verify::observed_order(eps, gaps, 1e-15) >= 2.7);
}

TEST_CASE("lower taylor remainder is cubically bounded across scales") {
  const GridSpec g = make_grid_2d(3, 2, 4);
  const GridFunction u = random_field(g, 51, 0.5, 1.5);  // bounded away from zero
  const double j2u = j_value(SparsityKind::J2, u);
  std::vector<double> fitted;
  for (double scale : {1e-1, 1e-2, 1e-3}) {
    double c_max = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      GridFunction v = random_field(g, 700 + trial);
      v = (scale / norm_l2(v)) * v;
      const double gap = lower_taylor_gap_j2(u, v);
      const double vn = norm_l2(v);
      c_max = std::max(c_max, std::abs(gap) * j2u * j2u / (vn * vn * vn));
    }
    fitted.push_back(c_max);
  }
  const double cmax = *std::max_element(fitted.begin(), fitted.end());
  const double cmin = *std::min_element(fitted.begin(), fitted.end());
  CHECK(cmax / cmin <= 10.0);
}

// -- closed-form second subderivatives --------------------------------------------------

TEST_CASE("second subderivative values on and off the critical cone") {
  const GridSpec g = make_grid_2d(3, 2, 4);
  for (auto k : kinds) {
    const auto pt = make_synthetic_point(k, g, 800 + static_cast<int>(k));
    const SignClassification cls = classify_signs(pt.u);
    const auto dirs = sample_critical(pt.penalty, pt.u, pt.gradF, pt.lambda, 3, 13);
    REQUIRE_FALSE(dirs.empty());
    for (const auto& v : dirs) {
      const auto gpp = second_subderivative(pt.penalty, pt.u, pt.gradF, pt.lambda, v, cls);
      if (k == SparsityKind::J1) CHECK(gpp.value.value() == 0.0);
      if (k == SparsityKind::J2)
        CHECK(gpp.value.value() ==
              Catch::Approx(pt.penalty.mu * theta_j2(pt.u, v, cls)).epsilon(1e-12));
      if (k == SparsityKind::J3) CHECK(gpp.value >= ExtReal(-1e-12));
    }
    // non-critical direction: support on a strict-complementarity cell
    GridFunction bad = GridFunction::zeros(g);
    int cell = -1;
    for (int i = 0; i < pt.u.size(); ++i)
      if (std::abs(pt.gradF[i] + pt.penalty.mu * pt.lambda[i]) > 0.1) cell = i;
    if (cell >= 0) {
      bad[cell] = pt.u[cell] >= pt.penalty.box.upper - 1e-12 ? -1.0 : 1.0;
      const auto gpp = second_subderivative(pt.penalty, pt.u, pt.gradF, pt.lambda, bad, cls);
      CHECK(gpp.value.is_pos_inf());
    }
  }
}

TEST_CASE("j2 second subderivative at u = 0 is reported as unknown") {
  const GridSpec g = make_grid_1d(3, 3);
  const GridFunction zero = GridFunction::zeros(g);
  const Penalty pen{SparsityKind::J2, 1.0, {-1.0, 1.0}};
  // lambda with unit dual norm so that a critical direction exists
  GridFunction lam(g);
  const double c = 1.0 / std::sqrt(g.horizon);
  for (int i = 0; i < lam.size(); ++i) lam[i] = c;
  const GridFunction gradF = (-1.0) * lam;  // mu = 1
  const auto dirs = sample_critical(pen, zero, gradF, lam, 1, 3);
  REQUIRE_FALSE(dirs.empty());
  CHECK_THROWS_AS(second_subderivative(pen, zero, gradF, lam, dirs[0]), UnknownValue);
}

TEST_CASE("j3 closed form at the unit constant cross-checked against the quotient") {
  const GridSpec g = make_grid_1d(6, 8);
  const double mu = 0.8;
  const Penalty pen{SparsityKind::J3, mu, {-2.0, 2.0}};
  const GridFunction u = GridFunction::constant(g, 1.0);
  const SignClassification cls = classify_signs(u);
  GridFunction lam(g);
  for (int i = 0; i < lam.size(); ++i) lam[i] = 1.0;  // u/||u(x,.)|| with T = 1
  const GridFunction gradF = (-mu) * lam;

  GridFunction v = random_field(g, 77, -1.0, 1.0);
  REQUIRE(critical_contains(pen, u, gradF, lam, v, 1e-10).member);

  // closed form: mu * int_Omega [ int v^2 dt - (int v dt)^2 ] dx for ||u(x)|| = 1
  const double dt = g.cell_measure_time();
  double expect = 0.0;
  for (int s = 0; s < g.num_spatial(); ++s) {
    double v2 = 0.0, v1 = 0.0;
    for (int k = 0; k < g.time_cells; ++k) {
      v2 += v(s, k) * v(s, k);
      v1 += v(s, k);
    }
    expect += v2 * dt - (v1 * dt) * (v1 * dt);
  }
  expect *= mu * g.cell_measure_space();

  const auto gpp = second_subderivative(pen, u, gradF, lam, v, cls);
  REQUIRE(gpp.value.is_finite());
  CHECK(gpp.value.value() == Catch::Approx(expect).epsilon(1e-11));

  // quotient along the recovery sequence approaches the closed form
  const GridFunction w = (-1.0) * gradF;
  const double t = 1e-5;
  const GridFunction vt = recovery_sequence(pen, u, v, t, gradF, lam, cls);
  const ExtReal q = curvature_quotient(pen, u, w, vt, t);
  REQUIRE(q.is_finite());
  CHECK(std::abs(q.value() - gpp.value.value()) <= 1e-4);
}

// -- recovery sequences ------------------------------------------------------------------

TEST_CASE("recovery of the zero direction is zero") {
  const GridSpec g = make_grid_2d(3, 2, 4);
  for (auto k : kinds) {
    const auto pt = make_synthetic_point(k, g, 850 + static_cast<int>(k));
    const GridFunction vt = recovery_sequence(pt.penalty, pt.u, GridFunction::zeros(g), 1e-2,
                                              pt.gradF, pt.lambda, classify_signs(pt.u));
    CHECK(norm_l2(vt) == 0.0);
  }
}

TEST_CASE("large t zeroes the whole direction through the bands") {
  // sqrt(t) > max(|alpha|, beta, ||u||_inf) puts every cell of a small-valued
  // u into a zero band
  const GridSpec g = make_grid_1d(4, 4);
  const Penalty pen{SparsityKind::J1, 1.0, {-0.5, 0.5}};
  GridFunction u = GridFunction::constant(g, 0.15);
  GridFunction lam = GridFunction::constant(g, 1.0);
  const GridFunction gradF = (-1.0) * lam;
  GridFunction v = random_field(g, 99);
  REQUIRE(critical_contains(pen, u, gradF, lam, v, 1e-9).member);
  const GridFunction vt = recovery_sequence(pen, u, v, 1.0, gradF, lam, classify_signs(u));
  CHECK(norm_l2(vt) == 0.0);  // sqrt(1) = 1 > 0.5 covers bound and origin bands
}

TEST_CASE("recovery_sequence rejects non-critical directions") {
  const GridSpec g = make_grid_1d(4, 4);
  const auto pt = make_synthetic_point(SparsityKind::J1, g, 860);
  GridFunction bad = GridFunction::zeros(g);
  int cell = -1;
  for (int i = 0; i < pt.u.size(); ++i)
    if (std::abs(pt.gradF[i] + pt.penalty.mu * pt.lambda[i]) > 0.1) cell = i;
  if (cell < 0) return;
  bad[cell] = pt.u[cell] >= pt.penalty.box.upper - 1e-12 ? -1.0 : 1.0;
  CHECK_THROWS_AS(
      recovery_sequence(pt.penalty, pt.u, bad, 1e-3, pt.gradF, pt.lambda, classify_signs(pt.u)),
      NotCritical);
}

TEST_CASE("recovery properties hold along the schedule for every kind") {
  const GridSpec g = make_grid_2d(3, 2, 4);
  for (auto k : kinds) {
    const auto pt = make_synthetic_point(k, g, 870 + static_cast<int>(k));
    const SignClassification cls = classify_signs(pt.u);
    const auto dirs = sample_critical(pt.penalty, pt.u, pt.gradF, pt.lambda, 2, 19);
    REQUIRE_FALSE(dirs.empty());
    for (const auto& v : dirs) {
      for (int kk = 1; kk <= 10; ++kk) {
        const double t = std::pow(4.0, -kk);
        const auto chk =
            check_recovery_properties(pt.penalty, pt.u, v, t, pt.gradF, pt.lambda, cls);
        INFO("kind " << to_string(k) << " t " << t << " identity residual "
                     << chk.identity_residual);
        CHECK(chk.feasible);
        CHECK(chk.critical);
        CHECK(chk.identity);
        if (k == SparsityKind::J1) {
          REQUIRE(chk.quotient.is_finite());
          CHECK(std::abs(chk.quotient.value()) <= 1e-8);
        }
      }
    }
  }
}

// -- off-cone blow-up rate -----------------------------------------------------------------

TEST_CASE("off-cone directions blow up at rate 2*delta/t") {
  const GridSpec g = make_grid_2d(3, 2, 4);
  for (auto k : kinds) {
    const auto pt = make_synthetic_point(k, g, 880 + static_cast<int>(k));
    const SignClassification cls = classify_signs(pt.u);
    // direction supported on a strict-complementarity cell, pointing inward
    GridFunction v0 = GridFunction::zeros(g);
    int cell = -1;
    for (int i = 0; i < pt.u.size(); ++i)
      if (std::abs(pt.gradF[i] + pt.penalty.mu * pt.lambda[i]) > 0.1) cell = i;
    REQUIRE(cell >= 0);
    v0[cell] = pt.u[cell] >= pt.penalty.box.upper - 1e-12 ? -1.0 : 1.0;
    const double gap0 = inner(pt.gradF, v0) + pt.penalty.mu * j_dir_deriv(k, pt.u, v0, cls);
    REQUIRE(gap0 > 1e-6);
    for (double delta : {0.1, 0.5}) {
      const GridFunction v = (delta / gap0) * v0;
      const GridFunction w = (-1.0) * pt.gradF;
      double q_times_t = 0.0;
      for (int kk = 4; kk <= 10; ++kk) {
        const double t = std::pow(4.0, -kk);
        const ExtReal q = curvature_quotient(pt.penalty, pt.u, w, v, t);
        REQUIRE(q.is_finite());
        q_times_t = q.value() * t;
      }
      CHECK(std::abs(q_times_t - 2.0 * delta) <= 0.1 * 2.0 * delta);
    }
  }
}
