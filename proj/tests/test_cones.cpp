#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "stsparse/cones.hpp"
#include "stsparse/sparsity.hpp"
#include "test_support.hpp"

using namespace stsparse;
using test_support::make_synthetic_point;
using test_support::random_field;

namespace {
const SparsityKind kinds[] = {SparsityKind::J1, SparsityKind::J2, SparsityKind::J3};
}

TEST_CASE("project_box clamps, is idempotent, and fixes interior points") {
  const GridSpec g = make_grid_1d(4, 4);
  const Box box{-0.5, 1.0};
  CHECK(norm_l2(project_box(GridFunction::zeros(g), box)) == 0.0);
  const GridFunction high = GridFunction::constant(g, box.upper + 1.0);
  const GridFunction ph = project_box(high, box);
  for (double v : ph.values()) CHECK(v == box.upper);
  const GridFunction u = random_field(g, 3, -3.0, 3.0);
  const GridFunction p = project_box(u, box);
  const GridFunction pp = project_box(p, box);
  for (int i = 0; i < p.size(); ++i) CHECK(p[i] == pp[i]);
}

TEST_CASE("projection optimality against brute-force feasible points") {
  const GridSpec g = make_grid_1d(3, 1);
  const Box box{-1.0, 1.0};
  const GridFunction u = random_field(g, 5, -2.5, 2.5);
  const GridFunction p = project_box(u, box);
  // enumerate a fine feasible lattice
  const int m = 21;
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      for (int c = 0; c < m; ++c) {
        GridFunction w(g);
        w[0] = box.lower + a * box.width() / (m - 1);
        w[1] = box.lower + b * box.width() / (m - 1);
        w[2] = box.lower + c * box.width() / (m - 1);
        CHECK(norm_l2(p - u) <= norm_l2(w - u) + 1e-12);
      }
}

TEST_CASE("tangent cone membership") {
  const GridSpec g = make_grid_1d(3, 2);
  const Box box{-1.0, 1.0};

  SECTION("interior base accepts everything") {
    const GridFunction u = GridFunction::constant(g, 0.25);
    const GridFunction v = random_field(g, 7, -5.0, 5.0);
    CHECK(tangent_contains(u, v, box, 1e-12).member);
  }
  SECTION("sign violation at the lower bound") {
    GridFunction u = GridFunction::constant(g, 0.0);
    u(0, 0) = box.lower;
    GridFunction v = GridFunction::zeros(g);
    v(0, 0) = -1.0;
    const auto rep = tangent_contains(u, v, box, 1e-12);
    CHECK_FALSE(rep.member);
    CHECK(rep.worst_cell == 0);
    CHECK(rep.violation_measure == Catch::Approx(g.cell_measure()));
  }
  SECTION("feasible-direction construction is tangent") {
    const GridFunction u = project_box(random_field(g, 9, -2.0, 2.0), box);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const GridFunction w = random_field(g, 100 + seed, -2.0, 2.0);
      const double t = 1e-3;
      const GridFunction v = (1.0 / t) * (project_box(lincomb(1.0, u, t, w), box) - u);
      CHECK(tangent_contains(u, v, box, 1e-12).member);
    }
  }
  SECTION("infeasible base throws") {
    const GridFunction u = GridFunction::constant(g, 2.0);
    CHECK_THROWS_AS(tangent_contains(u, GridFunction::zeros(g), box, 1e-12), InfeasibleBase);
  }
}

TEST_CASE("normal cone membership") {
  const GridSpec g = make_grid_1d(3, 2);
  const Box box{-1.0, 1.0};

  SECTION("zero is in every normal cone") {
    const GridFunction u = project_box(random_field(g, 11, -2.0, 2.0), box);
    CHECK(normal_contains(u, GridFunction::zeros(g), box, 1e-12).member);
  }
  SECTION("interior cell forces w = 0") {
    const GridFunction u = GridFunction::constant(g, 0.3);
    GridFunction w = GridFunction::zeros(g);
    w(1, 1) = 0.5;
    CHECK_FALSE(normal_contains(u, w, box, 1e-12).member);
  }
  SECTION("projection residual lies in the normal cone") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const GridFunction raw = random_field(g, 200 + seed, -3.0, 3.0);
      const GridFunction u = project_box(raw, box);
      const GridFunction w = raw - u;
      CHECK(normal_contains(u, w, box, 1e-12).member);
    }
  }
}

TEST_CASE("tangent and normal members are polar-consistent") {
  const GridSpec g = make_grid_2d(3, 2, 3);
  const Box box{-1.0, 1.0};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GridFunction raw = random_field(g, 300 + seed, -3.0, 3.0);
    const GridFunction u = project_box(raw, box);
    const GridFunction w = raw - u;  // normal at u
    const GridFunction probe = random_field(g, 400 + seed, -2.0, 2.0);
    const GridFunction v = (1.0 / 1e-3) * (project_box(lincomb(1.0, u, 1e-3, probe), box) - u);
    REQUIRE(tangent_contains(u, v, box, 1e-12).member);
    REQUIRE(normal_contains(u, w, box, 1e-12).member);
    CHECK(inner(v, w) <= 1e-10 * (1.0 + norm_l2(v) * norm_l2(w)));
  }
}

TEST_CASE("critical cone: zero direction is always critical") {
  const GridSpec g = make_grid_2d(3, 2, 4);
  for (auto k : kinds) {
    const auto pt = make_synthetic_point(k, g, 500);
    const auto rep =
        critical_contains(pt.penalty, pt.u, pt.gradF, pt.lambda, GridFunction::zeros(g), 1e-10);
    CHECK(rep.member);
  }
}

TEST_CASE("critical cone rejects support on strictly complementary cells") {
  const GridSpec g = make_grid_1d(4, 4);
  for (auto k : kinds) {
    const auto pt = make_synthetic_point(k, g, 600 + static_cast<int>(k));
    // find a cell with |gradF + mu lambda| > 0 (bound slack) and load v there
    int target = -1;
    for (int i = 0; i < pt.u.size(); ++i)
      if (std::abs(pt.gradF[i] + pt.penalty.mu * pt.lambda[i]) > 0.1) target = i;
    if (target < 0) continue;
    GridFunction v = GridFunction::zeros(g);
    // tangent-feasible sign at the bound
    v[target] = pt.u[target] >= pt.penalty.box.upper - 1e-12 ? -1.0 : 1.0;
    CHECK_FALSE(critical_contains(pt.penalty, pt.u, pt.gradF, pt.lambda, v, 1e-10).member);
  }
}

TEST_CASE("critical_contains requires a stationary base") {
  const GridSpec g = make_grid_1d(3, 3);
  const auto pt = make_synthetic_point(SparsityKind::J1, g, 700);
  const GridFunction bad_grad = GridFunction::constant(g, 5.0);
  CHECK_THROWS_AS(
      critical_contains(pt.penalty, pt.u, bad_grad, pt.lambda, GridFunction::zeros(g), 1e-10),
      NotStationary);
}

TEST_CASE("criticality is scale-invariant (cone property)") {
  const GridSpec g = make_grid_2d(3, 2, 4);
  for (auto k : kinds) {
    const auto pt = make_synthetic_point(k, g, 800 + static_cast<int>(k));
    const auto dirs = sample_critical(pt.penalty, pt.u, pt.gradF, pt.lambda, 3, 17);
    for (const auto& v : dirs)
      for (double c : {0.1, 2.0, 50.0})
        CHECK(critical_contains(pt.penalty, pt.u, pt.gradF, pt.lambda, c * v, 1e-9).member);
  }
}

TEST_CASE("sampled critical directions satisfy the defining identity") {
  const GridSpec g = make_grid_2d(3, 2, 4);
  for (auto k : kinds) {
    const auto pt = make_synthetic_point(k, g, 900 + static_cast<int>(k));
    const SignClassification cls = classify_signs(pt.u);
    const auto dirs = sample_critical(pt.penalty, pt.u, pt.gradF, pt.lambda, 5, 23);
    INFO("kind " << to_string(k) << ": " << dirs.size() << " directions");
    CHECK_FALSE(dirs.empty());
    for (const auto& v : dirs) {
      CHECK(norm_l2(v) == Catch::Approx(1.0).epsilon(1e-10));
      CHECK(critical_contains(pt.penalty, pt.u, pt.gradF, pt.lambda, v, 1e-9).member);
      const double ident = inner(pt.gradF, v) + pt.penalty.mu * j_dir_deriv(k, pt.u, v, cls);
      CHECK(std::abs(ident) <= 1e-8);
    }
  }
}

TEST_CASE("strictly complementary point yields the empty cone") {
  const GridSpec g = make_grid_1d(3, 3);
  const Box box{-1.0, 1.0};
  const double mu = 1.0;
  // u at the upper bound everywhere, lambda = +1, gradF = -(mu*lambda + slack):
  // |gradF + mu lambda| = slack > 0 on every cell forces v = 0
  GridFunction u = GridFunction::constant(g, box.upper);
  GridFunction lam = GridFunction::constant(g, 1.0);
  GridFunction gradF(g);
  for (int i = 0; i < u.size(); ++i) gradF[i] = -(mu * lam[i] + 0.5);
  const Penalty pen{SparsityKind::J1, mu, box};
  const auto dirs = sample_critical(pen, u, gradF, lam, 5, 31);
  CHECK(dirs.empty());
}

TEST_CASE("sample_critical honors the requested count on a rich cone") {
  const GridSpec g = make_grid_1d(6, 6);
  const auto pt = make_synthetic_point(SparsityKind::J1, g, 1100);
  const auto dirs = sample_critical(pt.penalty, pt.u, pt.gradF, pt.lambda, 5, 53);
  CHECK(dirs.size() == 5);
  for (const auto& v : dirs) CHECK(norm_l2(v) == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("j1 samples on the zero set align with lambda = +-1 cells") {
  const GridSpec g = make_grid_1d(6, 6);
  const auto pt = make_synthetic_point(SparsityKind::J1, g, 1000);
  const SignClassification cls = classify_signs(pt.u);
  const auto dirs = sample_critical(pt.penalty, pt.u, pt.gradF, pt.lambda, 5, 41);
  REQUIRE_FALSE(dirs.empty());
  for (const auto& v : dirs)
    for (int i = 0; i < v.size(); ++i) {
      if (!cls.is_zero(i) || v[i] == 0.0) continue;
      if (v[i] > 0) CHECK(pt.lambda[i] == Catch::Approx(1.0));
      if (v[i] < 0) CHECK(pt.lambda[i] == Catch::Approx(-1.0));
    }
}
