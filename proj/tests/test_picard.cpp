#include <gtest/gtest.h>

#include <sstream>

#include "besov/picard.hpp"

using namespace besov;

namespace {

Point vortex(const Point& x) {
  return {std::sin(M_PI * x[0]) * std::cos(M_PI * x[1]), -std::cos(M_PI * x[0]) * std::sin(M_PI * x[1]), 0};
}
Point vortex_force(const Point& x) {
  const Point u = vortex(x);
  return {2 * M_PI * M_PI * u[0], 2 * M_PI * M_PI * u[1], 0};
}

struct Setup {
  StokesSolver solver{Domain::unit_square(), 1.0 / 32};
  StateNorm norm{solver.grid_ptr()};
  Surrogates sg = measure_surrogates(solver, norm, 1);
};

const Setup& setup() {
  static const Setup s;
  return s;
}

bool bitwise_equal(const FlowState& a, const FlowState& b) {
  for (int k = 0; k < a.dim(); ++k)
    if (a.u.v[k] != b.u.v[k]) return false;
  return a.pressure == b.pressure;
}

}  // namespace

TEST(Contraction, Examples) {
  auto c = contraction_condition(1, 1, 0.2, 0.0, 1);
  EXPECT_TRUE(c.holds);
  EXPECT_NEAR(c.margin, 0.05, 1e-15);
  c = contraction_condition(1, 1, 0.1, 0.1, 1);
  EXPECT_TRUE(c.holds);
  EXPECT_FALSE(contraction_condition(1, 1, 0.3, 0.0, 1).holds);
  EXPECT_FALSE(contraction_condition(1, 1, 0.15, 0.15, 1).holds);
  EXPECT_TRUE(contraction_condition(1, 0, 100, 100, 1).holds);
  EXPECT_THROW(contraction_condition(1, -1, 0.1, 0.1, 1), DomainError);
  EXPECT_THROW(contraction_condition(1, 1, 0.1, 0.1, 0), DomainError);
}

TEST(Contraction, BallRadius) {
  EXPECT_DOUBLE_EQ(ball_radius(2, 0.5, 4), 1.0 / 8);
  EXPECT_TRUE(std::isinf(ball_radius(2, 0, 4)));
}

TEST(Norms, DataNorms) {
  const auto& s = setup();
  EXPECT_EQ(force_norm(s.solver.grid(), zero_field()), 0.0);
  EXPECT_EQ(boundary_data_norm(s.solver.grid(), zero_field()), 0.0);
  // unit force over the unit square
  EXPECT_NEAR(force_norm(s.solver.grid(), [](const Point&) { return Point{1, 0, 0}; }), 1.0, 0.1);
  EXPECT_GT(boundary_data_norm(s.solver.grid(), vortex), 0.0);
}

TEST(Norms, StateNormNeedsDyadicSpacing) {
  const StokesSolver odd(Domain::unit_square(), 1.0 / 24);
  EXPECT_THROW(StateNorm(odd.grid_ptr()), ConfigError);
}

TEST(Norms, StateNormIsAHomogeneousSeminorm) {
  const auto& s = setup();
  const auto st = s.solver.solve({vortex_force, vortex}, 1e-10);
  auto twice = st;
  for (auto& c : twice.u.v)
    for (auto& v : c) v *= 2;
  for (auto& p : twice.pressure) p *= 2;
  const VectorField g2 = [](const Point& x) {
    const Point u = vortex(x);
    return Point{2 * u[0], 2 * u[1], 0};
  };
  EXPECT_NEAR(s.norm(twice, g2), 2 * s.norm(st, vortex), 1e-10 * s.norm(st, vortex));
  EXPECT_EQ(s.norm(zero_state(s.solver.grid_ptr()), zero_field()), 0.0);
}

TEST(Surrogates, PositiveAndReproducible) {
  const auto& s = setup();
  EXPECT_GT(s.sg.L_norm, 0);
  EXPECT_GT(s.sg.C, 0);
  EXPECT_EQ(s.sg.probes, 20);
  const auto again = measure_surrogates(s.solver, s.norm, 1);
  EXPECT_EQ(again.L_norm, s.sg.L_norm);
  EXPECT_EQ(again.C, s.sg.C);
}

TEST(Picard, ZeroReynoldsIsOneStokesSolve) {
  const auto& s = setup();
  const ProblemData data{vortex_force, vortex, 0.0};
  const auto r = solve_navier_stokes(s.solver, s.norm, data, {1e-8, 50, s.sg, std::nullopt});
  EXPECT_EQ(r.trace.steps.size(), 1u);
  EXPECT_EQ(r.trace.termination, Termination::converged);
  EXPECT_TRUE(r.trace.condition.holds);
  EXPECT_TRUE(bitwise_equal(r.state, s.solver.solve(data, 1e-8)));
}

TEST(Picard, ContractsInsideTheGuaranteedRegime) {
  const auto& s = setup();
  const ProblemData data{vortex_force, vortex, 0.1};
  const double tol = 1e-8;
  const auto r = solve_navier_stokes(s.solver, s.norm, data, {tol, 50, s.sg, std::nullopt});
  ASSERT_TRUE(r.trace.condition.holds);
  EXPECT_FALSE(r.trace.outside_guaranteed_regime);
  EXPECT_EQ(r.trace.termination, Termination::converged);
  for (const auto& st : r.trace.steps) {
    if (!std::isnan(st.contraction_factor)) EXPECT_LT(st.contraction_factor, 1.0);
    EXPECT_TRUE(st.in_ball);
  }
  EXPECT_LT(r.trace.weak_residual, 10 * tol);
  // the result is a fixed point of one more step
  const auto next = picard_step(s.solver, r.state, data, tol);
  EXPECT_LT(s.norm(difference(next, r.state), zero_field()), 10 * tol);
}

TEST(Picard, UniqueFixedPointInTheBall) {
  const auto& s = setup();
  const ProblemData data{vortex_force, vortex, 0.1};
  const double tol = 1e-8;
  const auto a = solve_navier_stokes(s.solver, s.norm, data, {tol, 50, s.sg, std::nullopt});
  // second start: the Stokes solution scaled and perturbed, still inside the ball
  auto start = s.solver.solve({vortex_force, vortex, 0}, tol);
  Rng rng(5);
  for (auto& c : start.u.v)
    for (auto& v : c) v = 0.5 * v + 0.01 * rng.uniform(-1, 1);
  ASSERT_LT(s.norm(start, vortex), a.trace.radius);
  const auto b = solve_navier_stokes(s.solver, s.norm, data, {tol, 50, s.sg, start});
  EXPECT_EQ(b.trace.termination, Termination::converged);
  EXPECT_LT(s.norm(difference(a.state, b.state), zero_field()), 10 * tol);
}

TEST(Picard, LargeReynoldsIsFlagged) {
  const auto& s = setup();
  const ProblemData data{vortex_force, vortex, 10.0};
  // no guarantee either way; only the flags are checked
  const auto r = solve_navier_stokes(s.solver, s.norm, data, {1e-8, 15, s.sg, std::nullopt});
  EXPECT_FALSE(r.trace.condition.holds);
  EXPECT_TRUE(r.trace.outside_guaranteed_regime);
  EXPECT_LT(r.trace.condition.margin, 0);
  EXPECT_LE(r.trace.steps.size(), 15u);
  EXPECT_THROW(solve_navier_stokes(s.solver, s.norm, {vortex_force, vortex, -1}, {}), DomainError);
}

TEST(Picard, TraceCsv) {
  PicardTrace tr;
  tr.steps.push_back({1, 2.0, 0.5, std::nan(""), true, 0.25});
  tr.steps.push_back({2, 2.0, 0.125, 0.25, false, 0.25});
  std::ostringstream os;
  write_trace_csv(os, tr);
  EXPECT_EQ(os.str(),
            "iter,state_norm,diff_norm,contraction_factor,in_ball,condition_margin\n"
            "1,2,0.5,,1,0.25\n2,2,0.125,0.25,0,0.25\n");
  EXPECT_STREQ(to_string(Termination::diverged), "diverged");
}

TEST(TestFields, LatticeStaysInside) {
  const auto L = Domain::l_shape();
  const auto tests = default_test_fields(L);
  EXPECT_EQ(tests.size(), 3u * 16 * 2);
  for (const auto& t : tests) EXPECT_GT(squared_boundary_distance(L, t.support), 0.0);
}
