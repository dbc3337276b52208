#include <gtest/gtest.h>

#include "branchsel/errors.hpp"
#include "branchsel/lp.hpp"
#include "lp_oracle.hpp"

namespace branchsel {
namespace {

LpModel unit_square_lp() {
  LpModel lp;
  lp.objective = {-1.0, -1.0};
  lp.bounds = {{0.0, 1.0}, {0.0, 1.0}};
  lp.rows.push_back({{1.0, 1.0}, Sense::Le, 1.0});
  return lp;
}

TEST(LpSolve, HandSolvedTwoVariable) {
  const auto [sol, basis] = lp_solve(unit_square_lp());
  ASSERT_EQ(sol.status, LpStatus::Optimal);
  EXPECT_NEAR(sol.objective, -1.0, 1e-9);
  EXPECT_LE(lp_max_violation(unit_square_lp(), sol.x), 1e-7);
}

TEST(LpSolve, InfeasibleRow) {
  LpModel lp;
  lp.objective = {1.0};
  lp.bounds = {{0.0, 1.0}};
  lp.rows.push_back({{1.0}, Sense::Ge, 2.0});
  EXPECT_EQ(lp_solve(lp).first.status, LpStatus::Infeasible);
}

TEST(LpSolve, UnboundedRay) {
  LpModel lp;
  lp.objective = {-1.0};
  lp.bounds = {{0.0, kInf}};
  EXPECT_EQ(lp_solve(lp).first.status, LpStatus::Unbounded);
}

TEST(LpSolve, FreeVariableAndEquality) {
  // min x + y  s.t.  x - y = 1, y >= -2 (row), x free
  LpModel lp;
  lp.objective = {1.0, 1.0};
  lp.bounds = {{-kInf, kInf}, {-kInf, kInf}};
  lp.rows.push_back({{1.0, -1.0}, Sense::Eq, 1.0});
  lp.rows.push_back({{0.0, 1.0}, Sense::Ge, -2.0});
  const auto sol = lp_solve(lp).first;
  ASSERT_EQ(sol.status, LpStatus::Optimal);
  EXPECT_NEAR(sol.objective, -3.0, 1e-9);
  EXPECT_NEAR(sol.x[0], -1.0, 1e-9);
}

TEST(LpSolve, RejectsZeroPivotLimit) {
  LpOptions opt;
  opt.pivot_limit = 0;
  EXPECT_THROW(lp_solve(unit_square_lp(), nullptr, opt), ValidationError);
}

TEST(LpSolve, IterationLimitReported) {
  LpOptions opt;
  opt.pivot_limit = 1;
  LpModel lp = unit_square_lp();
  lp.rows.push_back({{1.0, 2.0}, Sense::Le, 1.5});
  EXPECT_EQ(lp_solve(lp, nullptr, opt).first.status, LpStatus::IterLimit);
}

TEST(LpAddRows, NoRowsIsIdentity) {
  const LpModel lp = unit_square_lp();
  const LpModel same = lp_add_rows(lp, {});
  EXPECT_EQ(same.num_rows(), lp.num_rows());
  EXPECT_NEAR(lp_solve(same).first.objective, -1.0, 1e-9);
}

TEST(LpAddRows, RedundantRowKeepsOptimum) {
  const LpModel lp = lp_add_rows(unit_square_lp(), {{{0.0, 0.0}, Sense::Le, 1.0}});
  EXPECT_NEAR(lp_solve(lp).first.objective, -1.0, 1e-9);
}

TEST(LpAddRows, CutTightensAndWarmStartExtends) {
  const auto [first, basis] = lp_solve(unit_square_lp());
  const LpModel cut = lp_add_rows(unit_square_lp(), {{{1.0, 1.0}, Sense::Le, 0.5}});
  const auto warm = lp_solve(cut, &basis).first;
  ASSERT_EQ(warm.status, LpStatus::Optimal);
  EXPECT_NEAR(warm.objective, -0.5, 1e-9);
  EXPECT_NEAR(lp_solve(cut).first.objective, -0.5, 1e-9);
}

TEST(LpAddRows, DimensionMismatch) {
  EXPECT_THROW(lp_add_rows(unit_square_lp(), {{{1.0}, Sense::Le, 1.0}}), DimensionError);
}

TEST(LpSetBounds, FixesColumn) {
  const LpModel lp = lp_set_bounds(unit_square_lp(), 0, {0.0, 0.0});
  const auto sol = lp_solve(lp).first;
  EXPECT_EQ(sol.x[0], 0.0);
  EXPECT_NEAR(sol.objective, -1.0, 1e-9);
}

TEST(LpSetBounds, FixedInteriorValue) {
  const LpModel lp = lp_set_bounds(unit_square_lp(), 0, {0.3, 0.3});
  const auto sol = lp_solve(lp).first;
  EXPECT_NEAR(sol.objective, -1.0, 1e-9);
  EXPECT_NEAR(sol.x[1], 0.7, 1e-9);
}

TEST(LpSetBounds, BadIndex) {
  EXPECT_THROW(lp_set_bounds(unit_square_lp(), 2, {0.0, 1.0}), IndexError);
  EXPECT_THROW(lp_set_bounds(unit_square_lp(), -1, {0.0, 1.0}), IndexError);
}

TEST(LpSolve, MatchesVertexEnumeration) {
  Rng rng(2024);
  for (int k = 0; k < 500; ++k) {
    const LpModel lp = testing::random_lp(rng, 8);
    const auto oracle = testing::vertex_enumeration(lp);
    const auto sol = lp_solve(lp).first;
    if (!oracle.feasible) {
      EXPECT_EQ(sol.status, LpStatus::Infeasible) << "lp " << k;
      continue;
    }
    ASSERT_EQ(sol.status, LpStatus::Optimal) << "lp " << k;
    EXPECT_NEAR(sol.objective, oracle.objective, 1e-6) << "lp " << k;
    EXPECT_LE(lp_max_violation(lp, sol.x), 1e-7) << "lp " << k;
  }
}

TEST(LpSolve, WarmStartAfterBoundChangeAgreesWithCold) {
  Rng rng(99);
  for (int k = 0; k < 300; ++k) {
    const LpModel lp = testing::random_lp(rng, 8);
    const auto [root, basis] = lp_solve(lp);
    if (root.status != LpStatus::Optimal) continue;
    const int j = rng.integer(0, lp.num_cols() - 1);
    Interval b = lp.bounds[static_cast<std::size_t>(j)];
    const double split = root.x[static_cast<std::size_t>(j)];
    if (rng.bernoulli(0.5)) b.hi = std::max(b.lo, std::floor(split * 2.0) / 2.0);
    else b.lo = std::min(b.hi, std::ceil(split * 2.0) / 2.0);
    const LpModel child = lp_set_bounds(lp, j, b);
    const auto warm = lp_solve(child, &basis).first;
    const auto cold = lp_solve(child).first;
    ASSERT_EQ(warm.status, cold.status) << "lp " << k;
    if (cold.status == LpStatus::Optimal) {
      EXPECT_NEAR(warm.objective, cold.objective, 1e-6) << "lp " << k;
      EXPECT_GE(warm.objective, root.objective - 1e-9);
    }
  }
}

TEST(LpSolve, PivotCountIsDeterministic) {
  Rng rng(5);
  for (int k = 0; k < 50; ++k) {
    const LpModel lp = testing::random_lp(rng, 8);
    const auto a = lp_solve(lp).first;
    const auto b = lp_solve(lp).first;
    EXPECT_EQ(a.pivots, b.pivots);
    EXPECT_EQ(a.x, b.x);
  }
}

}  // namespace
}  // namespace branchsel
