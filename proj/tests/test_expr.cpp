#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "branchsel/errors.hpp"
#include "branchsel/expr.hpp"
#include "random_dag.hpp"

namespace branchsel {
namespace {

TEST(Eval, SumOfProduct) {
  ExprDag d;
  const NodeId x = d.add_var(0), y = d.add_var(1);
  const NodeId f = d.add_sum({x, d.add_mul(x, y)});
  const std::vector<double> p{2.0, 3.0};
  EXPECT_DOUBLE_EQ(eval(d, f, p), 8.0);
}

TEST(Eval, LogOfZeroIsDomainError) {
  ExprDag d;
  const NodeId f = d.add_log(d.add_var(0));
  const std::vector<double> p{0.0};
  EXPECT_THROW(eval(d, f, p), DomainError);
}

TEST(Eval, ExpOfSquareMinusOne) {
  ExprDag d;
  const NodeId f = d.add_sub(d.add_exp(d.add_square(d.add_var(0))), d.add_const(1.0));
  const std::vector<double> p{0.5};
  EXPECT_NEAR(eval(d, f, p), 0.2840254167, 1e-10);
}

TEST(Eval, OverflowIsDomainError) {
  ExprDag d;
  const NodeId f = d.add_exp(d.add_var(0));
  const std::vector<double> p{1000.0};
  EXPECT_THROW(eval(d, f, p), DomainError);
}

TEST(Eval, IgnoresNodesOutsideTheRootSubgraph) {
  ExprDag d;
  const NodeId x = d.add_var(0);
  d.add_log(x);  // undefined at x = 0 but not below the root
  const NodeId f = d.add_square(x);
  const std::vector<double> p{0.0};
  EXPECT_EQ(eval(d, f, p), 0.0);
}

TEST(IntervalEval, SquareOverMixedSign) {
  ExprDag d;
  const NodeId f = d.add_square(d.add_var(0));
  const std::vector<Interval> box{{-2.0, 3.0}};
  EXPECT_EQ(interval_eval(d, f, box), (Interval{0.0, 9.0}));
}

TEST(IntervalEval, BilinearMatchesCornerEnumeration) {
  ExprDag d;
  const NodeId f = d.add_mul(d.add_var(0), d.add_var(1));
  const std::vector<Interval> box{{-1.0, 2.0}, {0.0, 3.0}};
  double lo = kInf, hi = -kInf;
  for (double a : {box[0].lo, box[0].hi}) {
    for (double b : {box[1].lo, box[1].hi}) {
      lo = std::min(lo, a * b);
      hi = std::max(hi, a * b);
    }
  }
  EXPECT_EQ(interval_eval(d, f, box), (Interval{lo, hi}));
  EXPECT_EQ(interval_eval(d, f, box), (Interval{-3.0, 6.0}));
}

TEST(IntervalEval, DependencyLoss) {
  ExprDag d;
  const NodeId x = d.add_var(0);
  const NodeId f = d.add_sub(x, x);
  const std::vector<Interval> box{{0.0, 1.0}};
  EXPECT_EQ(interval_eval(d, f, box), (Interval{-1.0, 1.0}));
}

TEST(IntervalEval, LogOfNonPositiveIntervalThrows) {
  ExprDag d;
  const NodeId f = d.add_log(d.add_var(0));
  const std::vector<Interval> neg{{-2.0, 0.0}};
  EXPECT_THROW(interval_eval(d, f, neg), DomainError);
  const std::vector<Interval> straddle{{-1.0, 1.0}};
  EXPECT_EQ(interval_eval(d, f, straddle).lo, -kInf);
}

TEST(IntervalEval, OddAndEvenPowers) {
  const Interval a{-2.0, 1.0};
  EXPECT_EQ(pow_int(a, 3), (Interval{-8.0, 1.0}));
  EXPECT_EQ(pow_int(a, 4), (Interval{0.0, 16.0}));
  EXPECT_EQ(pow_int(Interval{-3.0, -1.0}, 2), (Interval{1.0, 9.0}));
}

TEST(IntervalEval, UnboundedTimesZero) {
  EXPECT_EQ(Interval::point(0.0) * Interval::whole(), Interval::point(0.0));
}

TEST(Gradient, Product) {
  ExprDag d;
  const NodeId f = d.add_mul(d.add_var(0), d.add_var(1));
  const std::vector<double> p{2.0, 3.0};
  const auto g = gradient(d, f, p);
  EXPECT_DOUBLE_EQ(g[0], 3.0);
  EXPECT_DOUBLE_EQ(g[1], 2.0);
}

TEST(Gradient, SquarePlusExp) {
  ExprDag d;
  const NodeId f = d.add_sum({d.add_square(d.add_var(0)), d.add_exp(d.add_var(1))});
  const std::vector<double> p{1.0, 0.0, 5.0};
  const auto g = gradient(d, f, p);
  EXPECT_DOUBLE_EQ(g[0], 2.0);
  EXPECT_DOUBLE_EQ(g[1], 1.0);
  EXPECT_EQ(g[2], 0.0);  // unreferenced
}

TEST(Gradient, MatchesCentralDifferences) {
  Rng rng(7);
  int checked = 0;
  while (checked < 200) {
    ExprDag d;
    const int nv = rng.integer(1, 4);
    const NodeId f = testing::random_expr(d, rng, nv, 4);
    std::vector<double> x(static_cast<std::size_t>(nv));
    for (auto& v : x) v = rng.uniform(-1.5, 1.5);
    std::vector<double> g;
    try {
      g = gradient(d, f, x);
    } catch (const DomainError&) {
      continue;
    }
    for (int i = 0; i < nv; ++i) {
      const double h = 1e-6 * (1.0 + std::abs(x[static_cast<std::size_t>(i)]));
      auto xp = x, xm = x;
      xp[static_cast<std::size_t>(i)] += h;
      xm[static_cast<std::size_t>(i)] -= h;
      const double fd = (eval(d, f, xp) - eval(d, f, xm)) / (2.0 * h);
      const double gi = g[static_cast<std::size_t>(i)];
      EXPECT_NEAR(gi, fd, 1e-6 * std::max(1.0, std::abs(fd))) << "case " << checked << " var " << i;
    }
    ++checked;
  }
}

TEST(IntervalEval, ContainsPointValues) {
  Rng rng(11);
  int checked = 0;
  while (checked < 1000) {
    ExprDag d;
    const int nv = rng.integer(1, 4);
    const NodeId f = testing::random_expr(d, rng, nv, 4);
    std::vector<Interval> box;
    std::vector<double> x;
    for (int i = 0; i < nv; ++i) {
      const double a = rng.uniform(-2.0, 2.0), b = rng.uniform(-2.0, 2.0);
      box.push_back({std::min(a, b), std::max(a, b)});
      x.push_back(rng.uniform(box.back().lo, box.back().hi));
    }
    double v;
    try {
      v = eval(d, f, x);
    } catch (const DomainError&) {
      continue;
    }
    const Interval r = interval_eval(d, f, box);
    EXPECT_LE(r.lo, v) << "case " << checked;
    EXPECT_GE(r.hi, v) << "case " << checked;
    ++checked;
  }
}

TEST(Eval, BitIdenticalAcrossRepeats) {
  Rng rng(3);
  for (int k = 0; k < 50; ++k) {
    ExprDag d;
    const NodeId f = testing::random_expr(d, rng, 3, 5);
    const std::vector<double> x{0.3, -0.7, 1.1};
    try {
      const double a = eval(d, f, x);
      const double b = eval(d, f, x);
      EXPECT_EQ(std::memcmp(&a, &b, sizeof a), 0);
    } catch (const DomainError&) {
    }
  }
}

TEST(DagStats, SingleSquare) {
  ExprDag d;
  const NodeId f = d.add_square(d.add_var(0));
  const std::vector<NodeId> roots{f};
  const std::vector<Interval> box{{0.0, 1.0}};
  const std::vector<char> ints{0};
  const DagStats s = dag_stats(d, roots, box, ints);
  EXPECT_EQ(s.vars_in_dag, 1);
  EXPECT_EQ(s.quadratic_operator_node_count, 1);
  EXPECT_EQ(s.unbounded_vars_in_dag, 0);
  EXPECT_EQ(s.operator_node_count, 1);
}

TEST(DagStats, SharedVariablesCountOnce) {
  ExprDag d;
  const NodeId x = d.add_var(0), y = d.add_var(1);
  const std::vector<NodeId> roots{d.add_mul(x, y), d.add_exp(x)};
  const std::vector<Interval> box{{0.0, kInf}, {0.0, 1.0}};
  const std::vector<char> ints{1, 0};
  const DagStats s = dag_stats(d, roots, box, ints);
  EXPECT_EQ(s.vars_in_dag, 2);
  EXPECT_EQ(s.int_vars_in_dag, 1);
  EXPECT_EQ(s.unbounded_vars_in_dag, 1);
  EXPECT_EQ(s.quadratic_operator_node_count, 1);
  EXPECT_EQ(s.quadratic_elements, 1);
  EXPECT_EQ(s.operator_node_count, 2);
}

TEST(DagStats, EmptyRootList) {
  ExprDag d;
  d.add_var(0);
  const DagStats s = dag_stats(d, {}, std::vector<Interval>{{0.0, 1.0}}, std::vector<char>{0});
  EXPECT_EQ(s, DagStats{});
}

TEST(DagStats, ScaledProductIsNotQuadratic) {
  ExprDag d;
  const NodeId f = d.add_mul(d.add_const(3.0), d.add_var(0));
  const std::vector<NodeId> roots{f};
  const DagStats s = dag_stats(d, roots, std::vector<Interval>{{0.0, 1.0}}, std::vector<char>{0});
  EXPECT_EQ(s.quadratic_operator_node_count, 0);
  EXPECT_EQ(s.quadratic_elements, 0);
}

TEST(ExprDag, RejectsMalformedNodes) {
  ExprDag d;
  EXPECT_THROW(d.add_const(std::nan("")), ValidationError);
  EXPECT_THROW(d.add_pow(d.add_var(0), 1), ValidationError);
  EXPECT_THROW(d.add_sum({d.add_var(0)}), ValidationError);
  EXPECT_THROW(d.add_neg(5), ValidationError);
  EXPECT_EQ(d.add_var(0), d.add_var(0));
  EXPECT_THROW(d.validate(0), ValidationError);  // variable 0 not in a 0-variable instance
}

}  // namespace
}  // namespace branchsel
