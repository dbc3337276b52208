#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "branchsel/errors.hpp"
#include "branchsel/features.hpp"
#include "branchsel/rng.hpp"
#include "random_instance.hpp"

namespace branchsel {
namespace {

struct Extracted {
  RawFeatureVector features;
  SolveStats stats;
};

Extracted run(const std::string& text) {
  const auto [inst, summary] = presolve(parse_instance(text));
  SolveOptions options;
  options.work_limit = 2000;
  Extracted e;
  e.stats = solve(inst, options);
  e.features = extract_features(inst, summary, e.stats.root, e.stats.sb);
  return e;
}

TEST(Extract, LinearMilpHasZeroDagRatios) {
  const auto e = run(
      "minlp milp\nvar x 0 4 int\nvar y 0 4 int\nobj min : -1 x -1 y\n"
      "lin r1 le 5.5 : 2 x 1 y\nlin r2 le 5.5 : 1 x 2 y\n");
  const auto& f = e.features;
  EXPECT_EQ(f.get("pct_nonlin_cons"), 0.0);
  EXPECT_EQ(f.get("n_nonlin_viols"), 0.0);
  EXPECT_EQ(f.get("pct_int_vars"), 1.0);
  for (const char* name : {"nodes_in_dag", "pct_vars_dag", "pct_vars_dag_unbnd", "pct_vars_dag_int",
                           "pct_quadr_nodes_dag", "pct_quadr_elements"}) {
    EXPECT_EQ(f.get(name), 0.0) << name;
    EXPECT_FALSE(f.is_missing(name)) << name;
  }
  EXPECT_TRUE(f.is_missing("avg_coeff_spread_conv_cuts"));
  EXPECT_TRUE(f.is_missing("avg_work_sblp_spat"));
  EXPECT_TRUE(f.is_missing("avg_rel_bnd_chng_sblp_spat"));
}

TEST(Extract, HalfOfConstraintsNonlinear) {
  const auto e = run(
      "minlp half\nvar x 0 2 cont\nvar y 0 2 cont\nobj min : -1 x -1 y\n"
      "lin r le 3 : 1 x 1 y\nnl c le 2 : (* x y)\n");
  EXPECT_DOUBLE_EQ(e.features.get("pct_nonlin_cons"), 0.5);
  EXPECT_DOUBLE_EQ(e.features.get("pct_eq_cons"), 0.0);
}

TEST(Extract, NodesInDagAgainstLinearNonzeros) {
  // (+ (* x y) (sq z)) has three operator nodes; the linear rows carry seven nonzeros
  const std::string text =
      "minlp dag\nvar x 0 2 cont\nvar y 0 2 cont\nvar z 0 2 cont\nvar w 0 2 cont\n"
      "obj min : -1 x -1 y\n"
      "lin r1 le 5 : 1 x 1 y 1 z 1 w\nlin r2 le 4 : 1 x 1 y 1 z\n"
      "nl c le 3 : (+ (* x y) (sq z))\n";
  const auto [inst, summary] = presolve(parse_instance(text));
  const DagStats dag = dag_stats(inst);
  ASSERT_EQ(dag.operator_node_count, 3);
  ASSERT_EQ(summary.m_tilde_nonzeros, 7);
  const auto f = extract_features(inst, summary, RootRelaxInfo{}, RootSbStats{});
  EXPECT_NEAR(f.get("nodes_in_dag"), 0.3, 1e-15);
  EXPECT_NEAR(f.get("pct_vars_dag"), 3.0 / 4.0, 1e-15);
  EXPECT_NEAR(f.get("pct_quadr_nodes_dag"), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(f.get("pct_quadr_elements"), 2.0 / 4.0, 1e-15);
}

TEST(Extract, EqualitiesCountedOverOriginalRows) {
  // the equality row is fixed away by presolve yet still counts over m
  const std::string text =
      "minlp eq\nvar x 1 1 cont\nvar y 0 2 cont\nvar z 0 2 int\nobj min : 1 y\n"
      "lin r1 eq 1 : 1 x\nlin r2 le 3 : 1 y 1 z\nnl c eq 1 : (* y z)\n";
  const auto [inst, summary] = presolve(parse_instance(text));
  EXPECT_EQ(summary.m, 4);
  EXPECT_EQ(summary.n, 3);
  const auto f = extract_features(inst, summary, RootRelaxInfo{}, RootSbStats{});
  EXPECT_DOUBLE_EQ(f.get("pct_eq_cons"), 3.0 / 4.0);
  EXPECT_DOUBLE_EQ(f.get("pct_nonlin_cons"), 2.0 / 4.0);
  EXPECT_DOUBLE_EQ(f.get("pct_int_vars"), 1.0 / 2.0);
  EXPECT_DOUBLE_EQ(f.get("pct_vars_dag_int"), 1.0 / 2.0);
}

TEST(Extract, StrongBranchingFieldsCopiedOrMissing) {
  RootSbStats sb;
  sb.n_int_viols = 4;
  sb.n_nonlin_viols = 2;
  sb.spat_entities_fixed = 1;
  sb.avg_work_int = 12.5;
  sb.avg_rel_bnd_chng_int = 0.25;
  const auto [inst, summary] = presolve(parse_instance("minlp s\nvar x 0 3 int\nobj min : 1 x\n"));
  RootRelaxInfo root;
  root.cuts_added.push_back({{{0, 1.0}}, 1.0, CutOrigin::TangentConvex, 0});
  root.cuts_added.push_back({{{0, 1.0}, {0, 100.0}}, 1.0, CutOrigin::TangentConvex, 0});
  const auto f = extract_features(inst, summary, root, sb);
  EXPECT_EQ(f.get("n_int_viols"), 4.0);
  EXPECT_EQ(f.get("n_nonlin_viols"), 2.0);
  EXPECT_EQ(f.get("n_spat_branch_ent_fixed"), 1.0);
  EXPECT_EQ(f.get("avg_work_sblp_int"), 12.5);
  EXPECT_EQ(f.get("avg_rel_bnd_chng_sblp_int"), 0.25);
  EXPECT_TRUE(f.is_missing("avg_work_sblp_spat"));
  EXPECT_TRUE(f.is_missing("avg_rel_bnd_chng_sblp_spat"));
  EXPECT_FALSE(f.is_missing("avg_coeff_spread_conv_cuts"));
  EXPECT_DOUBLE_EQ(f.get("avg_coeff_spread_conv_cuts"), (cut_coeff_spread(root.cuts_added[0]) + cut_coeff_spread(root.cuts_added[1])) / 2.0);
  EXPECT_EQ(f.missing_mask(), "00000000101000000");
}

TEST(Extract, PureAndWithinRangeOnRandomInstances) {
  Rng rng(17);
  int checked = 0;
  for (int k = 0; k < 150; ++k) {
    const Instance raw = testing::random_instance(rng, 4);
    std::pair<Instance, PresolveSummary> pre;
    try {
      pre = presolve(raw);
    } catch (const InfeasibleError&) {
      continue;
    }
    SolveOptions options;
    options.work_limit = 500;
    const SolveStats stats = solve(pre.first, options);
    const auto a = extract_features(pre.first, pre.second, stats.root, stats.sb);
    const auto b = extract_features(pre.first, pre.second, stats.root, stats.sb);
    EXPECT_EQ(a, b);
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      const std::string_view name = kFeatureNames[i];
      EXPECT_TRUE(std::isfinite(a.values[i])) << name;
      EXPECT_GE(a.values[i], 0.0) << name;
      if (name.starts_with("pct_") && name != "pct_quadr_elements") EXPECT_LE(a.values[i], 1.0) << name;
      if (a.missing[i]) {
        EXPECT_TRUE(name.starts_with("avg_")) << name;
      }
    }
    ++checked;
  }
  EXPECT_GT(checked, 30);
}

TEST(Scale, LogOfValuePlusOne) {
  RawFeatureVector v;
  v.set("n_int_viols", 99.0);
  v.set("n_nonlin_viols", 0.0);
  v.set("avg_work_sblp_spat", 9.0);
  v.set("pct_int_vars", 0.5);
  v.missing[feature_index("avg_work_sblp_int")] = true;
  v.set("avg_work_sblp_int", 0.0);
  const auto s = scale_features(v);
  EXPECT_NEAR(s.get("n_int_viols"), 2.0, 1e-15);
  EXPECT_EQ(s.get("n_nonlin_viols"), 0.0);
  EXPECT_NEAR(s.get("avg_work_sblp_spat"), 1.0, 1e-15);
  EXPECT_EQ(s.get("pct_int_vars"), 0.5);
  EXPECT_TRUE(s.is_missing("avg_work_sblp_int"));
  EXPECT_TRUE(s.scaled);
  EXPECT_THROW(scale_features(s), ValidationError);
}

TEST(Scale, NegativeEffectValueThrows) {
  RawFeatureVector v;
  v.set("avg_coeff_spread_conv_cuts", -0.5);
  EXPECT_THROW(scale_features(v), NegativeValueError);
  RawFeatureVector w;
  w.set("pct_int_vars", -0.5);
  EXPECT_NO_THROW(scale_features(w));
}

TEST(Scale, EffectGroupHasEightMembers) {
  int count = 0;
  for (std::size_t i = 0; i < kNumFeatures; ++i) count += is_effect_feature(i) ? 1 : 0;
  EXPECT_EQ(count, 8);
  EXPECT_THROW(feature_index("no_such_feature"), MissingFeatureError);
}

TEST(Preprocess, MeanAndPopulationSd) {
  const std::vector<std::vector<double>> rows{{1.0}, {3.0}};
  const auto p = Preprocessor::fit(rows);
  const std::vector<double> probe{2.0};
  EXPECT_NEAR(p.apply(probe)[0], 0.0, 1e-15);
  const std::vector<double> high{3.0};
  EXPECT_NEAR(p.apply(high)[0], 1.0, 1e-15);
}

TEST(Preprocess, FlatFeatureMapsToZero) {
  const std::vector<std::vector<double>> rows{{5.0, 1.0}, {5.0, 2.0}, {5.0, 3.0}};
  const auto p = Preprocessor::fit(rows);
  EXPECT_TRUE(p.flat()[0]);
  EXPECT_FALSE(p.flat()[1]);
  EXPECT_EQ(p.stddev()[0], 1.0);
  for (const auto& r : rows) EXPECT_EQ(p.apply(r)[0], 0.0);
  const std::vector<double> other{7.0, 2.0};
  EXPECT_EQ(p.apply(other)[0], 0.0);
}

TEST(Preprocess, MissingImputedWithPresentMean) {
  const double nan = std::nan("");
  const std::vector<std::vector<double>> rows{{0.2}, {0.6}, {nan}};
  const auto p = Preprocessor::fit(rows);
  EXPECT_NEAR(p.impute()[0], 0.4, 1e-15);
  const std::vector<double> probe{nan};
  const std::vector<double> explicit_value{0.4};
  EXPECT_DOUBLE_EQ(p.apply(probe)[0], p.apply(explicit_value)[0]);
  EXPECT_EQ(p.fitted_on(), 3);
}

TEST(Preprocess, Errors) {
  const std::vector<std::vector<double>> none;
  EXPECT_THROW(Preprocessor::fit(none), EmptyInputError);
  const std::vector<std::vector<double>> ragged{{1.0, 2.0}, {1.0}};
  EXPECT_THROW(Preprocessor::fit(ragged), DimensionError);
  const std::vector<std::vector<double>> rows{{1.0, 2.0}, {2.0, 1.0}};
  const std::vector<double> shorter{1.0};
  EXPECT_THROW(Preprocessor::fit(rows).apply(shorter), DimensionError);
}

TEST(Preprocess, TrainingColumnsStandardized) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int rows = rng.integer(2, 40);
    const int d = rng.integer(1, 6);
    std::vector<std::vector<double>> train(static_cast<std::size_t>(rows), std::vector<double>(static_cast<std::size_t>(d)));
    for (auto& r : train) {
      for (auto& v : r) v = rng.bernoulli(0.15) ? std::nan("") : rng.normal() * rng.uniform(0.1, 100.0) + rng.uniform(-50, 50);
    }
    const auto p = Preprocessor::fit(train);
    for (int j = 0; j < d; ++j) {
      std::vector<double> col;
      for (const auto& r : train) col.push_back(p.apply(r)[static_cast<std::size_t>(j)]);
      const double mean = std::accumulate(col.begin(), col.end(), 0.0) / rows;
      double var = 0.0;
      for (double v : col) var += (v - mean) * (v - mean);
      var /= rows;
      EXPECT_NEAR(mean, 0.0, 1e-9);
      if (!p.flat()[static_cast<std::size_t>(j)]) EXPECT_NEAR(var, 1.0, 1e-9);
      else EXPECT_EQ(var, 0.0);
    }
  }
}

}  // namespace
}  // namespace branchsel
