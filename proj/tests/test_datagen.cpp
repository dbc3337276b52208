#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "branchsel/datagen.hpp"
#include "branchsel/errors.hpp"
#include "branchsel/rng.hpp"

namespace branchsel {
namespace {

TEST(Synthetic, ByteIdenticalAcrossRuns) {
  EXPECT_EQ(write_instance(gen_synthetic(Family::BilinearKnapsack, 6, 1)),
            write_instance(gen_synthetic(Family::BilinearKnapsack, 6, 1)));
  for (Family f : kAllFamilies) {
    EXPECT_EQ(write_instance(gen_synthetic(f, 9, 77)), write_instance(gen_synthetic(f, 9, 77)));
    EXPECT_NE(write_instance(gen_synthetic(f, 9, 77)), write_instance(gen_synthetic(f, 9, 78)));
  }
}

TEST(Synthetic, SizeOutOfRange) {
  EXPECT_THROW(gen_synthetic(Family::MixedQp, 1, 1), ValidationError);
  EXPECT_THROW(gen_synthetic(Family::MixedQp, 31, 1), ValidationError);
}

TEST(Synthetic, FamilyNames) {
  for (Family f : kAllFamilies) EXPECT_EQ(parse_family(family_name(f)), f);
  EXPECT_EQ(parse_family("concave-min"), Family::ConcaveMin);
  EXPECT_THROW(parse_family("knapsack"), ValidationError);
}

// Midpoint convexity violation found by sampling: evidence that g is nonconvex.
bool sampled_nonconvex(const Instance& inst, NodeId root, Rng& rng) {
  const auto box = inst.bounds();
  std::vector<double> a(box.size()), b(box.size()), m(box.size());
  for (int trial = 0; trial < 4000; ++trial) {
    for (std::size_t j = 0; j < box.size(); ++j) {
      a[j] = rng.uniform(box[j].lo, box[j].hi);
      b[j] = rng.uniform(box[j].lo, box[j].hi);
      m[j] = 0.5 * (a[j] + b[j]);
    }
    const double ga = eval(inst.dag, root, a), gb = eval(inst.dag, root, b), gm = eval(inst.dag, root, m);
    if (gm > 0.5 * (ga + gb) + 1e-9 * (1.0 + std::abs(gm))) return true;
  }
  return false;
}

TEST(Synthetic, ParsesPresolvesAndIsNonconvex) {
  Rng rng(5);
  for (Family f : kAllFamilies) {
    for (int size = kMinSyntheticSize; size <= kMaxSyntheticSize; size += 2) {
      for (std::uint64_t seed : {1u, 2u, 3u}) {
        const Instance inst = gen_synthetic(f, size, seed);
        const std::string text = write_instance(inst);
        const Instance back = parse_instance(text);
        ASSERT_TRUE(structurally_equal(inst, back)) << text;
        ASSERT_NO_THROW(presolve(back)) << text;
        EXPECT_EQ(inst.n(), size + 1);
        bool nonconvex = false;
        for (const auto& c : inst.nonlinear) nonconvex = nonconvex || sampled_nonconvex(inst, c.root, rng);
        EXPECT_TRUE(nonconvex) << text;
      }
    }
  }
}

TEST(Synthetic, IntegerShareVariesWithSeed) {
  for (Family f : kAllFamilies) {
    std::set<int> counts;
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
      const Instance inst = gen_synthetic(f, 12, seed);
      int ints = 0;
      for (const auto& v : inst.variables) ints += v.is_integer ? 1 : 0;
      EXPECT_GE(ints, 1);
      EXPECT_LE(ints, 11);
      counts.insert(ints);
    }
    EXPECT_GE(counts.size(), 3u) << family_name(f);
  }
}

TEST(Corpus, DeterministicRoundRobin) {
  CorpusOptions opt;
  opt.count = 12;
  opt.seed = 9;
  const auto a = make_corpus(opt);
  const auto b = make_corpus(opt);
  ASSERT_EQ(a.size(), 12u);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].id, b[k].id);
    EXPECT_EQ(write_instance(a[k].instance), write_instance(b[k].instance));
    EXPECT_EQ(a[k].id, a[k].instance.name);
  }
  EXPECT_EQ(a[0].id.rfind("bilinear_knapsack-n", 0), 0u);
  EXPECT_EQ(a[1].id.rfind("concave_min-n", 0), 0u);
  EXPECT_EQ(a[2].id.rfind("mixed_qp-n", 0), 0u);
  EXPECT_EQ(a[3].id.rfind("boxqp_int-n", 0), 0u);
}

TEST(Label, Examples) {
  const auto ok = SolveStatus::Optimal, lim = SolveStatus::WorkLimit;
  EXPECT_EQ(*compute_label(1000, 1000, ok, ok, 100000).label, 0.0);
  EXPECT_NEAR(*compute_label(4040, 395, ok, ok, 100000).label, 1.0, 1e-12);
  const LabelResult both = compute_label(5000, 5001, lim, lim, 5000);
  EXPECT_TRUE(both.filtered);
  EXPECT_FALSE(both.label.has_value());
  const LabelResult one = compute_label(5003, 90, lim, ok, 5000);
  EXPECT_TRUE(one.censored);
  EXPECT_NEAR(*one.label, std::log10(5010.0 / 100.0), 1e-12);
  const LabelResult other = compute_label(90, 5003, ok, lim, 5000);
  EXPECT_NEAR(*other.label, -std::log10(5010.0 / 100.0), 1e-12);
}

TEST(Label, Antisymmetric) {
  Rng rng(12);
  for (int k = 0; k < 500; ++k) {
    const long a = rng.integer(0, 100000), b = rng.integer(0, 100000);
    const auto ab = compute_label(a, b, SolveStatus::Optimal, SolveStatus::Infeasible, 200000);
    const auto ba = compute_label(b, a, SolveStatus::Infeasible, SolveStatus::Optimal, 200000);
    EXPECT_FALSE(ab.censored);
    EXPECT_NEAR(*ab.label, -*ba.label, 1e-12);
  }
}

DataPoint row(std::string id, int seed, int nodes_m, int nodes_p) {
  DataPoint p;
  p.instance_id = std::move(id);
  p.permutation_seed = seed;
  p.nodes_mixed = nodes_m;
  p.nodes_preferint = nodes_p;
  p.work_mixed = 100;
  p.work_preferint = 50;
  p.label = *compute_label(100, 50, SolveStatus::Optimal, SolveStatus::Optimal, 1000).label;
  return p;
}

TEST(Filter, ReasonsAndKeptRows) {
  Dataset ds;
  ds.rows.push_back(row("b", 0, 1, 7));
  ds.rows.push_back(row("a", 0, 5, 7));
  ds.rows.push_back(row("a", 1, 5, 1));
  DataPoint lim = row("c", 0, 50, 60);
  lim.filtered = true;
  ds.rows.push_back(lim);
  DataPoint err = row("d", 0, 0, 0);
  err.error = "presolve: infeasible";
  ds.rows.push_back(err);
  FilterReport rep;
  const Dataset out = filter_dataset(ds, &rep);
  ASSERT_EQ(out.rows.size(), 1u);
  EXPECT_EQ(out.rows[0].instance_id, "a");
  EXPECT_EQ(out.rows[0].permutation_seed, 0);
  EXPECT_EQ(rep.kept, 1);
  EXPECT_EQ(rep.dropped.at("ROOT_SOLVED"), 2);
  EXPECT_EQ(rep.dropped.at("FILTERED"), 1);
  EXPECT_EQ(rep.dropped.at("FEATURE_ERROR"), 1);
}

TEST(Filter, DuplicateRowsRejected) {
  Dataset ds;
  ds.rows.push_back(row("a", 0, 5, 7));
  ds.rows.push_back(row("a", 0, 6, 8));
  EXPECT_THROW(filter_dataset(ds), ValidationError);
}

TEST(Filter, KeepsEverySolvedBranchingRow) {
  Rng rng(2);
  Dataset ds;
  for (int k = 0; k < 300; ++k) {
    DataPoint p = row("i" + std::to_string(k), 0, rng.integer(1, 4), rng.integer(1, 4));
    p.status_mixed = rng.bernoulli(0.8) ? SolveStatus::Optimal : SolveStatus::WorkLimit;
    p.status_preferint = rng.bernoulli(0.8) ? SolveStatus::Optimal : SolveStatus::WorkLimit;
    p.filtered = p.status_mixed == SolveStatus::WorkLimit && p.status_preferint == SolveStatus::WorkLimit;
    ds.rows.push_back(p);
  }
  std::set<std::string> kept;
  for (const auto& p : filter_dataset(ds).rows) kept.insert(p.instance_id);
  for (const auto& p : ds.rows) {
    if (p.status_mixed == SolveStatus::Optimal && p.status_preferint == SolveStatus::Optimal && p.nodes_mixed > 1 &&
        p.nodes_preferint > 1) {
      EXPECT_TRUE(kept.count(p.instance_id)) << p.instance_id;
    }
  }
}

std::vector<CorpusEntry> small_corpus() {
  CorpusOptions opt;
  opt.count = 6;
  opt.seed = 4;
  opt.min_size = 4;
  opt.max_size = 6;
  return make_corpus(opt);
}

std::string csv(const Dataset& ds) {
  std::ostringstream out;
  write_dataset_csv(out, ds);
  return out.str();
}

TEST(Dataset, OneRowPerPermutation) {
  const auto corpus = small_corpus();
  DatasetOptions opt;
  opt.work_limit = 5000;
  const Dataset ds = generate_dataset(std::span(corpus).first(1), opt);
  ASSERT_EQ(ds.rows.size(), 2u);
  EXPECT_EQ(ds.rows[0].permutation_seed, 0);
  EXPECT_EQ(ds.rows[1].permutation_seed, 1);
  const DataPoint again = make_data_point(corpus[0], 1, 5000);
  EXPECT_EQ(again.features, ds.rows[1].features);
  EXPECT_EQ(again.work_mixed, ds.rows[1].work_mixed);
  EXPECT_EQ(again.work_preferint, ds.rows[1].work_preferint);
  EXPECT_EQ(again.label, ds.rows[1].label);
}

TEST(Dataset, IdenticalAcrossRunsAndJobCounts) {
  const auto corpus = small_corpus();
  DatasetOptions opt;
  opt.work_limit = 5000;
  const std::string one = csv(generate_dataset(corpus, opt));
  EXPECT_EQ(one, csv(generate_dataset(corpus, opt)));
  opt.jobs = 3;
  EXPECT_EQ(one, csv(generate_dataset(corpus, opt)));
}

TEST(Dataset, BothLimitedRowRetainedUntilFilter) {
  const auto corpus = small_corpus();
  DatasetOptions opt;
  opt.work_limit = 1;
  const Dataset ds = generate_dataset(corpus, opt);
  ASSERT_EQ(ds.rows.size(), corpus.size() * 2);
  int limited = 0;
  for (const auto& r : ds.rows) {
    if (r.status_mixed == SolveStatus::WorkLimit && r.status_preferint == SolveStatus::WorkLimit) {
      ++limited;
      EXPECT_TRUE(r.filtered);
    }
  }
  EXPECT_GT(limited, 0);
}

TEST(Csv, HeaderAndFormat) {
  const std::string h = dataset_header();
  EXPECT_EQ(h.rfind("instance_id,permutation_seed,pct_quadr_elements,", 0), 0u);
  EXPECT_NE(h.find(",pct_quadr_nodes_dag,missing_mask,work_mixed,work_preferint,status_mixed,status_preferint,censored,label"),
            std::string::npos);
  Dataset ds;
  ds.provenance = {"tool test", "seed 1"};
  DataPoint p = row("z", 1, 3, 3);
  p.features.set("pct_int_vars", 1.0 / 3.0);
  p.features.missing[feature_index("avg_work_sblp_spat")] = true;
  ds.rows.push_back(p);
  const std::string text = csv(ds);
  EXPECT_EQ(text.rfind("# tool test\n# seed 1\n", 0), 0u);
  EXPECT_EQ(text.find('\r'), std::string::npos);
  EXPECT_NE(text.find(",0.333333333,"), std::string::npos);
  char tail[64];
  std::snprintf(tail, sizeof tail, ",0,%.9g\n", std::log10(110.0 / 60.0));
  EXPECT_NE(text.find(std::string(",00000000100000000,100,50,OPTIMAL,OPTIMAL") + tail), std::string::npos);
}

TEST(Csv, RoundTrip) {
  const auto corpus = small_corpus();
  DatasetOptions opt;
  opt.work_limit = 5000;
  Dataset ds = generate_dataset(corpus, opt);
  ds.provenance = {"round trip"};
  const std::string text = csv(ds);
  std::istringstream in(text);
  const Dataset back = read_dataset_csv(in);
  ASSERT_EQ(back.rows.size(), ds.rows.size());
  EXPECT_EQ(back.provenance, ds.provenance);
  EXPECT_EQ(csv(back), text);
  for (std::size_t k = 0; k < ds.rows.size(); ++k) {
    EXPECT_EQ(back.rows[k].features.missing, ds.rows[k].features.missing);
    EXPECT_NEAR(back.rows[k].label, ds.rows[k].label, 1e-8 * (1.0 + std::abs(ds.rows[k].label)));
  }
}

TEST(Csv, MalformedInput) {
  std::istringstream no_header("a,b\n");
  EXPECT_THROW(read_dataset_csv(no_header), ParseError);
  std::istringstream short_row(dataset_header() + "\nid,0,1\n");
  EXPECT_THROW(read_dataset_csv(short_row), ParseError);
}

TEST(Corpus, BothRulesWinOnAtLeastTenPercent) {
  CorpusOptions copt;
  copt.count = 200;
  copt.seed = 1;
  DatasetOptions dopt;
  const Dataset ds = generate_dataset(make_corpus(copt), dopt);
  int preferint = 0, mixed = 0;
  for (const auto& r : ds.rows) {
    ASSERT_TRUE(r.error.empty()) << r.instance_id << ": " << r.error;
    preferint += r.work_preferint < r.work_mixed ? 1 : 0;
    mixed += r.work_mixed < r.work_preferint ? 1 : 0;
  }
  const double n = static_cast<double>(ds.rows.size());
  EXPECT_GE(preferint / n, 0.10);
  EXPECT_GE(mixed / n, 0.10);
}

}  // namespace
}  // namespace branchsel
