#include "branchsel/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include "branchsel/errors.hpp"
#include "branchsel/rng.hpp"

namespace branchsel {

double sgm(std::span<const double> values, double shift) {
  if (values.empty()) throw EmptyInputError("sgm of no values");
  double sum = 0.0;
  for (double v : values) {
    if (v < 0.0) throw NegativeValueError("sgm of a negative value");
    sum += std::log1p(v / shift);
  }
  return shift * std::expm1(sum / static_cast<double>(values.size()));
}

BranchRule decide(double prediction) { return prediction > 0.0 ? BranchRule::PreferInt : BranchRule::Mixed; }

double accuracy(std::span<const double> predictions, std::span<const double> labels, std::optional<double> large_factor) {
  if (predictions.size() != labels.size()) throw LengthMismatchError("predictions and labels differ in length");
  const double threshold = large_factor ? std::log10(*large_factor) : -1.0;
  int counted = 0, correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (large_factor && !(std::abs(labels[i]) > threshold)) continue;
    ++counted;
    if (labels[i] == 0.0 || (predictions[i] > 0.0) == (labels[i] > 0.0)) ++correct;
  }
  if (counted == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(correct) / counted;
}

double work_under(const DataPoint& row, BranchRule rule) {
  switch (rule) {
    case BranchRule::Mixed: return static_cast<double>(row.work_mixed);
    case BranchRule::PreferInt: return static_cast<double>(row.work_preferint);
    case BranchRule::PreferSpatial: break;
  }
  throw ValidationError(std::string("no work recorded under ") + rule_name(rule));
}

RuntimeScore sgm_runtime_score(std::span<const BranchRule> decisions, std::span<const DataPoint> rows,
                               BranchRule default_rule) {
  if (decisions.size() != rows.size()) throw LengthMismatchError("decisions and rows differ in length");
  if (rows.empty()) throw EmptyInputError("no rows to score");
  std::vector<double> chosen, best, base, mixed, preferint;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    chosen.push_back(work_under(rows[i], decisions[i]));
    mixed.push_back(work_under(rows[i], BranchRule::Mixed));
    preferint.push_back(work_under(rows[i], BranchRule::PreferInt));
    best.push_back(std::min(mixed.back(), preferint.back()));
    base.push_back(work_under(rows[i], default_rule));
  }
  const double denom = sgm(base);
  RuntimeScore s;
  s.predicted = sgm(chosen) / denom;
  s.virtual_best = sgm(best) / denom;
  s.per_rule[BranchRule::Mixed] = sgm(mixed) / denom;
  s.per_rule[BranchRule::PreferInt] = sgm(preferint) / denom;
  return s;
}

EvalReport make_report(std::span<const double> predictions, std::span<const DataPoint> rows, std::uint64_t seed) {
  if (predictions.size() != rows.size()) throw LengthMismatchError("predictions and rows differ in length");
  std::vector<double> labels;
  std::vector<BranchRule> decisions;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    labels.push_back(rows[i].label);
    decisions.push_back(decide(predictions[i]));
  }
  EvalReport r;
  r.overall_accuracy = accuracy(predictions, labels);
  r.large_label_accuracy = accuracy(predictions, labels, kLargeLabelFactor);
  const RuntimeScore s = sgm_runtime_score(decisions, rows);
  r.sgm_predicted_ratio = s.predicted;
  r.sgm_virtual_best_ratio = s.virtual_best;
  r.sgm_per_rule_ratios = s.per_rule;
  r.n_test_rows = static_cast<int>(rows.size());
  r.seed = seed;
  return r;
}

SplitIndices split_indices(std::span<const DataPoint> rows, std::uint64_t seed, double train_fraction, SplitMode mode) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) throw ValidationError("train fraction outside [0, 1]");
  Rng rng(mix_seed(seed, 0x5B17ULL));
  SplitIndices out;
  if (mode == SplitMode::Row) {
    std::vector<std::size_t> order(rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    const auto k = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(order.size())));
    out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
  } else {
    const std::set<std::string> unique_ids = [&] {
      std::set<std::string> s;
      for (const auto& r : rows) s.insert(r.instance_id);
      return s;
    }();
    std::vector<std::string> ids(unique_ids.begin(), unique_ids.end());
    rng.shuffle(ids);
    const auto k = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(ids.size())));
    const std::set<std::string> train_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k));
    for (std::size_t i = 0; i < rows.size(); ++i) (train_ids.count(rows[i].instance_id) ? out.train : out.test).push_back(i);
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, std::uint64_t seed, double train_fraction, SplitMode mode) {
  const SplitIndices idx = split_indices(dataset.rows, seed, train_fraction, mode);
  std::pair<Dataset, Dataset> out;
  out.first.provenance = out.second.provenance = dataset.provenance;
  for (std::size_t i : idx.train) out.first.rows.push_back(dataset.rows[i]);
  for (std::size_t i : idx.test) out.second.rows.push_back(dataset.rows[i]);
  return out;
}

MeanSd mean_sd(std::span<const double> values) {
  double sum = 0.0;
  int n = 0;
  for (double v : values) {
    if (std::isnan(v)) continue;
    sum += v;
    ++n;
  }
  MeanSd m;
  if (n == 0) {
    m.mean = m.sd = std::numeric_limits<double>::quiet_NaN();
    return m;
  }
  m.mean = sum / n;
  if (n > 1) {
    double ss = 0.0;
    for (double v : values) {
      if (!std::isnan(v)) ss += (v - m.mean) * (v - m.mean);
    }
    m.sd = std::sqrt(ss / (n - 1));
  }
  return m;
}

namespace {

std::string percent(double v) {
  if (std::isnan(v)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * v);
  return buf;
}

std::string ratio(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string number(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::string format_report_table(const std::optional<EvalReport>& train, const std::optional<EvalReport>& test) {
  auto cell = [](const std::optional<EvalReport>& r, auto field) { return r ? field(*r) : std::string("-"); };
  struct Line {
    const char* label;
    std::string a, b;
  };
  const std::vector<Line> lines = {
      {"Accuracy", "", ""},
      {"  Overall", cell(train, [](const EvalReport& r) { return percent(r.overall_accuracy); }),
       cell(test, [](const EvalReport& r) { return percent(r.overall_accuracy); })},
      {"  LargeLabel", cell(train, [](const EvalReport& r) { return percent(r.large_label_accuracy); }),
       cell(test, [](const EvalReport& r) { return percent(r.large_label_accuracy); })},
      {"Time factor (sgm)", "", ""},
      {"  Predicted", cell(train, [](const EvalReport& r) { return ratio(r.sgm_predicted_ratio); }),
       cell(test, [](const EvalReport& r) { return ratio(r.sgm_predicted_ratio); })},
      {"  Virtual Best", cell(train, [](const EvalReport& r) { return ratio(r.sgm_virtual_best_ratio); }),
       cell(test, [](const EvalReport& r) { return ratio(r.sgm_virtual_best_ratio); })},
      {"  Always prefer-int", cell(train, [](const EvalReport& r) { return ratio(r.sgm_per_rule_ratios.at(BranchRule::PreferInt)); }),
       cell(test, [](const EvalReport& r) { return ratio(r.sgm_per_rule_ratios.at(BranchRule::PreferInt)); })},
      {"Rows", cell(train, [](const EvalReport& r) { return std::to_string(r.n_test_rows); }),
       cell(test, [](const EvalReport& r) { return std::to_string(r.n_test_rows); })},
  };
  std::string out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-22s %10s %10s\n", "", "Train", "Test");
  out += buf;
  for (const Line& l : lines) {
    std::snprintf(buf, sizeof buf, "%-22s %10s %10s\n", l.label, l.a.c_str(), l.b.c_str());
    out += buf;
  }
  return out;
}

std::string report_csv_header() {
  return "set,overall_accuracy,large_label_accuracy,sgm_predicted_ratio,sgm_virtual_best_ratio,sgm_ratio_mixed,"
         "sgm_ratio_preferint,n_rows,seed";
}

std::string report_csv_row(const std::string& set, const EvalReport& r) {
  return set + "," + number(r.overall_accuracy) + "," + number(r.large_label_accuracy) + "," +
         number(r.sgm_predicted_ratio) + "," + number(r.sgm_virtual_best_ratio) + "," +
         number(r.sgm_per_rule_ratios.at(BranchRule::Mixed)) + "," +
         number(r.sgm_per_rule_ratios.at(BranchRule::PreferInt)) + "," + std::to_string(r.n_test_rows) + "," +
         std::to_string(r.seed);
}

}  // namespace branchsel
