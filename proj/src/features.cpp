#include "branchsel/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "branchsel/errors.hpp"

namespace branchsel {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

}  // namespace

std::size_t feature_index(std::string_view name) {
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    if (kFeatureNames[i] == name) return i;
  }
  throw MissingFeatureError("unknown feature " + std::string(name));
}

bool is_effect_feature(std::size_t index) { return index >= 4 && index <= 11; }

std::string RawFeatureVector::missing_mask() const {
  std::string mask(kNumFeatures, '0');
  for (std::size_t i = 0; i < kNumFeatures; ++i) mask[i] = missing[i] ? '1' : '0';
  return mask;
}

std::vector<double> RawFeatureVector::with_nan() const {
  std::vector<double> out(values.begin(), values.end());
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    if (missing[i]) out[i] = kNaN;
  }
  return out;
}

RawFeatureVector extract_features(const Instance& instance, const PresolveSummary& summary,
                                  const RootRelaxInfo& root, const RootSbStats& sb) {
  RawFeatureVector f;
  const DagStats dag = dag_stats(instance);
  const double n = summary.n, m = summary.m, n_tilde = summary.n_tilde;

  int int_unfixed = 0;
  for (const auto& v : instance.variables) int_unfixed += v.is_integer && v.lb < v.ub ? 1 : 0;

  f.set("pct_quadr_elements", ratio(dag.quadratic_elements, n));
  f.set("pct_int_vars", ratio(int_unfixed, n_tilde));
  f.set("pct_eq_cons", ratio(summary.equality_constraints, m));
  f.set("pct_nonlin_cons", ratio(static_cast<double>(instance.nonlinear.size()), m));

  f.set("n_int_viols", sb.n_int_viols);
  f.set("n_nonlin_viols", sb.n_nonlin_viols);
  f.set("n_spat_branch_ent_fixed", sb.spat_entities_fixed);
  auto optional_field = [&f](std::string_view name, const std::optional<double>& v) {
    const std::size_t i = feature_index(name);
    f.values[i] = v.value_or(0.0);
    f.missing[i] = !v.has_value();
  };
  optional_field("avg_work_sblp_int", sb.avg_work_int);
  optional_field("avg_work_sblp_spat", sb.avg_work_spat);
  optional_field("avg_rel_bnd_chng_sblp_int", sb.avg_rel_bnd_chng_int);
  optional_field("avg_rel_bnd_chng_sblp_spat", sb.avg_rel_bnd_chng_spat);
  std::optional<double> spread;
  if (!root.cuts_added.empty()) {
    double sum = 0.0;
    for (const Cut& c : root.cuts_added) sum += cut_coeff_spread(c);
    spread = sum / static_cast<double>(root.cuts_added.size());
  }
  optional_field("avg_coeff_spread_conv_cuts", spread);

  f.set("nodes_in_dag", ratio(dag.operator_node_count, dag.operator_node_count + summary.m_tilde_nonzeros));
  f.set("pct_vars_dag", std::min(1.0, ratio(dag.vars_in_dag, n_tilde)));
  f.set("pct_vars_dag_unbnd", ratio(dag.unbounded_vars_in_dag, dag.vars_in_dag));
  f.set("pct_vars_dag_int", ratio(dag.int_vars_in_dag, dag.vars_in_dag));
  f.set("pct_quadr_nodes_dag", ratio(dag.quadratic_operator_node_count, dag.operator_node_count));
  return f;
}

RawFeatureVector scale_features(const RawFeatureVector& raw) {
  if (raw.scaled) throw ValidationError("features already scaled");
  RawFeatureVector out = raw;
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    if (!is_effect_feature(i) || raw.missing[i]) continue;
    if (raw.values[i] < 0.0) throw NegativeValueError("negative value for " + std::string(kFeatureNames[i]));
    out.values[i] = std::log10(raw.values[i] + 1.0);
  }
  out.scaled = true;
  return out;
}

Preprocessor Preprocessor::fit(std::span<const std::vector<double>> rows) {
  if (rows.empty()) throw EmptyInputError("preprocessor needs training rows");
  const std::size_t d = rows.front().size();
  Preprocessor p;
  p.impute_.assign(d, 0.0);
  p.mean_.assign(d, 0.0);
  p.stddev_.assign(d, 1.0);
  p.flat_.assign(d, 0);
  p.fitted_on_ = static_cast<int>(rows.size());
  for (const auto& r : rows) {
    if (r.size() != d) throw DimensionError("ragged training rows");
  }
  for (std::size_t j = 0; j < d; ++j) {
    double sum = 0.0;
    int present = 0;
    for (const auto& r : rows) {
      if (std::isnan(r[j])) continue;
      sum += r[j];
      ++present;
    }
    p.impute_[j] = present > 0 ? sum / present : 0.0;
    double mean = 0.0;
    for (const auto& r : rows) mean += std::isnan(r[j]) ? p.impute_[j] : r[j];
    mean /= static_cast<double>(rows.size());
    double var = 0.0;
    for (const auto& r : rows) {
      const double dv = (std::isnan(r[j]) ? p.impute_[j] : r[j]) - mean;
      var += dv * dv;
    }
    var /= static_cast<double>(rows.size());
    const double sd = std::sqrt(var);
    p.mean_[j] = mean;
    if (sd > 1e-12 * std::max(1.0, std::abs(mean))) {
      p.stddev_[j] = sd;
    } else {
      p.flat_[j] = 1;
    }
  }
  return p;
}

Preprocessor Preprocessor::fit(std::span<const RawFeatureVector> rows) {
  std::vector<std::vector<double>> dense;
  dense.reserve(rows.size());
  for (const auto& r : rows) dense.push_back(r.with_nan());
  return fit(dense);
}

std::vector<double> Preprocessor::apply(std::span<const double> row) const {
  if (row.size() != mean_.size()) throw DimensionError("row dimension differs from the fitted preprocessor");
  std::vector<double> out(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (flat_[j]) {
      out[j] = 0.0;
      continue;
    }
    const double v = std::isnan(row[j]) ? impute_[j] : row[j];
    out[j] = (v - mean_[j]) / stddev_[j];
  }
  return out;
}

Preprocessor Preprocessor::from_constants(std::vector<double> impute, std::vector<double> mean,
                                          std::vector<double> stddev, std::vector<char> flat, int fitted_on) {
  const std::size_t d = mean.size();
  if (impute.size() != d || stddev.size() != d || flat.size() != d) throw DimensionError("preprocessor constants differ in length");
  for (double s : stddev) {
    if (!(s > 0.0)) throw ValidationError("preprocessor stddev must be positive");
  }
  Preprocessor p;
  p.impute_ = std::move(impute);
  p.mean_ = std::move(mean);
  p.stddev_ = std::move(stddev);
  p.flat_ = std::move(flat);
  p.fitted_on_ = fitted_on;
  return p;
}

}  // namespace branchsel
