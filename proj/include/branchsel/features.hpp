#pragma once

// Root features for predicting which branching rule is faster, and the
// imputation + standardization preprocessor applied before learning.

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "branchsel/bnb.hpp"
#include "branchsel/instance.hpp"
#include "branchsel/relax.hpp"

namespace branchsel {

inline constexpr std::size_t kNumFeatures = 17;

inline constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {
    "pct_quadr_elements",     "pct_int_vars",          "pct_eq_cons",
    "pct_nonlin_cons",        "n_int_viols",           "n_nonlin_viols",
    "n_spat_branch_ent_fixed", "avg_work_sblp_int",    "avg_work_sblp_spat",
    "avg_rel_bnd_chng_sblp_int", "avg_rel_bnd_chng_sblp_spat", "avg_coeff_spread_conv_cuts",
    "nodes_in_dag",           "pct_vars_dag",          "pct_vars_dag_unbnd",
    "pct_vars_dag_int",       "pct_quadr_nodes_dag"};

/// Index of a feature name; throws MissingFeatureError.
std::size_t feature_index(std::string_view name);

/// The effect-of-branching group (log-scaled): n_int_viols .. avg_coeff_spread_conv_cuts.
bool is_effect_feature(std::size_t index);

struct RawFeatureVector {
  std::array<double, kNumFeatures> values{};
  std::array<bool, kNumFeatures> missing{};
  bool scaled = false;

  double get(std::string_view name) const { return values[feature_index(name)]; }
  void set(std::string_view name, double v) { values[feature_index(name)] = v; }
  bool is_missing(std::string_view name) const { return missing[feature_index(name)]; }
  std::string missing_mask() const;  // 17 characters, '1' = missing

  /// Values with NaN in missing slots.
  std::vector<double> with_nan() const;
  bool operator==(const RawFeatureVector&) const = default;
};

/// instance is the presolved instance; denominators n and m come from the
/// summary (before presolve), ñ and M̃ after presolve.
RawFeatureVector extract_features(const Instance& instance, const PresolveSummary& summary,
                                  const RootRelaxInfo& root, const RootSbStats& sb);

/// log10(v + 1) on the effect-of-branching group. Throws NegativeValueError,
/// and ValidationError when the vector is already scaled.
RawFeatureVector scale_features(const RawFeatureVector& raw);

/// Training-mean imputation followed by z-scoring. Rows carry NaN for missing entries.
class Preprocessor {
 public:
  Preprocessor() = default;

  /// Throws EmptyInputError for no rows, DimensionError for ragged rows.
  static Preprocessor fit(std::span<const std::vector<double>> rows);
  static Preprocessor fit(std::span<const RawFeatureVector> rows);

  /// Throws DimensionError.
  std::vector<double> apply(std::span<const double> row) const;
  std::vector<double> apply(const RawFeatureVector& v) const { return apply(v.with_nan()); }

  std::size_t dimension() const { return mean_.size(); }
  int fitted_on() const { return fitted_on_; }
  const std::vector<double>& impute() const { return impute_; }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& stddev() const { return stddev_; }
  const std::vector<char>& flat() const { return flat_; }

  /// Rebuilds a fitted preprocessor from stored constants.
  static Preprocessor from_constants(std::vector<double> impute, std::vector<double> mean,
                                     std::vector<double> stddev, std::vector<char> flat, int fitted_on);

 private:
  std::vector<double> impute_, mean_, stddev_;
  std::vector<char> flat_;
  int fitted_on_ = 0;
};

}  // namespace branchsel
