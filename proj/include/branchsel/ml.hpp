#pragma once

// Regressors for the rule-selection label: least squares and a random forest
// of depth-limited trees, importance rankings and their aggregation over
// seeds, the feature-reduction sweep and the model file format.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "branchsel/datagen.hpp"
#include "branchsel/eval.hpp"
#include "branchsel/features.hpp"

namespace branchsel {

enum class ModelKind { Linear, Forest };

const char* model_kind_name(ModelKind k);  // linear, forest
ModelKind parse_model_kind(std::string_view text);  // throws ValidationError

/// Row-major design matrix.
using Matrix = std::vector<std::vector<double>>;

struct LinearModel {
  std::vector<double> coefficients;  // per active feature
  double intercept = 0.0;
  bool ridge = false;  // the ridge fallback was needed
  std::vector<std::string> active_features;
  Preprocessor preprocessor;

  /// z is a preprocessed row.
  double predict(std::span<const double> z) const;
};

/// Nodes in pre-order; a split node's left child follows it directly.
struct TreeNode {
  int feature = -1;  // -1 for a leaf
  double threshold = 0.0;  // left when x <= threshold
  double value = 0.0;  // mean label of the node's sample
  int right = -1;
  double impurity_decrease = 0.0;  // node weight times impurity decrease
};

struct RegressionTree {
  std::vector<TreeNode> nodes;
  double predict(std::span<const double> z) const;
  int depth() const;  // a single leaf has depth 0
};

struct ForestOptions {
  int n_trees = 100;
  int max_depth = 5;
  int min_node = 5;  // nodes with fewer rows are leaves
};

struct ForestModel {
  std::vector<RegressionTree> trees;
  int max_depth = 5;
  std::uint64_t master_seed = 0;
  std::vector<std::string> active_features;
  Preprocessor preprocessor;

  double predict(std::span<const double> z) const;  // mean over trees
};

using Model = std::variant<LinearModel, ForestModel>;

/// Least squares with intercept on preprocessed rows via the normal
/// equations, adding 1e-8 to the diagonal when they are singular. Throws
/// DegenerateDataError for no rows, LengthMismatchError and DimensionError.
LinearModel fit_linear(const Matrix& x, std::span<const double> y);

/// Bootstrapped trees, each seeded from (seed, tree index), considering
/// ceil(d/3) random features per split at midpoints of sorted distinct values.
ForestModel fit_forest(const Matrix& x, std::span<const double> y, std::uint64_t seed, const ForestOptions& options = {});

/// Feature columns after log scaling with NaN for missing entries, aligned
/// with the dataset rows that carry labels and works.
struct LearningSet {
  std::vector<std::string> names;
  Matrix x;
  std::vector<DataPoint> rows;

  std::size_t size() const { return rows.size(); }
  /// Throws MissingFeatureError.
  std::size_t column(std::string_view name) const;
};

LearningSet learning_set(const Dataset& dataset);

/// Appends a named column. Throws LengthMismatchError and ValidationError on a
/// duplicate name.
void add_feature(LearningSet& set, std::string name, std::span<const double> values);

struct TrainOptions {
  ModelKind kind = ModelKind::Linear;
  std::uint64_t seed = 1;
  std::vector<std::string> features;  // empty: all columns
  ForestOptions forest;
};

/// Fits preprocessor and regressor on the given rows.
Model train_model(const LearningSet& set, std::span<const std::size_t> rows, const TrainOptions& options);

const std::vector<std::string>& active_features(const Model& model);
const Preprocessor& model_preprocessor(const Model& model);

/// Scales an unscaled vector, then preprocesses and predicts. Throws
/// MissingFeatureError when an active feature is not one of the 17.
double predict(const Model& model, const RawFeatureVector& x);

/// Prediction from named values in any order. Throws MissingFeatureError.
double predict(const Model& model, std::span<const std::string> names, std::span<const double> values);

std::vector<double> predict_rows(const Model& model, const LearningSet& set, std::span<const std::size_t> rows);

struct ImportanceRanking {
  std::vector<std::string> names;  // most important first
  std::vector<double> scores;
};

/// |coefficient| for linear models, normalized MDI for forests (all zero when
/// no tree splits). Sorted by descending score, ties in feature order.
ImportanceRanking importance(const Model& model);

/// Sums positional scores (0 for first) per feature; ascending sum, ties by
/// name. Throws MismatchedFeatureSetError.
ImportanceRanking aggregate_rankings(std::span<const ImportanceRanking> rankings);

struct CurveRow {
  int d = 0;
  double acc = 0.0;
  double acc_large = 0.0;  // NaN when no test set had large labels
  double sgm_ratio = 1.0;
  double sgm_virtual_best = 1.0;
  double sgm_ratio_sd = 0.0;  // across seeds
  std::string dropped;  // last-ranked feature, removed for the next row
};

struct ReductionOptions {
  ModelKind kind = ModelKind::Linear;
  std::vector<std::uint64_t> seeds;
  int jobs = 1;
  double train_fraction = 0.8;
  SplitMode split_mode = SplitMode::Instance;
  ForestOptions forest;
};

/// One row per d from all columns down to 1; results do not depend on jobs.
std::vector<CurveRow> feature_reduction_experiment(const LearningSet& set, const ReductionOptions& options);

std::string curve_csv_header();
void write_curve_csv(std::ostream& out, std::span<const CurveRow> curve, std::span<const std::string> provenance);

/// Text format "model v1"; comment lines start with '#'.
void write_model(std::ostream& out, const Model& model, std::span<const std::string> provenance = {});
/// Throws ParseError.
Model read_model(std::istream& in);

}  // namespace branchsel
