#pragma once

// Metrics and reports: shifted geometric mean, accuracy, work ratios of rule
// decisions against the default rule, and train/test splitting.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "branchsel/bnb.hpp"
#include "branchsel/datagen.hpp"

namespace branchsel {

inline constexpr double kSgmShift = 10.0;
inline constexpr double kLargeLabelFactor = 4.0;
inline constexpr BranchRule kDefaultRule = BranchRule::Mixed;

/// exp(mean(log(x + shift))) - shift, evaluated as
/// shift * expm1(mean(log1p(x / shift))). Throws EmptyInputError and
/// NegativeValueError.
double sgm(std::span<const double> values, double shift = kSgmShift);

/// Share of rows whose decision matches the faster rule: prediction > 0 picks
/// PREFER_INT, a zero label counts as correct. With large_factor, only rows
/// with |label| > log10(large_factor) count. NaN when no row counts. Throws
/// LengthMismatchError.
double accuracy(std::span<const double> predictions, std::span<const double> labels,
                std::optional<double> large_factor = std::nullopt);

/// PREFER_INT when the predicted label is positive, else MIXED.
BranchRule decide(double prediction);

/// Work of a row under MIXED or PREFER_INT; throws ValidationError otherwise.
double work_under(const DataPoint& row, BranchRule rule);

struct RuntimeScore {
  double predicted = 1.0;
  double virtual_best = 1.0;
  std::map<BranchRule, double> per_rule;  // MIXED and PREFER_INT
};

/// Ratios sgm(work under decisions) / sgm(work under default_rule). Throws
/// LengthMismatchError and EmptyInputError.
RuntimeScore sgm_runtime_score(std::span<const BranchRule> decisions, std::span<const DataPoint> rows,
                               BranchRule default_rule = kDefaultRule);

struct EvalReport {
  double overall_accuracy = 0.0;
  double large_label_accuracy = 0.0;  // NaN without large labels
  double sgm_predicted_ratio = 1.0;
  double sgm_virtual_best_ratio = 1.0;
  std::map<BranchRule, double> sgm_per_rule_ratios;
  int n_test_rows = 0;
  std::uint64_t seed = 0;
};

/// Report for predicted labels of rows.
EvalReport make_report(std::span<const double> predictions, std::span<const DataPoint> rows, std::uint64_t seed);

enum class SplitMode { Instance, Row };

struct SplitIndices {
  std::vector<std::size_t> train, test;  // ascending
};

/// Seeded shuffle of instance ids (or rows), first train_fraction of them
/// train. Instance mode keeps all permutations of an instance on one side.
SplitIndices split_indices(std::span<const DataPoint> rows, std::uint64_t seed, double train_fraction = 0.8,
                           SplitMode mode = SplitMode::Instance);

std::pair<Dataset, Dataset> split(const Dataset& dataset, std::uint64_t seed, double train_fraction = 0.8,
                                  SplitMode mode = SplitMode::Instance);

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, 0 for one value
};

/// NaN entries are skipped; NaN mean when nothing is left.
MeanSd mean_sd(std::span<const double> values);

/// Aligned table with Train and Test columns; a missing side prints "-".
std::string format_report_table(const std::optional<EvalReport>& train, const std::optional<EvalReport>& test);

std::string report_csv_header();
std::string report_csv_row(const std::string& set, const EvalReport& report);

}  // namespace branchsel
