#pragma once

// Synthetic instance families, paired solves under MIXED and PREFER_INT,
// labels, filtering and the dataset CSV.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "branchsel/bnb.hpp"
#include "branchsel/features.hpp"
#include "branchsel/instance.hpp"

namespace branchsel {

enum class Family { BilinearKnapsack, ConcaveMin, MixedQp, BoxqpInt };

inline constexpr std::array<Family, 4> kAllFamilies = {Family::BilinearKnapsack, Family::ConcaveMin, Family::MixedQp,
                                                       Family::BoxqpInt};

const char* family_name(Family f);  // BILINEAR_KNAPSACK, ...
Family parse_family(std::string_view text);  // case-insensitive, '-' or '_'; throws ValidationError

inline constexpr int kMinSyntheticSize = 2;
inline constexpr int kMaxSyntheticSize = 30;

/// Deterministic instance with `size` decision variables plus an objective
/// variable t. Throws ValidationError for a size outside [2, 30].
Instance gen_synthetic(Family family, int size, std::uint64_t seed);

struct CorpusEntry {
  std::string id;
  Instance instance;
};

struct CorpusOptions {
  std::vector<Family> families{kAllFamilies.begin(), kAllFamilies.end()};
  int count = 200;  // total, assigned to families round-robin
  std::uint64_t seed = 1;
  int min_size = 4;
  int max_size = 10;
};

/// Instance ids are "<family>-n<size>-s<seed>" and double as instance names.
std::vector<CorpusEntry> make_corpus(const CorpusOptions& options);

struct LabelResult {
  std::optional<double> label;  // empty when FILTERED
  bool censored = false;
  bool filtered = false;
};

/// log10((work_mixed + 10) / (work_preferint + 10)); a run that hit the work
/// limit counts as work_limit (censored); both hit the limit gives FILTERED.
LabelResult compute_label(long work_mixed, long work_preferint, SolveStatus status_mixed, SolveStatus status_preferint,
                          long work_limit);

struct DataPoint {
  std::string instance_id;
  int permutation_seed = 0;
  RawFeatureVector features;  // unscaled
  long work_mixed = 0;
  long work_preferint = 0;
  SolveStatus status_mixed = SolveStatus::Optimal;
  SolveStatus status_preferint = SolveStatus::Optimal;
  int nodes_mixed = 0;
  int nodes_preferint = 0;
  bool censored = false;
  bool filtered = false;
  double label = 0.0;
  std::string error;  // non-empty when the row could not be produced
};

struct DatasetOptions {
  int permutations = 2;
  long work_limit = 20000;
  int jobs = 1;
};

struct Dataset {
  std::vector<DataPoint> rows;
  std::vector<std::string> provenance;  // comment lines without the leading '#'
};

/// One row per (instance, permutation seed 0..permutations-1), sorted by
/// (id, seed). Row errors are recorded in DataPoint::error. Output does not
/// depend on jobs.
Dataset generate_dataset(std::span<const CorpusEntry> instances, const DatasetOptions& options);

/// Runs one row: permute, presolve, solve under MIXED (features from its
/// root) and under PREFER_INT.
DataPoint make_data_point(const CorpusEntry& entry, int permutation_seed, long work_limit);

struct FilterReport {
  int kept = 0;
  std::map<std::string, int> dropped;  // ROOT_SOLVED, FILTERED, FEATURE_ERROR
};

/// Drops root-solved, FILTERED and errored rows. Throws ValidationError on a
/// duplicate (id, seed).
Dataset filter_dataset(const Dataset& dataset, FilterReport* report = nullptr);

inline constexpr std::string_view kDatasetHeaderPrefix = "instance_id,permutation_seed,";

std::string dataset_header();
void write_dataset_csv(std::ostream& out, const Dataset& dataset);
/// Throws ParseError.
Dataset read_dataset_csv(std::istream& in);

/// Rows in canonical (id, seed) order; throws ValidationError on duplicates.
void sort_rows(std::vector<DataPoint>& rows);

}  // namespace branchsel
