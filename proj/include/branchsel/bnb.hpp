#pragma once

// LP-based spatial branch-and-bound with integer and spatial branching.

#include <optional>
#include <span>
#include <vector>

#include "branchsel/instance.hpp"
#include "branchsel/relax.hpp"

namespace branchsel {

enum class CandidateKind { Integer, Spatial };

struct BranchCandidate {
  int var = -1;
  CandidateKind kind = CandidateKind::Integer;
  double violation = 0.0;
  double score = 0.0;
};

enum class BranchRule { PreferInt, Mixed, PreferSpatial };

const char* rule_name(BranchRule r);
BranchRule parse_rule(std::string_view text);  // preferint, mixed, preferspatial; case, '-' and '_' ignored; throws ValidationError

inline constexpr double kIntegralityTol = 1e-6;
inline constexpr double kFeasibilityTol = 1e-6;

/// Integer candidates for fractional integer variables; spatial candidates for
/// the variables inside nonlinear atoms of every nonlinear constraint violated
/// by more than 1e-6, integer or not, whose domain can still be split. A
/// fractional integer variable in a violated constraint is a candidate of both kinds.
/// Integer scores equal the fractionality; a spatial score is the normalized
/// constraint violation times the variable's width relative to the widest
/// variable of that constraint (max over constraints).
std::vector<BranchCandidate> detect_candidates(const Instance& instance, std::span<const Interval> box,
                                               const LpSolution& lp);

/// Throws EmptyCandidatesError.
const BranchCandidate& select_branching(BranchRule rule, std::span<const BranchCandidate> candidates);

struct BranchChildren {
  std::vector<Interval> down;
  std::vector<Interval> up;
  double point = 0.0;
};

inline constexpr double kBranchPointGuard = 1e6;

/// Throws DegenerateBranchError when neither child shrinks the box.
BranchChildren branch(std::span<const Interval> box, const BranchCandidate& cand, const LpSolution& lp,
                      const Instance& instance);

struct RootSbStats {
  std::optional<double> avg_rel_bnd_chng_int;
  std::optional<double> avg_rel_bnd_chng_spat;
  std::optional<double> avg_work_int;
  std::optional<double> avg_work_spat;
  int spat_entities_fixed = 0;
  int n_int_viols = 0;
  int n_nonlin_viols = 0;
  long pivots = 0;  // all strong-branching pivots
};

struct StrongBranchOptions {
  int k_max = 10;
  int pivot_cap = 200;
};

/// Evaluates up to k_max candidates of each kind by solving both children
/// (LP, one separation round, LP) with at most pivot_cap pivots per child.
/// Overwrites candidate scores with per-kind normalized bound-change products;
/// candidates left unevaluated get score 0.
RootSbStats strong_branch_root(const Instance& instance, std::span<const Interval> box, const RootRelaxInfo& root,
                               std::vector<BranchCandidate>& candidates, const StrongBranchOptions& options = {});

enum class SolveStatus { Optimal, Infeasible, WorkLimit, Unbounded };

const char* solve_status_name(SolveStatus s);

struct SolveOptions {
  BranchRule rule = BranchRule::Mixed;
  long work_limit = 1000000;
  int root_round_limit = 10;
  StrongBranchOptions strong_branching;
};

struct SolveStats {
  SolveStatus status = SolveStatus::Infeasible;
  std::optional<double> objective;
  std::vector<double> solution;
  double dual_bound = -kInf;
  long work = 0;
  long lp_pivots = 0;
  int nodes = 0;
  int max_depth = 0;
  int integer_branches = 0;
  int spatial_branches = 0;
  RootRelaxInfo root;
  std::vector<BranchCandidate> root_candidates;
  RootSbStats sb;
};

/// Best-bound branch-and-bound on a presolved instance. Deterministic:
/// identical inputs give identical statistics, including work.
SolveStats solve(const Instance& instance, const SolveOptions& options);
SolveStats solve(const Instance& instance, BranchRule rule, long work_limit);

}  // namespace branchsel
