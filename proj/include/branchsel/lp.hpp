#pragma once

// Dense bounded-variable primal simplex.
//
// Every row i is written as a_i'x - s_i = 0 with a logical column s_i whose
// bounds encode the sense (le: s <= rhs, ge: s >= rhs, eq: s = rhs). The
// starting basis is all logicals; phase one minimizes the sum of bound
// infeasibilities of the basic variables, phase two the objective. Pricing is
// Dantzig with smallest-index tie-break, falling back to Bland's rule on long
// degenerate runs. The pivot count is the deterministic work unit of the
// solver, so nothing here depends on timing or hashing.

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "branchsel/expr.hpp"
#include "branchsel/instance.hpp"

namespace branchsel {

struct LpRow {
  std::vector<double> coefs;  // dense, one entry per column
  Sense sense = Sense::Le;
  double rhs = 0.0;
};

struct LpModel {
  std::vector<double> objective;
  std::vector<LpRow> rows;
  std::vector<Interval> bounds;

  int num_cols() const { return static_cast<int>(objective.size()); }
  int num_rows() const { return static_cast<int>(rows.size()); }
};

enum class LpStatus { Optimal, Infeasible, Unbounded, IterLimit };

const char* lp_status_name(LpStatus s);

struct LpSolution {
  LpStatus status = LpStatus::IterLimit;
  std::vector<double> x;
  double objective = 0.0;
  int pivots = 0;
};

enum class ColStatus : std::uint8_t { Basic, AtLower, AtUpper, AtZero };

/// Column statuses for structurals followed by logicals. A basis for fewer rows
/// than the model is extended with basic logicals for the new rows.
struct Basis {
  std::vector<ColStatus> status;
  int num_structural = 0;
};

struct LpOptions {
  int pivot_limit = 50000;
  double feasibility_tol = 1e-9;
  double optimality_tol = 1e-9;
};

/// Throws NumericsError when the basis becomes singular beyond recovery.
std::pair<LpSolution, Basis> lp_solve(const LpModel& model, const Basis* warm = nullptr,
                                      const LpOptions& options = {});

/// Throws DimensionError when a row does not have one entry per column.
LpModel lp_add_rows(const LpModel& model, const std::vector<LpRow>& rows);

/// Throws IndexError for an invalid column.
LpModel lp_set_bounds(const LpModel& model, int var, Interval bounds);

/// Largest row or bound violation of x.
double lp_max_violation(const LpModel& model, const std::vector<double>& x);

}  // namespace branchsel
