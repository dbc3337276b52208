#pragma once

// MINLP instances:  min c'x  s.t.  linear rows, g_k(x) <= 0, l <= x <= u, x_j integer for j in J.

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "branchsel/expr.hpp"

namespace branchsel {

enum class Sense { Le, Ge, Eq };

const char* sense_token(Sense s);

struct Variable {
  std::string name;
  double lb = 0.0;
  double ub = kInf;
  bool is_integer = false;
  bool operator==(const Variable&) const = default;
};

struct Term {
  int var = 0;
  double coef = 0.0;
  bool operator==(const Term&) const = default;
};

struct LinearRow {
  std::string name;
  std::vector<Term> terms;
  Sense sense = Sense::Le;
  double rhs = 0.0;
};

/// Which part of a declared nonlinear constraint an entry stores. Equalities
/// are split into an upper half (body - rhs <= 0) and a lower half
/// (rhs - body <= 0), always adjacent.
enum class NlPart { Whole, EqUpper, EqLower };

struct NonlinearConstraint {
  std::string name;
  NodeId body = -1;  // the expression as written
  Sense sense = Sense::Le;
  double rhs = 0.0;
  NodeId root = -1;  // normalized g(x) with g(x) <= 0
  NlPart part = NlPart::Whole;
};

struct Instance {
  std::string name = "unnamed";
  std::vector<Variable> variables;
  std::vector<Term> objective;
  std::vector<LinearRow> linear_rows;
  ExprDag dag;
  std::vector<NonlinearConstraint> nonlinear;

  int n() const { return static_cast<int>(variables.size()); }
  int m() const { return static_cast<int>(linear_rows.size() + nonlinear.size()); }

  int find_variable(std::string_view name) const;  // -1 when absent
  std::vector<Interval> bounds() const;
  std::vector<char> integrality() const;

  /// Adds a declared nonlinear constraint `body sense rhs`, normalizing it to <= 0 form.
  void add_nonlinear(std::string name, NodeId body, Sense sense, double rhs);

  /// Checks every structural invariant; throws ValidationError.
  void validate() const;
};

Instance parse_instance(std::string_view text);
std::string write_instance(const Instance& instance);

/// Same names, bounds, objective, rows and expression trees (node numbering may differ).
bool structurally_equal(const Instance& a, const Instance& b);

/// Seeded reordering of variables and constraints. Seed 0 is the identity.
Instance permute(const Instance& instance, std::uint64_t seed);

/// The variable permutation used by permute(): variable i moves to position result[i].
std::vector<int> variable_permutation(int n, std::uint64_t seed);

struct PresolveSummary {
  int n = 0;                  // variables before presolve
  int m = 0;                  // constraints before presolve (equality halves count separately)
  int equality_constraints = 0;  // equality rows and equality halves before presolve
  int n_tilde = 0;            // unfixed variables after presolve
  int m_tilde_nonzeros = 0;   // linear nonzeros after presolve
  int fixed_variables = 0;
  int rounds = 0;
};

/// Bound propagation through rows and expression graphs, integer rounding and
/// substitution of fixed variables. Throws InfeasibleError.
std::pair<Instance, PresolveSummary> presolve(const Instance& instance);

/// Evaluates the objective c'x.
double objective_value(const Instance& instance, std::span<const double> x);

/// Largest violation over linear rows, nonlinear constraints, bounds and integrality.
double max_violation(const Instance& instance, std::span<const double> x);

DagStats dag_stats(const Instance& instance);

}  // namespace branchsel
