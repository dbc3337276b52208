#pragma once

// Factorable functions stored as a directed acyclic operator graph.
//
// Nodes are kept in topological order: every child index is smaller than the
// index of its parent, so a single forward sweep evaluates any subgraph and a
// backward sweep propagates adjoints. Variable nodes are interned, there is at
// most one VAR node per instance variable.

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace branchsel {

using NodeId = std::int32_t;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Op : std::uint8_t { Const, Var, Sum, Sub, Neg, Mul, Square, PowK, Exp, Log };

const char* op_name(Op op);

struct ExprNode {
  Op op = Op::Const;
  double value = 0.0;  // Const
  int var = -1;        // Var
  int exponent = 0;    // PowK
  std::vector<NodeId> children;

  bool is_operator() const { return op != Op::Const && op != Op::Var; }
};

/// Closed interval over the extended reals.
struct Interval {
  double lo = -kInf;
  double hi = kInf;

  static Interval point(double v) { return {v, v}; }
  static Interval whole() { return {-kInf, kInf}; }

  bool contains(double v) const { return lo <= v && v <= hi; }
  bool is_bounded() const { return lo > -kInf && hi < kInf; }
  bool is_empty() const { return lo > hi; }
  double width() const { return hi - lo; }
  bool operator==(const Interval&) const = default;
};

Interval operator+(Interval a, Interval b);
Interval operator-(Interval a, Interval b);
Interval operator-(Interval a);
Interval operator*(Interval a, Interval b);
Interval square(Interval a);
Interval pow_int(Interval a, int k);
Interval exp(Interval a);
Interval log(Interval a);  // throws DomainError when a.hi <= 0
Interval intersect(Interval a, Interval b);

class ExprDag {
 public:
  NodeId add_const(double value);
  NodeId add_var(int index);  // returns the existing node when already present
  NodeId add_sum(std::vector<NodeId> terms);
  NodeId add_sub(NodeId a, NodeId b);
  NodeId add_neg(NodeId a);
  NodeId add_mul(NodeId a, NodeId b);
  NodeId add_square(NodeId a);
  NodeId add_pow(NodeId a, int k);
  NodeId add_exp(NodeId a);
  NodeId add_log(NodeId a);

  const ExprNode& node(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::span<const ExprNode> nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  std::optional<NodeId> var_node(int index) const;

  /// Renumbers variable references: variable i becomes new_index[i].
  void remap_variables(std::span<const int> new_index);

  /// Checks the arity, ordering and interning invariants; throws ValidationError.
  void validate(int num_variables) const;

 private:
  NodeId push(ExprNode node);

  std::vector<ExprNode> nodes_;
  std::map<int, NodeId> var_nodes_;
};

/// Nodes reachable from one root, in topological order (root last).
struct ExprTape {
  NodeId root = -1;
  std::vector<NodeId> order;
};

ExprTape make_tape(const ExprDag& dag, NodeId root);

/// Variables referenced below root, ascending.
std::vector<int> referenced_variables(const ExprDag& dag, NodeId root);

/// Variables below root that occur inside a nonlinear atom (a product of two
/// variable-dependent factors, a power, exp or log), ascending.
std::vector<int> nonlinear_variables(const ExprDag& dag, NodeId root);

double eval(const ExprDag& dag, NodeId root, std::span<const double> x);
double eval(const ExprDag& dag, const ExprTape& tape, std::span<const double> x,
            std::vector<double>& scratch);

Interval interval_eval(const ExprDag& dag, NodeId root, std::span<const Interval> box);
/// Fills node_ranges (size dag.size()) for every node on the tape.
Interval interval_eval(const ExprDag& dag, const ExprTape& tape, std::span<const Interval> box,
                       std::vector<Interval>& node_ranges);

/// Reverse-mode gradient with one entry per instance variable (x.size()).
std::vector<double> gradient(const ExprDag& dag, NodeId root, std::span<const double> x);

struct DagStats {
  int operator_node_count = 0;
  int quadratic_operator_node_count = 0;
  int vars_in_dag = 0;
  int int_vars_in_dag = 0;
  int unbounded_vars_in_dag = 0;
  int quadratic_elements = 0;  // degree-2 monomials: sq(v), pow(v,2), v*w
  bool operator==(const DagStats&) const = default;
};

/// Statistics over the union of the subgraphs below roots. Shared nodes count once.
DagStats dag_stats(const ExprDag& dag, std::span<const NodeId> roots,
                   std::span<const Interval> bounds, std::span<const char> is_integer);

}  // namespace branchsel
