#include "branchsel/expr.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "branchsel/errors.hpp"

namespace branchsel {

const char* op_name(Op op) {
  switch (op) {
    case Op::Const: return "const";
    case Op::Var: return "var";
    case Op::Sum: return "+";
    case Op::Sub: return "-";
    case Op::Neg: return "neg";
    case Op::Mul: return "*";
    case Op::Square: return "sq";
    case Op::PowK: return "pow";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// interval arithmetic

namespace {

// 0 * inf is taken as 0: an empty factor range contributes nothing.
double mul0(double a, double b) { return (a == 0.0 || b == 0.0) ? 0.0 : a * b; }

}  // namespace

Interval operator+(Interval a, Interval b) { return {a.lo + b.lo, a.hi + b.hi}; }

Interval operator-(Interval a, Interval b) { return {a.lo - b.hi, a.hi - b.lo}; }

Interval operator-(Interval a) { return {-a.hi, -a.lo}; }

Interval operator*(Interval a, Interval b) {
  const double p[4] = {mul0(a.lo, b.lo), mul0(a.lo, b.hi), mul0(a.hi, b.lo), mul0(a.hi, b.hi)};
  return {*std::min_element(p, p + 4), *std::max_element(p, p + 4)};
}

Interval square(Interval a) { return pow_int(a, 2); }

Interval pow_int(Interval a, int k) {
  auto pw = [k](double v) { return std::pow(v, k); };
  if (k % 2 == 1) return {pw(a.lo), pw(a.hi)};
  if (a.lo >= 0.0) return {pw(a.lo), pw(a.hi)};
  if (a.hi <= 0.0) return {pw(a.hi), pw(a.lo)};
  return {0.0, std::max(pw(a.lo), pw(a.hi))};
}

Interval exp(Interval a) { return {std::exp(a.lo), std::exp(a.hi)}; }

Interval log(Interval a) {
  if (a.hi <= 0.0) throw DomainError("log of an interval with no positive part");
  return {a.lo <= 0.0 ? -kInf : std::log(a.lo), std::log(a.hi)};
}

Interval intersect(Interval a, Interval b) { return {std::max(a.lo, b.lo), std::min(a.hi, b.hi)}; }

// ---------------------------------------------------------------------------
// graph construction

NodeId ExprDag::push(ExprNode node) {
  const auto id = static_cast<NodeId>(nodes_.size());
  for (NodeId c : node.children) {
    if (c < 0 || c >= id) throw ValidationError("child index out of range");
  }
  nodes_.push_back(std::move(node));
  return id;
}

NodeId ExprDag::add_const(double value) {
  if (!std::isfinite(value)) throw ValidationError("constant must be finite");
  ExprNode n;
  n.op = Op::Const;
  n.value = value;
  return push(std::move(n));
}

NodeId ExprDag::add_var(int index) {
  if (index < 0) throw ValidationError("negative variable index");
  if (auto it = var_nodes_.find(index); it != var_nodes_.end()) return it->second;
  ExprNode n;
  n.op = Op::Var;
  n.var = index;
  const NodeId id = push(std::move(n));
  var_nodes_.emplace(index, id);
  return id;
}

NodeId ExprDag::add_sum(std::vector<NodeId> terms) {
  if (terms.size() < 2) throw ValidationError("sum needs at least two terms");
  ExprNode n;
  n.op = Op::Sum;
  n.children = std::move(terms);
  return push(std::move(n));
}

NodeId ExprDag::add_sub(NodeId a, NodeId b) { return push({Op::Sub, 0.0, -1, 0, {a, b}}); }
NodeId ExprDag::add_neg(NodeId a) { return push({Op::Neg, 0.0, -1, 0, {a}}); }
NodeId ExprDag::add_mul(NodeId a, NodeId b) { return push({Op::Mul, 0.0, -1, 0, {a, b}}); }
NodeId ExprDag::add_square(NodeId a) { return push({Op::Square, 0.0, -1, 0, {a}}); }

NodeId ExprDag::add_pow(NodeId a, int k) {
  if (k < 2) throw ValidationError("pow exponent must be >= 2");
  return push({Op::PowK, 0.0, -1, k, {a}});
}

NodeId ExprDag::add_exp(NodeId a) { return push({Op::Exp, 0.0, -1, 0, {a}}); }
NodeId ExprDag::add_log(NodeId a) { return push({Op::Log, 0.0, -1, 0, {a}}); }

std::optional<NodeId> ExprDag::var_node(int index) const {
  if (auto it = var_nodes_.find(index); it != var_nodes_.end()) return it->second;
  return std::nullopt;
}

void ExprDag::remap_variables(std::span<const int> new_index) {
  std::map<int, NodeId> remapped;
  for (auto& n : nodes_) {
    if (n.op != Op::Var) continue;
    if (n.var >= static_cast<int>(new_index.size())) throw IndexError("variable remap too short");
    n.var = new_index[static_cast<std::size_t>(n.var)];
  }
  for (const auto& [var, id] : var_nodes_) {
    remapped.emplace(new_index[static_cast<std::size_t>(var)], id);
  }
  var_nodes_ = std::move(remapped);
}

void ExprDag::validate(int num_variables) const {
  std::set<int> seen_vars;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const ExprNode& n = nodes_[i];
    for (NodeId c : n.children) {
      if (c < 0 || static_cast<std::size_t>(c) >= i) throw ValidationError("DAG is not topological");
    }
    const std::size_t arity = n.children.size();
    bool ok = true;
    switch (n.op) {
      case Op::Const: ok = arity == 0 && std::isfinite(n.value); break;
      case Op::Var:
        ok = arity == 0 && n.var >= 0 && n.var < num_variables && seen_vars.insert(n.var).second;
        break;
      case Op::Sum: ok = arity >= 2; break;
      case Op::Sub:
      case Op::Mul: ok = arity == 2; break;
      case Op::PowK: ok = arity == 1 && n.exponent >= 2; break;
      case Op::Neg:
      case Op::Square:
      case Op::Exp:
      case Op::Log: ok = arity == 1; break;
    }
    if (!ok) throw ValidationError("malformed node " + std::to_string(i) + " (" + op_name(n.op) + ")");
  }
}

// ---------------------------------------------------------------------------
// evaluation

ExprTape make_tape(const ExprDag& dag, NodeId root) {
  if (root < 0 || static_cast<std::size_t>(root) >= dag.size()) throw IndexError("root out of range");
  std::vector<char> mark(static_cast<std::size_t>(root) + 1, 0);
  mark[static_cast<std::size_t>(root)] = 1;
  // children precede parents, so one descending pass marks the whole subgraph
  for (NodeId i = root; i >= 0; --i) {
    if (!mark[static_cast<std::size_t>(i)]) continue;
    for (NodeId c : dag.node(i).children) mark[static_cast<std::size_t>(c)] = 1;
  }
  ExprTape tape;
  tape.root = root;
  for (NodeId i = 0; i <= root; ++i) {
    if (mark[static_cast<std::size_t>(i)]) tape.order.push_back(i);
  }
  return tape;
}

std::vector<int> referenced_variables(const ExprDag& dag, NodeId root) {
  std::vector<int> vars;
  for (NodeId id : make_tape(dag, root).order) {
    if (dag.node(id).op == Op::Var) vars.push_back(dag.node(id).var);
  }
  std::sort(vars.begin(), vars.end());
  return vars;
}

std::vector<int> nonlinear_variables(const ExprDag& dag, NodeId root) {
  const ExprTape tape = make_tape(dag, root);
  std::vector<char> has_var(dag.size(), 0), below_atom(dag.size(), 0);
  for (NodeId id : tape.order) {
    const ExprNode& n = dag.node(id);
    char h = n.op == Op::Var;
    for (NodeId c : n.children) h |= has_var[static_cast<std::size_t>(c)];
    has_var[static_cast<std::size_t>(id)] = h;
  }
  std::vector<int> vars;
  for (auto it = tape.order.rbegin(); it != tape.order.rend(); ++it) {
    const ExprNode& n = dag.node(*it);
    bool mark = below_atom[static_cast<std::size_t>(*it)];
    switch (n.op) {
      case Op::Square:
      case Op::PowK:
      case Op::Exp:
      case Op::Log: mark = true; break;
      case Op::Mul:
        mark = mark || (has_var[static_cast<std::size_t>(n.children[0])] && has_var[static_cast<std::size_t>(n.children[1])]);
        break;
      default: break;
    }
    if (!mark) continue;
    if (n.op == Op::Var) vars.push_back(n.var);
    for (NodeId c : n.children) below_atom[static_cast<std::size_t>(c)] = 1;
  }
  std::sort(vars.begin(), vars.end());
  return vars;
}

namespace {

double var_value(std::span<const double> x, int var) {
  if (var >= static_cast<int>(x.size())) throw IndexError("point has too few entries");
  return x[static_cast<std::size_t>(var)];
}

}  // namespace

double eval(const ExprDag& dag, const ExprTape& tape, std::span<const double> x,
            std::vector<double>& scratch) {
  if (scratch.size() < dag.size()) scratch.resize(dag.size());
  for (NodeId id : tape.order) {
    const ExprNode& n = dag.node(id);
    auto val = [&](std::size_t i) { return scratch[static_cast<std::size_t>(n.children[i])]; };
    double v = 0.0;
    switch (n.op) {
      case Op::Const: v = n.value; break;
      case Op::Var: v = var_value(x, n.var); break;
      case Op::Sum:
        for (NodeId c : n.children) v += scratch[static_cast<std::size_t>(c)];
        break;
      case Op::Sub: v = val(0) - val(1); break;
      case Op::Neg: v = -val(0); break;
      case Op::Mul: v = val(0) * val(1); break;
      case Op::Square: v = val(0) * val(0); break;
      case Op::PowK: v = std::pow(val(0), n.exponent); break;
      case Op::Exp: v = std::exp(val(0)); break;
      case Op::Log:
        if (!(val(0) > 0.0)) throw DomainError("log of non-positive argument");
        v = std::log(val(0));
        break;
    }
    if (!std::isfinite(v)) throw DomainError(std::string("non-finite value at ") + op_name(n.op));
    scratch[static_cast<std::size_t>(id)] = v;
  }
  return scratch[static_cast<std::size_t>(tape.root)];
}

double eval(const ExprDag& dag, NodeId root, std::span<const double> x) {
  std::vector<double> scratch;
  return eval(dag, make_tape(dag, root), x, scratch);
}

Interval interval_eval(const ExprDag& dag, const ExprTape& tape, std::span<const Interval> box,
                       std::vector<Interval>& r) {
  if (r.size() < dag.size()) r.resize(dag.size());
  for (NodeId id : tape.order) {
    const ExprNode& n = dag.node(id);
    auto ch = [&](std::size_t i) { return r[static_cast<std::size_t>(n.children[i])]; };
    Interval v;
    switch (n.op) {
      case Op::Const: v = Interval::point(n.value); break;
      case Op::Var:
        if (n.var >= static_cast<int>(box.size())) throw IndexError("box has too few entries");
        v = box[static_cast<std::size_t>(n.var)];
        break;
      case Op::Sum:
        v = Interval::point(0.0);
        for (std::size_t i = 0; i < n.children.size(); ++i) v = v + ch(i);
        break;
      case Op::Sub: v = ch(0) - ch(1); break;
      case Op::Neg: v = -ch(0); break;
      case Op::Mul: v = ch(0) * ch(1); break;
      case Op::Square: v = square(ch(0)); break;
      case Op::PowK: v = pow_int(ch(0), n.exponent); break;
      case Op::Exp: v = exp(ch(0)); break;
      case Op::Log: v = log(ch(0)); break;
    }
    // inf - inf style results mean "no information"
    if (std::isnan(v.lo)) v.lo = -kInf;
    if (std::isnan(v.hi)) v.hi = kInf;
    r[static_cast<std::size_t>(id)] = v;
  }
  return r[static_cast<std::size_t>(tape.root)];
}

Interval interval_eval(const ExprDag& dag, NodeId root, std::span<const Interval> box) {
  std::vector<Interval> ranges;
  return interval_eval(dag, make_tape(dag, root), box, ranges);
}

std::vector<double> gradient(const ExprDag& dag, NodeId root, std::span<const double> x) {
  const ExprTape tape = make_tape(dag, root);
  std::vector<double> val;
  eval(dag, tape, x, val);
  std::vector<double> adj(dag.size(), 0.0);
  std::vector<double> grad(x.size(), 0.0);
  adj[static_cast<std::size_t>(root)] = 1.0;
  for (auto it = tape.order.rbegin(); it != tape.order.rend(); ++it) {
    const ExprNode& n = dag.node(*it);
    const double a = adj[static_cast<std::size_t>(*it)];
    if (a == 0.0) continue;
    auto child = [&](std::size_t i) -> double& { return adj[static_cast<std::size_t>(n.children[i])]; };
    auto cval = [&](std::size_t i) { return val[static_cast<std::size_t>(n.children[i])]; };
    switch (n.op) {
      case Op::Const: break;
      case Op::Var: grad[static_cast<std::size_t>(n.var)] += a; break;
      case Op::Sum:
        for (std::size_t i = 0; i < n.children.size(); ++i) child(i) += a;
        break;
      case Op::Sub:
        child(0) += a;
        child(1) -= a;
        break;
      case Op::Neg: child(0) -= a; break;
      case Op::Mul: {
        const double v0 = cval(0), v1 = cval(1);
        child(0) += a * v1;
        child(1) += a * v0;
        break;
      }
      case Op::Square: child(0) += a * 2.0 * cval(0); break;
      case Op::PowK: child(0) += a * n.exponent * std::pow(cval(0), n.exponent - 1); break;
      case Op::Exp: child(0) += a * val[static_cast<std::size_t>(*it)]; break;
      case Op::Log: child(0) += a / cval(0); break;
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// statistics

DagStats dag_stats(const ExprDag& dag, std::span<const NodeId> roots, std::span<const Interval> bounds,
                   std::span<const char> is_integer) {
  DagStats s;
  if (roots.empty()) return s;
  std::vector<char> mark(dag.size(), 0);
  for (NodeId r : roots) mark.at(static_cast<std::size_t>(r)) = 1;
  for (NodeId i = static_cast<NodeId>(dag.size()) - 1; i >= 0; --i) {
    if (!mark[static_cast<std::size_t>(i)]) continue;
    for (NodeId c : dag.node(i).children) mark[static_cast<std::size_t>(c)] = 1;
  }
  for (NodeId i = 0; i < static_cast<NodeId>(dag.size()); ++i) {
    if (!mark[static_cast<std::size_t>(i)]) continue;
    const ExprNode& n = dag.node(i);
    auto child_op = [&](std::size_t k) { return dag.node(n.children[k]).op; };
    if (n.op == Op::Var) {
      ++s.vars_in_dag;
      const auto v = static_cast<std::size_t>(n.var);
      if (is_integer[v]) ++s.int_vars_in_dag;
      if (!(bounds[v].lo > -kInf && bounds[v].hi < kInf)) ++s.unbounded_vars_in_dag;
      continue;
    }
    if (!n.is_operator()) continue;
    ++s.operator_node_count;
    const bool square_like = n.op == Op::Square || (n.op == Op::PowK && n.exponent == 2);
    const bool product = n.op == Op::Mul && child_op(0) != Op::Const && child_op(1) != Op::Const;
    if (square_like || product) ++s.quadratic_operator_node_count;
    if (square_like && child_op(0) == Op::Var) ++s.quadratic_elements;
    if (n.op == Op::Mul && child_op(0) == Op::Var && child_op(1) == Op::Var) ++s.quadratic_elements;
  }
  return s;
}

}  // namespace branchsel
