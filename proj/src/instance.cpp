#include "branchsel/instance.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "branchsel/errors.hpp"
#include "branchsel/rng.hpp"

namespace branchsel {

const char* sense_token(Sense s) {
  switch (s) {
    case Sense::Le: return "le";
    case Sense::Ge: return "ge";
    case Sense::Eq: return "eq";
  }
  return "?";
}

int Instance::find_variable(std::string_view name) const {
  for (std::size_t i = 0; i < variables.size(); ++i) {
    if (variables[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<Interval> Instance::bounds() const {
  std::vector<Interval> box;
  box.reserve(variables.size());
  for (const auto& v : variables) box.push_back({v.lb, v.ub});
  return box;
}

std::vector<char> Instance::integrality() const {
  std::vector<char> flags;
  flags.reserve(variables.size());
  for (const auto& v : variables) flags.push_back(v.is_integer ? 1 : 0);
  return flags;
}

void Instance::add_nonlinear(std::string cname, NodeId body, Sense sense, double rhs) {
  auto upper = [&] { return rhs == 0.0 ? body : dag.add_sub(body, dag.add_const(rhs)); };
  auto lower = [&] { return rhs == 0.0 ? dag.add_neg(body) : dag.add_sub(dag.add_const(rhs), body); };
  switch (sense) {
    case Sense::Le: nonlinear.push_back({std::move(cname), body, sense, rhs, upper(), NlPart::Whole}); break;
    case Sense::Ge: nonlinear.push_back({std::move(cname), body, sense, rhs, lower(), NlPart::Whole}); break;
    case Sense::Eq: {
      const NodeId up = upper();
      const NodeId lo = lower();
      nonlinear.push_back({cname, body, sense, rhs, up, NlPart::EqUpper});
      nonlinear.push_back({std::move(cname), body, sense, rhs, lo, NlPart::EqLower});
      break;
    }
  }
}

void Instance::validate() const {
  std::set<std::string> names;
  for (const auto& v : variables) {
    if (v.name.empty() || !names.insert(v.name).second) throw ValidationError("duplicate variable name " + v.name);
    if (std::isnan(v.lb) || std::isnan(v.ub) || v.lb > v.ub || v.lb == kInf || v.ub == -kInf) {
      throw ValidationError("invalid bounds for variable " + v.name);
    }
  }
  auto check_terms = [&](const std::vector<Term>& terms, const std::string& where) {
    std::set<int> seen;
    for (const auto& t : terms) {
      if (t.var < 0 || t.var >= n()) throw ValidationError("bad variable index in " + where);
      if (!seen.insert(t.var).second) throw ValidationError("duplicate variable in " + where);
      if (!std::isfinite(t.coef)) throw ValidationError("non-finite coefficient in " + where);
    }
  };
  check_terms(objective, "objective");
  std::set<std::string> cons;
  for (const auto& r : linear_rows) {
    if (!cons.insert(r.name).second) throw ValidationError("duplicate constraint name " + r.name);
    check_terms(r.terms, r.name);
    if (!std::isfinite(r.rhs)) throw ValidationError("non-finite rhs in " + r.name);
  }
  dag.validate(n());
  for (std::size_t i = 0; i < nonlinear.size(); ++i) {
    const auto& c = nonlinear[i];
    if (c.part != NlPart::EqLower && !cons.insert(c.name).second) {
      throw ValidationError("duplicate constraint name " + c.name);
    }
    if (c.part == NlPart::EqUpper &&
        (i + 1 >= nonlinear.size() || nonlinear[i + 1].part != NlPart::EqLower)) {
      throw ValidationError("equality halves of " + c.name + " are not adjacent");
    }
    if (c.root < 0 || static_cast<std::size_t>(c.root) >= dag.size() || c.body < 0 ||
        static_cast<std::size_t>(c.body) >= dag.size()) {
      throw ValidationError("constraint " + c.name + " has no expression");
    }
  }
}

// ---------------------------------------------------------------------------
// text format

namespace {

std::string format_number(double v) {
  if (v == kInf) return "+inf";
  if (v == -kInf) return "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

bool parse_number(std::string_view tok, double& out) {
  if (tok == "inf" || tok == "+inf") {
    out = kInf;
    return true;
  }
  if (tok == "-inf") {
    out = -kInf;
    return true;
  }
  std::string_view t = tok;
  if (!t.empty() && t.front() == '+') t.remove_prefix(1);
  if (t.empty()) return false;
  auto res = std::from_chars(t.data(), t.data() + t.size(), out);
  return res.ec == std::errc() && res.ptr == t.data() + t.size();
}

std::vector<std::string> tokenize(std::string_view line) {
  std::vector<std::string> toks;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) toks.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : line) {
    if (ch == '(' || ch == ')') {
      flush();
      toks.emplace_back(1, ch);
    } else if (ch == ' ' || ch == '\t' || ch == '\r') {
      flush();
    } else {
      cur.push_back(ch);
    }
  }
  flush();
  return toks;
}

class LineParser {
 public:
  LineParser(Instance& inst, std::vector<std::string> toks, int line) : inst_(inst), toks_(std::move(toks)), line_(line) {}

  const std::string& next(const char* what) {
    if (pos_ >= toks_.size()) throw ParseError(line_, std::string("expected ") + what);
    return toks_[pos_++];
  }
  bool done() const { return pos_ >= toks_.size(); }

  double number(const char* what) {
    const std::string& tok = next(what);
    double v;
    if (!parse_number(tok, v)) throw ParseError(line_, std::string("expected ") + what + ", got '" + tok + "'");
    return v;
  }

  Sense sense() {
    const std::string& tok = next("sense");
    if (tok == "le" || tok == "<=") return Sense::Le;
    if (tok == "ge" || tok == ">=") return Sense::Ge;
    if (tok == "eq" || tok == "=" || tok == "==") return Sense::Eq;
    throw ParseError(line_, "unknown sense '" + tok + "'");
  }

  void expect(std::string_view tok) {
    const std::string& got = next(std::string(tok).c_str());
    if (got != tok) throw ParseError(line_, "expected '" + std::string(tok) + "', got '" + got + "'");
  }

  int variable(const std::string& name) {
    const int idx = inst_.find_variable(name);
    if (idx < 0) throw ValidationError("line " + std::to_string(line_) + ": unknown variable '" + name + "'");
    return idx;
  }

  std::vector<Term> terms() {
    std::vector<Term> out;
    std::set<int> seen;
    while (!done()) {
      const double coef = number("coefficient");
      const int var = variable(next("variable name"));
      if (!seen.insert(var).second) {
        throw ValidationError("line " + std::to_string(line_) + ": variable repeated in row");
      }
      out.push_back({var, coef});
    }
    return out;
  }

  NodeId expr() {
    const std::string& tok = next("expression");
    if (tok == ")") throw ParseError(line_, "unexpected ')'");
    if (tok != "(") {
      double v;
      if (parse_number(tok, v)) {
        if (!std::isfinite(v)) throw ParseError(line_, "non-finite constant");
        return inst_.dag.add_const(v);
      }
      return inst_.dag.add_var(variable(tok));
    }
    const std::string op = next("operator");
    std::vector<NodeId> args;
    int exponent = 0;
    while (true) {
      if (pos_ >= toks_.size()) throw ParseError(line_, "unbalanced parentheses");
      if (toks_[pos_] == ")") {
        ++pos_;
        break;
      }
      if (op == "pow" && args.size() == 1) {
        const double k = number("integer exponent");
        if (k != std::floor(k) || k < 2 || k > 64) throw ParseError(line_, "pow exponent must be an integer >= 2");
        exponent = static_cast<int>(k);
        continue;
      }
      args.push_back(expr());
    }
    ExprDag& d = inst_.dag;
    auto arity = [&](std::size_t lo, std::size_t hi) {
      if (args.size() < lo || args.size() > hi) throw ParseError(line_, "wrong number of arguments for '" + op + "'");
    };
    if (op == "+") {
      arity(2, SIZE_MAX);
      return d.add_sum(args);
    }
    if (op == "-") {
      arity(2, 2);
      return d.add_sub(args[0], args[1]);
    }
    if (op == "neg") {
      arity(1, 1);
      return d.add_neg(args[0]);
    }
    if (op == "*") {
      arity(2, SIZE_MAX);
      NodeId acc = args[0];
      for (std::size_t i = 1; i < args.size(); ++i) acc = d.add_mul(acc, args[i]);
      return acc;
    }
    if (op == "sq") {
      arity(1, 1);
      return d.add_square(args[0]);
    }
    if (op == "pow") {
      arity(1, 1);
      if (exponent == 0) throw ParseError(line_, "pow needs an exponent");
      return d.add_pow(args[0], exponent);
    }
    if (op == "exp") {
      arity(1, 1);
      return d.add_exp(args[0]);
    }
    if (op == "log") {
      arity(1, 1);
      return d.add_log(args[0]);
    }
    throw ParseError(line_, "unknown operator '" + op + "'");
  }

 private:
  Instance& inst_;
  std::vector<std::string> toks_;
  std::size_t pos_ = 0;
  int line_;
};

void write_expr(const ExprDag& dag, const Instance& inst, NodeId id, std::string& out) {
  const ExprNode& n = dag.node(id);
  switch (n.op) {
    case Op::Const: out += format_number(n.value); return;
    case Op::Var: out += inst.variables[static_cast<std::size_t>(n.var)].name; return;
    default: break;
  }
  out += '(';
  out += op_name(n.op);
  for (NodeId c : n.children) {
    out += ' ';
    write_expr(dag, inst, c, out);
  }
  if (n.op == Op::PowK) out += ' ' + std::to_string(n.exponent);
  out += ')';
}

}  // namespace

Instance parse_instance(std::string_view text) {
  Instance inst;
  bool have_header = false;
  bool have_objective = false;
  std::set<std::string> constraint_names;
  int line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    auto toks = tokenize(line);
    if (toks.empty()) continue;
    const std::string kw = toks[0];
    LineParser p(inst, std::move(toks), line_no);
    p.next("keyword");
    if (!have_header) {
      if (kw != "minlp") throw ParseError(line_no, "file must start with 'minlp <name>'");
      inst.name = p.next("instance name");
      if (!p.done()) throw ParseError(line_no, "trailing tokens");
      have_header = true;
      continue;
    }
    if (kw == "var") {
      Variable v;
      v.name = p.next("variable name");
      v.lb = p.number("lower bound");
      v.ub = p.number("upper bound");
      const std::string& type = p.next("cont|int");
      if (type == "int") {
        v.is_integer = true;
      } else if (type != "cont") {
        throw ParseError(line_no, "variable type must be cont or int");
      }
      if (!p.done()) throw ParseError(line_no, "trailing tokens");
      if (inst.find_variable(v.name) >= 0) throw ValidationError("duplicate variable name " + v.name);
      if (v.lb > v.ub || v.lb == kInf || v.ub == -kInf) throw ValidationError("lb > ub for variable " + v.name);
      inst.variables.push_back(std::move(v));
    } else if (kw == "obj") {
      if (have_objective) throw ParseError(line_no, "objective declared twice");
      p.expect("min");
      p.expect(":");
      inst.objective = p.terms();
      have_objective = true;
    } else if (kw == "lin" || kw == "nl") {
      std::string cname = p.next("constraint name");
      if (!constraint_names.insert(cname).second) throw ValidationError("duplicate constraint name " + cname);
      const Sense s = p.sense();
      const double rhs = p.number("right-hand side");
      if (!std::isfinite(rhs)) throw ParseError(line_no, "right-hand side must be finite");
      p.expect(":");
      if (kw == "lin") {
        inst.linear_rows.push_back({std::move(cname), p.terms(), s, rhs});
      } else {
        const NodeId body = p.expr();
        if (!p.done()) throw ParseError(line_no, "trailing tokens after expression");
        inst.add_nonlinear(std::move(cname), body, s, rhs);
      }
    } else {
      throw ParseError(line_no, "unknown keyword '" + kw + "'");
    }
  }
  if (!have_header) throw ParseError(line_no, "missing 'minlp' header");
  inst.validate();
  return inst;
}

std::string write_instance(const Instance& inst) {
  std::string out = "minlp " + inst.name + "\n";
  for (const auto& v : inst.variables) {
    out += "var " + v.name + ' ' + format_number(v.lb) + ' ' + format_number(v.ub) + (v.is_integer ? " int\n" : " cont\n");
  }
  auto write_terms = [&](const std::vector<Term>& terms) {
    for (const auto& t : terms) out += ' ' + format_number(t.coef) + ' ' + inst.variables[static_cast<std::size_t>(t.var)].name;
  };
  if (!inst.objective.empty()) {
    out += "obj min :";
    write_terms(inst.objective);
    out += '\n';
  }
  for (const auto& r : inst.linear_rows) {
    out += "lin " + r.name + ' ' + sense_token(r.sense) + ' ' + format_number(r.rhs) + " :";
    write_terms(r.terms);
    out += '\n';
  }
  for (const auto& c : inst.nonlinear) {
    if (c.part == NlPart::EqLower) continue;
    out += "nl " + c.name + ' ' + sense_token(c.sense) + ' ' + format_number(c.rhs) + " : ";
    write_expr(inst.dag, inst, c.body, out);
    out += '\n';
  }
  return out;
}

namespace {

bool same_tree(const Instance& ia, NodeId a, const Instance& ib, NodeId b) {
  const ExprNode& x = ia.dag.node(a);
  const ExprNode& y = ib.dag.node(b);
  if (x.op != y.op || x.children.size() != y.children.size()) return false;
  if (x.op == Op::Const && x.value != y.value) return false;
  if (x.op == Op::Var && x.var != y.var) return false;
  if (x.op == Op::PowK && x.exponent != y.exponent) return false;
  for (std::size_t i = 0; i < x.children.size(); ++i) {
    if (!same_tree(ia, x.children[i], ib, y.children[i])) return false;
  }
  return true;
}

}  // namespace

bool structurally_equal(const Instance& a, const Instance& b) {
  if (a.name != b.name || a.variables != b.variables || a.objective != b.objective) return false;
  if (a.linear_rows.size() != b.linear_rows.size() || a.nonlinear.size() != b.nonlinear.size()) return false;
  for (std::size_t i = 0; i < a.linear_rows.size(); ++i) {
    const auto& r = a.linear_rows[i];
    const auto& s = b.linear_rows[i];
    if (r.name != s.name || r.terms != s.terms || r.sense != s.sense || r.rhs != s.rhs) return false;
  }
  for (std::size_t i = 0; i < a.nonlinear.size(); ++i) {
    const auto& c = a.nonlinear[i];
    const auto& d = b.nonlinear[i];
    if (c.name != d.name || c.sense != d.sense || c.rhs != d.rhs || c.part != d.part) return false;
    if (!same_tree(a, c.body, b, d.body) || !same_tree(a, c.root, b, d.root)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// permutation

std::vector<int> variable_permutation(int n, std::uint64_t seed) {
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  if (seed == 0) return order;
  Rng rng(mix_seed(seed, 1));
  rng.shuffle(order);  // order[new] = old
  std::vector<int> new_index(order.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) new_index[static_cast<std::size_t>(order[pos])] = static_cast<int>(pos);
  return new_index;
}

Instance permute(const Instance& inst, std::uint64_t seed) {
  if (seed == 0) return inst;
  Instance out = inst;
  const std::vector<int> new_index = variable_permutation(inst.n(), seed);
  for (std::size_t i = 0; i < inst.variables.size(); ++i) {
    out.variables[static_cast<std::size_t>(new_index[i])] = inst.variables[i];
  }
  auto remap = [&](std::vector<Term>& terms) {
    for (auto& t : terms) t.var = new_index[static_cast<std::size_t>(t.var)];
  };
  remap(out.objective);
  for (auto& r : out.linear_rows) remap(r.terms);
  out.dag.remap_variables(new_index);

  Rng row_rng(mix_seed(seed, 2));
  row_rng.shuffle(out.linear_rows);

  // equality halves move together
  std::vector<std::vector<NonlinearConstraint>> groups;
  for (const auto& c : out.nonlinear) {
    if (c.part == NlPart::EqLower) {
      groups.back().push_back(c);
    } else {
      groups.push_back({c});
    }
  }
  Rng nl_rng(mix_seed(seed, 3));
  nl_rng.shuffle(groups);
  out.nonlinear.clear();
  for (auto& g : groups) {
    for (auto& c : g) out.nonlinear.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// evaluation helpers

double objective_value(const Instance& inst, std::span<const double> x) {
  double obj = 0.0;
  for (const auto& t : inst.objective) obj += t.coef * x[static_cast<std::size_t>(t.var)];
  return obj;
}

double max_violation(const Instance& inst, std::span<const double> x) {
  double worst = 0.0;
  for (int j = 0; j < inst.n(); ++j) {
    const auto& v = inst.variables[static_cast<std::size_t>(j)];
    const double xj = x[static_cast<std::size_t>(j)];
    worst = std::max({worst, v.lb - xj, xj - v.ub});
    if (v.is_integer) worst = std::max(worst, std::abs(xj - std::round(xj)));
  }
  for (const auto& r : inst.linear_rows) {
    double act = 0.0;
    for (const auto& t : r.terms) act += t.coef * x[static_cast<std::size_t>(t.var)];
    if (r.sense != Sense::Ge) worst = std::max(worst, act - r.rhs);
    if (r.sense != Sense::Le) worst = std::max(worst, r.rhs - act);
  }
  std::vector<double> scratch;
  for (const auto& c : inst.nonlinear) {
    double g;
    try {
      g = eval(inst.dag, make_tape(inst.dag, c.root), x, scratch);
    } catch (const DomainError&) {
      return kInf;
    }
    worst = std::max(worst, g);
  }
  return worst;
}

DagStats dag_stats(const Instance& inst) {
  std::vector<NodeId> bodies;
  for (const auto& c : inst.nonlinear) bodies.push_back(c.body);
  const auto box = inst.bounds();
  const auto ints = inst.integrality();
  return dag_stats(inst.dag, bodies, box, ints);
}

// ---------------------------------------------------------------------------
// presolve

namespace {

constexpr double kBoundTol = 1e-9;
constexpr double kFeasTol = 1e-7;
constexpr double kMaxDerivedBound = 1e9;

class Propagator {
 public:
  explicit Propagator(std::vector<Interval> box, std::vector<char> is_int)
      : box_(std::move(box)), is_int_(std::move(is_int)) {}

  std::vector<Interval>& box() { return box_; }
  int changes() const { return changes_; }
  void reset_changes() { changes_ = 0; }

  // Shrinks the domain of var to `bound`, padded outward against rounding.
  void tighten(int var, Interval bound) {
    Interval& d = box_[static_cast<std::size_t>(var)];
    if (bound.lo > -kMaxDerivedBound && bound.lo < kMaxDerivedBound) {
      const double lo = bound.lo - kBoundTol * (1.0 + std::abs(bound.lo));
      if (lo > d.lo + kBoundTol * (1.0 + std::abs(d.lo)) || (d.lo == -kInf && lo > -kInf)) {
        d.lo = lo;
        ++changes_;
      }
    }
    if (bound.hi > -kMaxDerivedBound && bound.hi < kMaxDerivedBound) {
      const double hi = bound.hi + kBoundTol * (1.0 + std::abs(bound.hi));
      if (hi < d.hi - kBoundTol * (1.0 + std::abs(d.hi)) || (d.hi == kInf && hi < kInf)) {
        d.hi = hi;
        ++changes_;
      }
    }
    check(var);
  }

  void round_integers() {
    for (std::size_t j = 0; j < box_.size(); ++j) {
      if (!is_int_[j]) continue;
      Interval& d = box_[j];
      const double lo = std::isfinite(d.lo) ? std::ceil(d.lo - 1e-6) : d.lo;
      const double hi = std::isfinite(d.hi) ? std::floor(d.hi + 1e-6) : d.hi;
      if (lo != d.lo || hi != d.hi) {
        if (std::abs(lo - d.lo) > kBoundTol || std::abs(hi - d.hi) > kBoundTol) ++changes_;
        d = {lo, hi};
      }
      check(static_cast<int>(j));
    }
  }

  void check(int var) {
    Interval& d = box_[static_cast<std::size_t>(var)];
    if (d.lo > d.hi + kFeasTol * (1.0 + std::abs(d.hi))) {
      throw InfeasibleError("domain of variable " + std::to_string(var) + " is empty");
    }
    if (d.lo > d.hi) d.lo = d.hi = 0.5 * (d.lo + d.hi);
  }

  void propagate_row(const LinearRow& row) {
    // activity bounds with counts of infinite contributions
    double min_fin = 0.0, max_fin = 0.0;
    int min_inf = 0, max_inf = 0;
    std::vector<double> cmin(row.terms.size()), cmax(row.terms.size());
    for (std::size_t i = 0; i < row.terms.size(); ++i) {
      const Term& t = row.terms[i];
      const Interval d = box_[static_cast<std::size_t>(t.var)];
      cmin[i] = t.coef > 0 ? t.coef * d.lo : t.coef * d.hi;
      cmax[i] = t.coef > 0 ? t.coef * d.hi : t.coef * d.lo;
      if (t.coef == 0.0) cmin[i] = cmax[i] = 0.0;
      if (std::isfinite(cmin[i])) min_fin += cmin[i]; else ++min_inf;
      if (std::isfinite(cmax[i])) max_fin += cmax[i]; else ++max_inf;
    }
    const double tol = kFeasTol * (1.0 + std::abs(row.rhs));
    if (row.sense != Sense::Ge && min_inf == 0 && min_fin > row.rhs + tol) {
      throw InfeasibleError("row " + row.name + " cannot be satisfied");
    }
    if (row.sense != Sense::Le && max_inf == 0 && max_fin < row.rhs - tol) {
      throw InfeasibleError("row " + row.name + " cannot be satisfied");
    }
    for (std::size_t i = 0; i < row.terms.size(); ++i) {
      const Term& t = row.terms[i];
      if (t.coef == 0.0) continue;
      Interval cand = Interval::whole();
      if (row.sense != Sense::Ge) {  // sum <= rhs
        const bool own_inf = !std::isfinite(cmin[i]);
        if (min_inf == 0 || (min_inf == 1 && own_inf)) {
          const double rest = own_inf ? min_fin : min_fin - cmin[i];
          const double lim = (row.rhs - rest) / t.coef;
          if (t.coef > 0) cand.hi = lim; else cand.lo = lim;
        }
      }
      if (row.sense != Sense::Le) {  // sum >= rhs
        const bool own_inf = !std::isfinite(cmax[i]);
        if (max_inf == 0 || (max_inf == 1 && own_inf)) {
          const double rest = own_inf ? max_fin : max_fin - cmax[i];
          const double lim = (row.rhs - rest) / t.coef;
          if (t.coef > 0) cand.lo = std::max(cand.lo, lim); else cand.hi = std::min(cand.hi, lim);
        }
      }
      tighten(t.var, cand);
    }
  }

  void propagate_nonlinear(const ExprDag& dag, NodeId root) {
    const ExprTape tape = make_tape(dag, root);
    std::vector<Interval> range;
    Interval g;
    try {
      g = interval_eval(dag, tape, box_, range);
    } catch (const DomainError&) {
      throw InfeasibleError("nonlinear constraint undefined on the whole box");
    }
    if (g.lo > kFeasTol) throw InfeasibleError("nonlinear constraint cannot be satisfied");
    std::vector<Interval> target = range;
    auto& rt = target[static_cast<std::size_t>(root)];
    rt.hi = std::min(rt.hi, 0.0);
    for (auto it = tape.order.rbegin(); it != tape.order.rend(); ++it) {
      const NodeId id = *it;
      const ExprNode& n = dag.node(id);
      const Interval t = target[static_cast<std::size_t>(id)];
      if (t.lo > t.hi + kFeasTol * (1.0 + std::abs(t.hi))) {
        throw InfeasibleError("nonlinear constraint cannot be satisfied");
      }
      auto child = [&](std::size_t k) -> Interval& { return target[static_cast<std::size_t>(n.children[k])]; };
      auto narrow = [&](std::size_t k, Interval v) {
        if (std::isnan(v.lo)) v.lo = -kInf;
        if (std::isnan(v.hi)) v.hi = kInf;
        child(k) = intersect(child(k), v);
      };
      switch (n.op) {
        case Op::Const: break;
        case Op::Var: tighten(n.var, t); break;
        case Op::Sum: {
          for (std::size_t k = 0; k < n.children.size(); ++k) {
            Interval rest = Interval::point(0.0);
            for (std::size_t j = 0; j < n.children.size(); ++j) {
              if (j != k) rest = rest + target[static_cast<std::size_t>(n.children[j])];
            }
            narrow(k, t - rest);
          }
          break;
        }
        case Op::Sub:
          narrow(0, t + child(1));
          narrow(1, child(0) - t);
          break;
        case Op::Neg: narrow(0, -t); break;
        case Op::Mul: {
          auto divide = [](Interval a, Interval b) -> Interval {
            if (b.lo <= 0.0 && b.hi >= 0.0) return Interval::whole();
            const double q[4] = {a.lo / b.lo, a.lo / b.hi, a.hi / b.lo, a.hi / b.hi};
            Interval r{kInf, -kInf};
            for (double v : q) {
              if (std::isnan(v)) return Interval::whole();
              r.lo = std::min(r.lo, v);
              r.hi = std::max(r.hi, v);
            }
            return r;
          };
          if (n.children[0] != n.children[1]) {
            narrow(0, divide(t, child(1)));
            narrow(1, divide(t, child(0)));
          }
          break;
        }
        case Op::Square:
        case Op::PowK: {
          const int k = n.op == Op::Square ? 2 : n.exponent;
          auto root_k = [k](double v) { return v < 0 ? -std::pow(-v, 1.0 / k) : std::pow(v, 1.0 / k); };
          if (k % 2 == 1) {
            narrow(0, {root_k(t.lo), root_k(t.hi)});
          } else {
            if (t.hi < 0.0) throw InfeasibleError("even power bounded below zero");
            const double r = std::pow(t.hi, 1.0 / k);
            Interval c{-r, r};
            const Interval cur = child(0);
            const double inner = t.lo > 0.0 ? std::pow(t.lo, 1.0 / k) : 0.0;
            if (cur.lo >= 0.0) c.lo = inner;
            if (cur.hi <= 0.0) c.hi = -inner;
            narrow(0, c);
          }
          break;
        }
        case Op::Exp:
          if (t.hi <= 0.0) throw InfeasibleError("exp bounded above by a non-positive value");
          narrow(0, {t.lo > 0.0 ? std::log(t.lo) : -kInf, std::log(t.hi)});
          break;
        case Op::Log: narrow(0, {std::exp(t.lo), std::exp(t.hi)}); break;
      }
    }
  }

 private:
  std::vector<Interval> box_;
  std::vector<char> is_int_;
  int changes_ = 0;
};

}  // namespace

std::pair<Instance, PresolveSummary> presolve(const Instance& inst) {
  Instance out = inst;
  PresolveSummary summary;
  summary.n = inst.n();
  summary.m = inst.m();
  for (const auto& r : inst.linear_rows) summary.equality_constraints += r.sense == Sense::Eq ? 1 : 0;
  for (const auto& c : inst.nonlinear) summary.equality_constraints += c.part == NlPart::Whole ? 0 : 1;
  Propagator prop(inst.bounds(), inst.integrality());
  prop.round_integers();
  for (int round = 0; round < 10; ++round) {
    prop.reset_changes();
    for (const auto& r : out.linear_rows) prop.propagate_row(r);
    for (const auto& c : out.nonlinear) prop.propagate_nonlinear(out.dag, c.root);
    prop.round_integers();
    summary.rounds = round + 1;
    if (prop.changes() == 0) break;
  }
  const auto& box = prop.box();
  for (std::size_t j = 0; j < box.size(); ++j) {
    auto& v = out.variables[j];
    v.lb = box[j].lo;
    v.ub = box[j].hi;
    // snap nearly fixed domains
    if (v.ub - v.lb <= kBoundTol * (1.0 + std::abs(v.lb))) v.ub = v.lb;
  }
  // substitute fixed variables out of the linear rows
  std::vector<LinearRow> kept;
  for (auto& r : out.linear_rows) {
    LinearRow nr{r.name, {}, r.sense, r.rhs};
    for (const auto& t : r.terms) {
      const auto& v = out.variables[static_cast<std::size_t>(t.var)];
      if (v.lb == v.ub) {
        nr.rhs -= t.coef * v.lb;
      } else {
        nr.terms.push_back(t);
      }
    }
    if (nr.terms.empty()) {
      const double tol = kFeasTol * (1.0 + std::abs(r.rhs));
      if ((nr.sense != Sense::Ge && nr.rhs < -tol) || (nr.sense != Sense::Le && nr.rhs > tol)) {
        throw InfeasibleError("row " + r.name + " violated by fixed variables");
      }
      continue;
    }
    kept.push_back(std::move(nr));
  }
  out.linear_rows = std::move(kept);
  for (const auto& v : out.variables) {
    if (v.lb == v.ub) {
      ++summary.fixed_variables;
    } else {
      ++summary.n_tilde;
    }
  }
  for (const auto& r : out.linear_rows) summary.m_tilde_nonzeros += static_cast<int>(r.terms.size());
  return {std::move(out), summary};
}

}  // namespace branchsel
