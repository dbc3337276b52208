#include "branchsel/relax.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "branchsel/errors.hpp"

namespace branchsel {

const char* cut_origin_name(CutOrigin o) {
  switch (o) {
    case CutOrigin::TangentConvex: return "tangent";
    case CutOrigin::SecantConcave: return "secant";
    case CutOrigin::McCormickBilinear: return "mccormick";
  }
  return "?";
}

namespace {

// c + a'x with dense a.
struct Affine {
  std::vector<double> a;
  double c = 0.0;
  std::optional<CutOrigin> origin;

  double at(std::span<const double> x) const {
    double v = c;
    for (std::size_t j = 0; j < a.size(); ++j) {
      if (a[j] != 0.0) v += a[j] * x[j];
    }
    return v;
  }
};

using MaybeAffine = std::optional<Affine>;

void axpy(Affine& out, double s, const Affine& in) {
  if (s == 0.0) return;
  for (std::size_t j = 0; j < out.a.size(); ++j) out.a[j] += s * in.a[j];
  out.c += s * in.c;
}

bool finite(const Affine& f) {
  if (!std::isfinite(f.c)) return false;
  return std::all_of(f.a.begin(), f.a.end(), [](double v) { return std::isfinite(v); });
}

// Bounds of a univariate atom f over [lo, hi]: line alpha + beta*a.
struct Line {
  double alpha = 0.0;
  double beta = 0.0;
};

class Composer {
 public:
  Composer(const ExprDag& dag, std::span<const double> x, std::span<const Interval> box)
      : dag_(dag), x_(x), n_(box.size()), lower_(dag.size()), upper_(dag.size()), value_(dag.size(), 0.0) {}

  // Throws DomainError when the box leaves the domain of an atom.
  std::optional<Affine> underestimator(const ExprTape& tape, std::span<const Interval> box) {
    interval_eval(dag_, tape, box, range_);
    for (NodeId id : tape.order) visit(id);
    return lower_[static_cast<std::size_t>(tape.root)];
  }

 private:
  Affine constant(double v) const { return Affine{std::vector<double>(n_, 0.0), v, std::nullopt}; }

  const Interval& range(NodeId id) const { return range_[static_cast<std::size_t>(id)]; }

  // Lower (want_lower) or upper affine bound of alpha + sum beta_i * child_i.
  MaybeAffine combine(double alpha, std::span<const std::pair<double, NodeId>> terms, bool want_lower,
                      std::optional<CutOrigin> own) const {
    Affine out = constant(alpha);
    NodeId origin_from = -1;
    for (const auto& [beta, child] : terms) {
      if (beta == 0.0) continue;
      const bool use_lower = (beta > 0.0) == want_lower;
      const MaybeAffine& src = use_lower ? lower_[static_cast<std::size_t>(child)] : upper_[static_cast<std::size_t>(child)];
      if (!src) return std::nullopt;
      axpy(out, beta, *src);
      if (src->origin && child > origin_from) {
        origin_from = child;
        out.origin = src->origin;
      }
    }
    if (own) out.origin = own;
    if (!finite(out)) return std::nullopt;
    return out;
  }

  MaybeAffine univariate(NodeId child, const std::optional<Line>& line, bool want_lower, CutOrigin own) const {
    if (!line) return std::nullopt;
    const std::pair<double, NodeId> t[] = {{line->beta, child}};
    return combine(line->alpha, t, want_lower, own);
  }

  // Linearization point of a child: its value at x clamped into its range.
  std::optional<double> anchor(NodeId child) const {
    const Interval& r = range(child);
    double v = value_[static_cast<std::size_t>(child)];
    if (std::isnan(v)) {
      if (r.is_bounded()) v = 0.5 * (r.lo + r.hi);
      else if (r.lo > -kInf) v = r.lo;
      else if (r.hi < kInf) v = r.hi;
      else v = 0.0;
    }
    v = std::clamp(v, r.lo, r.hi);
    if (!std::isfinite(v)) return std::nullopt;
    return v;
  }

  template <class F, class D>
  static std::optional<Line> tangent(double p, F f, D df) {
    const double fp = f(p), dp = df(p);
    if (!std::isfinite(fp) || !std::isfinite(dp)) return std::nullopt;
    return Line{fp - dp * p, dp};
  }

  template <class F>
  static std::optional<Line> secant(const Interval& r, F f) {
    if (!r.is_bounded()) return std::nullopt;
    const double fl = f(r.lo), fh = f(r.hi);
    if (!std::isfinite(fl) || !std::isfinite(fh)) return std::nullopt;
    if (r.hi == r.lo) return Line{fl, 0.0};
    const double beta = (fh - fl) / (r.hi - r.lo);
    return Line{fl - beta * r.lo, beta};
  }

  template <class F, class D>
  void convex_atom(NodeId id, NodeId child, F f, D df) {
    const auto p = anchor(child);
    std::optional<Line> t;
    if (p) t = tangent(*p, f, df);
    lower_[static_cast<std::size_t>(id)] = univariate(child, t, true, CutOrigin::TangentConvex);
    upper_[static_cast<std::size_t>(id)] = univariate(child, secant(range(child), f), false, CutOrigin::SecantConcave);
  }

  template <class F, class D>
  void concave_atom(NodeId id, NodeId child, F f, D df) {
    const auto p = anchor(child);
    std::optional<Line> t;
    if (p) t = tangent(*p, f, df);
    lower_[static_cast<std::size_t>(id)] = univariate(child, secant(range(child), f), true, CutOrigin::SecantConcave);
    upper_[static_cast<std::size_t>(id)] = univariate(child, t, false, CutOrigin::TangentConvex);
  }

  void product(NodeId id, NodeId a, NodeId b) {
    const Interval ra = range(a), rb = range(b);
    const std::size_t i = static_cast<std::size_t>(id);
    if (ra.lo == ra.hi || rb.lo == rb.hi) {
      // one factor is constant over the box
      const bool a_fixed = ra.lo == ra.hi;
      const double k = a_fixed ? ra.lo : rb.lo;
      const std::pair<double, NodeId> t[] = {{k, a_fixed ? b : a}};
      lower_[i] = combine(0.0, t, true, std::nullopt);
      upper_[i] = combine(0.0, t, false, std::nullopt);
      return;
    }
    if (!ra.is_bounded() || !rb.is_bounded()) return;
    // a*b >= aL*b + bL*a - aL*bL, a*b >= aU*b + bU*a - aU*bU
    // a*b <= aU*b + bL*a - aU*bL, a*b <= aL*b + bU*a - aL*bU
    auto pick = [&](double a1, double b1, double a2, double b2, bool want_lower) -> MaybeAffine {
      const std::pair<double, NodeId> t1[] = {{b1, a}, {a1, b}};
      const std::pair<double, NodeId> t2[] = {{b2, a}, {a2, b}};
      MaybeAffine e1 = combine(-a1 * b1, t1, want_lower, CutOrigin::McCormickBilinear);
      MaybeAffine e2 = combine(-a2 * b2, t2, want_lower, CutOrigin::McCormickBilinear);
      if (!e1) return e2;
      if (!e2) return e1;
      const double v1 = e1->at(x_), v2 = e2->at(x_);
      if (want_lower) return v2 > v1 ? e2 : e1;
      return v2 < v1 ? e2 : e1;
    };
    lower_[i] = pick(ra.lo, rb.lo, ra.hi, rb.hi, true);
    upper_[i] = pick(ra.hi, rb.lo, ra.lo, rb.hi, false);
  }

  void visit(NodeId id) {
    const ExprNode& n = dag_.node(id);
    const std::size_t i = static_cast<std::size_t>(id);
    auto val = [&](std::size_t k) { return value_[static_cast<std::size_t>(n.children[k])]; };
    lower_[i].reset();
    upper_[i].reset();
    switch (n.op) {
      case Op::Const:
        value_[i] = n.value;
        lower_[i] = upper_[i] = constant(n.value);
        return;
      case Op::Var: {
        value_[i] = x_[static_cast<std::size_t>(n.var)];
        Affine f = constant(0.0);
        f.a[static_cast<std::size_t>(n.var)] = 1.0;
        lower_[i] = upper_[i] = f;
        return;
      }
      case Op::Sum: {
        std::vector<std::pair<double, NodeId>> t;
        double v = 0.0;
        for (std::size_t k = 0; k < n.children.size(); ++k) {
          t.emplace_back(1.0, n.children[k]);
          v += val(k);
        }
        value_[i] = v;
        lower_[i] = combine(0.0, t, true, std::nullopt);
        upper_[i] = combine(0.0, t, false, std::nullopt);
        return;
      }
      case Op::Sub: {
        value_[i] = val(0) - val(1);
        const std::pair<double, NodeId> t[] = {{1.0, n.children[0]}, {-1.0, n.children[1]}};
        lower_[i] = combine(0.0, t, true, std::nullopt);
        upper_[i] = combine(0.0, t, false, std::nullopt);
        return;
      }
      case Op::Neg: {
        value_[i] = -val(0);
        const std::pair<double, NodeId> t[] = {{-1.0, n.children[0]}};
        lower_[i] = combine(0.0, t, true, std::nullopt);
        upper_[i] = combine(0.0, t, false, std::nullopt);
        return;
      }
      case Op::Mul:
        value_[i] = val(0) * val(1);
        if (n.children[0] == n.children[1]) {
          convex_atom(id, n.children[0], [](double a) { return a * a; }, [](double a) { return 2.0 * a; });
        } else {
          product(id, n.children[0], n.children[1]);
        }
        return;
      case Op::Square:
        value_[i] = val(0) * val(0);
        convex_atom(id, n.children[0], [](double a) { return a * a; }, [](double a) { return 2.0 * a; });
        return;
      case Op::PowK: {
        const int k = n.exponent;
        value_[i] = std::pow(val(0), k);
        auto f = [k](double a) { return std::pow(a, k); };
        auto df = [k](double a) { return k * std::pow(a, k - 1); };
        const Interval& r = range(n.children[0]);
        if (k % 2 == 0 || r.lo >= 0.0) convex_atom(id, n.children[0], f, df);
        else if (r.hi <= 0.0) concave_atom(id, n.children[0], f, df);
        return;  // odd power over a sign change: no estimators
      }
      case Op::Exp:
        value_[i] = std::exp(val(0));
        convex_atom(id, n.children[0], [](double a) { return std::exp(a); }, [](double a) { return std::exp(a); });
        return;
      case Op::Log: {
        value_[i] = val(0) > 0.0 ? std::log(val(0)) : std::nan("");
        const Interval& r = range(n.children[0]);
        auto f = [](double a) { return a > 0.0 ? std::log(a) : std::nan(""); };
        auto df = [](double a) { return a > 0.0 ? 1.0 / a : std::nan(""); };
        if (r.lo > 0.0) {
          concave_atom(id, n.children[0], f, df);
        } else {
          // secant unavailable; the tangent still bounds log from above on its domain
          const auto p = anchor(n.children[0]);
          std::optional<Line> t;
          if (p && *p > 0.0) t = tangent(*p, f, df);
          upper_[i] = univariate(n.children[0], t, false, CutOrigin::TangentConvex);
        }
        return;
      }
    }
  }

  const ExprDag& dag_;
  std::span<const double> x_;
  std::size_t n_;
  std::vector<MaybeAffine> lower_, upper_;
  std::vector<double> value_;
  std::vector<Interval> range_;
};

// Turns L(x) <= 0 into a sparse cut, dropping negligible coefficients on
// bounded columns and relaxing the right-hand side by their largest contribution.
std::optional<Cut> make_cut(const Affine& f, std::span<const Interval> box, int constraint) {
  double amax = 0.0;
  for (double v : f.a) amax = std::max(amax, std::abs(v));
  Cut cut;
  cut.rhs = -f.c;
  cut.constraint = constraint;
  cut.origin = f.origin.value_or(CutOrigin::TangentConvex);
  for (std::size_t j = 0; j < f.a.size(); ++j) {
    const double a = f.a[j];
    if (a == 0.0) continue;
    if (std::abs(a) <= 1e-12 * amax && box[j].is_bounded()) {
      cut.rhs += std::max(-a * box[j].lo, -a * box[j].hi);
      continue;
    }
    cut.row.push_back({static_cast<int>(j), a});
  }
  if (!std::isfinite(cut.rhs)) return std::nullopt;
  if (cut.row.empty() && cut.rhs >= 0.0) return std::nullopt;
  return cut;
}

}  // namespace

Separation separate_cuts(const Instance& instance, std::span<const double> point, std::span<const Interval> box,
                         double min_violation) {
  if (point.size() != static_cast<std::size_t>(instance.n()) || box.size() != point.size()) {
    throw DimensionError("separation point and box must have one entry per variable");
  }
  Separation out;
  Composer composer(instance.dag, point, box);
  std::vector<double> scratch;
  for (std::size_t k = 0; k < instance.nonlinear.size(); ++k) {
    const ExprTape tape = make_tape(instance.dag, instance.nonlinear[k].root);
    double g;
    try {
      g = eval(instance.dag, tape, point, scratch);
    } catch (const DomainError&) {
      g = kInf;
    }
    const bool violated = g > kCutViolationTol;
    if (!(g > min_violation) && min_violation > -kInf) continue;
    std::optional<Affine> under;
    try {
      under = composer.underestimator(tape, box);
    } catch (const DomainError&) {
      under.reset();
    }
    std::optional<Cut> cut;
    if (under) {
      const double lv = under->at(point);
      if (lv > min_violation || min_violation == -kInf) cut = make_cut(*under, box, static_cast<int>(k));
    }
    if (cut) out.cuts.push_back(std::move(*cut));
    else if (violated) out.unseparable.push_back(static_cast<int>(k));
  }
  return out;
}

double cut_coeff_spread(const Cut& cut) {
  double lo = kInf, hi = 0.0;
  for (const Term& t : cut.row) {
    if (t.coef == 0.0) continue;
    lo = std::min(lo, std::abs(t.coef));
    hi = std::max(hi, std::abs(t.coef));
  }
  if (hi == 0.0) return 0.0;
  return std::log10(hi / lo);
}

LpRow cut_to_lp_row(const Cut& cut, int num_cols) {
  LpRow row;
  row.coefs.assign(static_cast<std::size_t>(num_cols), 0.0);
  for (const Term& t : cut.row) row.coefs[static_cast<std::size_t>(t.var)] += t.coef;
  row.sense = Sense::Le;
  row.rhs = cut.rhs;
  return row;
}

LpModel base_lp(const Instance& instance, std::span<const Interval> box) {
  const int n = instance.n();
  LpModel lp;
  lp.objective.assign(static_cast<std::size_t>(n), 0.0);
  for (const Term& t : instance.objective) lp.objective[static_cast<std::size_t>(t.var)] += t.coef;
  lp.bounds.assign(box.begin(), box.end());
  for (const LinearRow& r : instance.linear_rows) {
    LpRow row;
    row.coefs.assign(static_cast<std::size_t>(n), 0.0);
    for (const Term& t : r.terms) row.coefs[static_cast<std::size_t>(t.var)] += t.coef;
    row.sense = r.sense;
    row.rhs = r.rhs;
    lp.rows.push_back(std::move(row));
  }
  return lp;
}

std::vector<double> reference_point(std::span<const Interval> box) {
  std::vector<double> p;
  p.reserve(box.size());
  for (const Interval& b : box) p.push_back(b.is_bounded() ? 0.5 * (b.lo + b.hi) : std::clamp(0.0, b.lo, b.hi));
  return p;
}

RootRelaxInfo build_root_relaxation(const Instance& instance, std::span<const Interval> box, int round_limit) {
  if (round_limit < 0) throw ValidationError("round limit must be nonnegative");
  RootRelaxInfo info;
  info.model = base_lp(instance, box);
  const int n = instance.n();

  auto add = [&](std::vector<Cut> cuts) {
    std::vector<LpRow> rows;
    for (const Cut& c : cuts) rows.push_back(cut_to_lp_row(c, n));
    info.model = lp_add_rows(info.model, rows);
    for (Cut& c : cuts) info.cuts_added.push_back(std::move(c));
  };
  auto solve = [&] {
    auto [sol, basis] = lp_solve(info.model, info.lp_solves > 0 ? &info.basis : nullptr);
    info.pivots += sol.pivots;
    ++info.lp_solves;
    info.lp_solution = std::move(sol);
    info.basis = std::move(basis);
  };

  solve();
  if (info.lp_solution.status == LpStatus::Unbounded && !instance.nonlinear.empty()) {
    // The linear rows alone do not bound the objective: seed every available
    // underestimator at a reference point and start over.
    const std::vector<double> ref = reference_point(box);
    add(separate_cuts(instance, ref, box, -kInf).cuts);
    solve();
  }
  for (int round = 1; round <= round_limit; ++round) {
    if (info.lp_solution.status != LpStatus::Optimal) break;
    Separation sep = separate_cuts(instance, info.lp_solution.x, box);
    if (sep.cuts.empty()) break;
    add(std::move(sep.cuts));
    solve();
    info.rounds = round;
  }
  return info;
}

}  // namespace branchsel
