#pragma once

// Dense-grid plus integer-enumeration oracle for tiny instances.
//
// The objective variable t (the only variable with an objective coefficient
// that also appears in nonlinear constraints, if any) is eliminated: every
// constraint containing it must be affine in t with a negative slope, so the
// smallest feasible t is a closed-form maximum. The remaining continuous
// variables (at most three, finite bounds) are gridded at a fixed step. The grid
// is bisected recursively and a part is skipped only when interval arithmetic
// proves it infeasible or unable to beat the best grid point found so far, so
// the result equals a full grid scan. A final refinement grid around the best point reduces the
// discretization error.

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "branchsel/errors.hpp"
#include "branchsel/instance.hpp"

namespace branchsel::testing {

struct GridResult {
  bool feasible = false;
  double objective = kInf;
  std::vector<double> x;
};

class GridOracle {
 public:
  explicit GridOracle(const Instance& inst, double step = 1e-3) : inst_(inst), step_(step) {
    const int n = inst.n();
    std::vector<double> c(static_cast<std::size_t>(n), 0.0);
    for (const Term& t : inst.objective) c[static_cast<std::size_t>(t.var)] += t.coef;
    obj_ = c;
    std::vector<char> in_nl(static_cast<std::size_t>(n), 0);
    for (const auto& con : inst.nonlinear) {
      for (int j : referenced_variables(inst.dag, con.root)) in_nl[static_cast<std::size_t>(j)] = 1;
    }
    for (int j = 0; j < n; ++j) {
      const auto& v = inst.variables[static_cast<std::size_t>(j)];
      if (!v.is_integer && c[static_cast<std::size_t>(j)] > 0.0 && in_nl[static_cast<std::size_t>(j)] && epi_ < 0) {
        epi_ = j;
      }
    }
    if (epi_ >= 0) {
      for (const auto& r : inst.linear_rows) {
        for (const Term& t : r.terms) {
          if (t.var == epi_) throw std::invalid_argument("objective variable in a linear row");
        }
      }
      for (std::size_t k = 0; k < inst.nonlinear.size(); ++k) {
        const auto vars = referenced_variables(inst.dag, inst.nonlinear[k].root);
        if (std::find(vars.begin(), vars.end(), epi_) != vars.end()) with_t_.push_back(k);
        else without_t_.push_back(k);
      }
    } else {
      for (std::size_t k = 0; k < inst.nonlinear.size(); ++k) without_t_.push_back(k);
    }
    for (int j = 0; j < n; ++j) {
      if (j == epi_) continue;
      const auto& v = inst.variables[static_cast<std::size_t>(j)];
      if (!std::isfinite(v.lb) || !std::isfinite(v.ub)) throw std::invalid_argument("grid oracle needs finite bounds");
      (v.is_integer ? ints_ : conts_).push_back(j);
    }
    if (conts_.size() > 3) throw std::invalid_argument("grid oracle supports at most three continuous dimensions");
  }

  GridResult run() {
    std::vector<double> x(static_cast<std::size_t>(inst_.n()), 0.0);
    enumerate(0, x);
    if (best_.feasible) refine();
    return best_;
  }

 private:
  // Smallest feasible value of t at x (x[t] ignored), or nullopt when none.
  std::optional<double> eliminate(std::vector<double>& x) const {
    if (epi_ < 0) return 0.0;
    const auto& v = inst_.variables[static_cast<std::size_t>(epi_)];
    double t = v.lb;
    for (std::size_t k : with_t_) {
      const NodeId root = inst_.nonlinear[k].root;
      x[static_cast<std::size_t>(epi_)] = 0.0;
      const double g0 = eval(inst_.dag, root, x);
      x[static_cast<std::size_t>(epi_)] = 1.0;
      const double g1 = eval(inst_.dag, root, x);
      const double a = g0 - g1;
      if (!(a > 0.0)) throw std::invalid_argument("constraint not decreasing affine in the objective variable");
      t = std::max(t, g0 / a);
    }
    if (t > v.ub) return std::nullopt;
    return t;
  }

  bool feasible_rest(std::span<const double> x) const {
    for (const auto& r : inst_.linear_rows) {
      double act = 0.0;
      for (const Term& t : r.terms) act += t.coef * x[static_cast<std::size_t>(t.var)];
      const double tol = 1e-9 * (1.0 + std::abs(r.rhs));
      if (r.sense != Sense::Ge && act > r.rhs + tol) return false;
      if (r.sense != Sense::Le && act < r.rhs - tol) return false;
    }
    for (std::size_t k : without_t_) {
      try {
        if (eval(inst_.dag, inst_.nonlinear[k].root, x) > 1e-9) return false;
      } catch (const DomainError&) {
        return false;
      }
    }
    return true;
  }

  void consider(std::vector<double>& x) {
    if (!feasible_rest(x)) return;
    std::optional<double> t;
    try {
      t = eliminate(x);
    } catch (const DomainError&) {
      return;
    }
    if (!t) return;
    if (epi_ >= 0) x[static_cast<std::size_t>(epi_)] = *t;
    double obj = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) obj += obj_[j] * x[j];
    if (obj < best_.objective) {
      best_.feasible = true;
      best_.objective = obj;
      best_.x = x;
    }
  }

  // Interval lower bound of the objective over box; -inf when unknown.
  double lower_bound(const std::vector<Interval>& box) const {
    double lb = 0.0;
    for (std::size_t j = 0; j < box.size(); ++j) {
      if (static_cast<int>(j) == epi_ || obj_[j] == 0.0) continue;
      lb += obj_[j] > 0.0 ? obj_[j] * box[j].lo : obj_[j] * box[j].hi;
    }
    if (epi_ < 0) return lb;
    std::vector<Interval> b0 = box, b1 = box;
    b0[static_cast<std::size_t>(epi_)] = Interval::point(0.0);
    b1[static_cast<std::size_t>(epi_)] = Interval::point(1.0);
    double t = inst_.variables[static_cast<std::size_t>(epi_)].lb;
    for (std::size_t k : with_t_) {
      const NodeId root = inst_.nonlinear[k].root;
      try {
        const Interval g0 = interval_eval(inst_.dag, root, b0);
        // slope a = g(x,0) - g(x,1) is constant; take it from any point of the box
        std::vector<double> p(box.size());
        for (std::size_t j = 0; j < box.size(); ++j) p[j] = box[j].lo;
        p[static_cast<std::size_t>(epi_)] = 0.0;
        const double a0 = eval(inst_.dag, root, p);
        p[static_cast<std::size_t>(epi_)] = 1.0;
        const double a = a0 - eval(inst_.dag, root, p);
        if (!(a > 0.0) || !std::isfinite(g0.lo)) return -kInf;
        t = std::max(t, g0.lo / a);
      } catch (const DomainError&) {
        return -kInf;
      }
    }
    return lb + obj_[static_cast<std::size_t>(epi_)] * t;
  }

  void enumerate(std::size_t depth, std::vector<double>& x) {
    if (depth < ints_.size()) {
      const auto& v = inst_.variables[static_cast<std::size_t>(ints_[depth])];
      for (double z = std::ceil(v.lb); z <= v.ub; z += 1.0) {
        x[static_cast<std::size_t>(ints_[depth])] = z;
        enumerate(depth + 1, x);
      }
      return;
    }
    scan(x, step_, nullptr);
  }

  // True when interval arithmetic proves no point of box satisfies the rows and
  // the constraints without t.
  bool infeasible(const std::vector<Interval>& box) const {
    for (const auto& r : inst_.linear_rows) {
      double lo = 0.0, hi = 0.0;
      for (const Term& t : r.terms) {
        const Interval& b = box[static_cast<std::size_t>(t.var)];
        lo += t.coef > 0.0 ? t.coef * b.lo : t.coef * b.hi;
        hi += t.coef > 0.0 ? t.coef * b.hi : t.coef * b.lo;
      }
      const double tol = 1e-9 * (1.0 + std::abs(r.rhs));
      if (r.sense != Sense::Ge && lo > r.rhs + tol) return true;
      if (r.sense != Sense::Le && hi < r.rhs - tol) return true;
    }
    for (std::size_t k : without_t_) {
      try {
        if (interval_eval(inst_.dag, inst_.nonlinear[k].root, box).lo > 1e-9) return true;
      } catch (const DomainError&) {
      }
    }
    return false;
  }

  struct Grid {
    std::vector<Interval> box;  // integers fixed, t free
    std::vector<Interval> range;
    std::vector<long> count;
    double step;
    double coord(std::size_t d, long i) const {
      return i + 1 == count[d] ? range[d].hi : range[d].lo + static_cast<double>(i) * step;
    }
  };

  // Grid over the continuous variables (integers fixed in x), searched by
  // recursive bisection of index ranges with interval pruning.
  void scan(std::vector<double>& x, double step, const std::vector<Interval>* window) {
    Grid g;
    g.step = step;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const auto& v = inst_.variables[j];
      g.box.push_back(static_cast<int>(j) == epi_ ? Interval{v.lb, v.ub} : Interval::point(x[j]));
    }
    for (int j : conts_) {
      const auto& v = inst_.variables[static_cast<std::size_t>(j)];
      Interval r{v.lb, v.ub};
      if (window) r = intersect(r, (*window)[static_cast<std::size_t>(j)]);
      if (r.lo > r.hi) return;
      g.range.push_back(r);
      g.count.push_back(static_cast<long>(std::floor((r.hi - r.lo) / step + 1e-9)) + 1);
    }
    std::vector<long> lo(conts_.size(), 0), hi(conts_.size());
    for (std::size_t d = 0; d < conts_.size(); ++d) hi[d] = g.count[d] - 1;
    const auto b = sub_box(g, lo, hi);
    if (infeasible(b)) return;
    search(x, g, lo, hi, lower_bound(b));
  }

  std::vector<Interval> sub_box(const Grid& g, const std::vector<long>& lo, const std::vector<long>& hi) const {
    std::vector<Interval> b = g.box;
    for (std::size_t d = 0; d < conts_.size(); ++d) b[static_cast<std::size_t>(conts_[d])] = {g.coord(d, lo[d]), g.coord(d, hi[d])};
    return b;
  }

  void search(std::vector<double>& x, const Grid& g, const std::vector<long>& lo, const std::vector<long>& hi, double bound) {
    if (best_.feasible && bound >= best_.objective) return;
    long points = 1;
    std::size_t widest = 0;
    for (std::size_t d = 0; d < conts_.size(); ++d) {
      points *= hi[d] - lo[d] + 1;
      if (hi[d] - lo[d] > hi[widest] - lo[widest]) widest = d;
    }
    if (points <= kLeafPoints) {
      std::vector<long> i = lo;
      while (true) {
        for (std::size_t d = 0; d < conts_.size(); ++d) x[static_cast<std::size_t>(conts_[d])] = g.coord(d, i[d]);
        consider(x);
        std::size_t d = 0;
        while (d < conts_.size() && i[d] == hi[d]) {
          i[d] = lo[d];
          ++d;
        }
        if (d == conts_.size()) break;
        ++i[d];
      }
      return;
    }
    const long mid = lo[widest] + (hi[widest] - lo[widest]) / 2;
    std::vector<long> hi0 = hi, lo1 = lo;
    hi0[widest] = mid;
    lo1[widest] = mid + 1;
    const auto b0 = sub_box(g, lo, hi0), b1 = sub_box(g, lo1, hi);
    const bool f0 = !infeasible(b0), f1 = !infeasible(b1);
    const double l0 = f0 ? lower_bound(b0) : kInf, l1 = f1 ? lower_bound(b1) : kInf;
    if (l1 < l0) {
      if (f1) search(x, g, lo1, hi, l1);
      if (f0) search(x, g, lo, hi0, l0);
    } else {
      if (f0) search(x, g, lo, hi0, l0);
      if (f1) search(x, g, lo1, hi, l1);
    }
  }

  static constexpr long kLeafPoints = 27;

  void refine() {
    for (double fine = step_ / 10.0; fine >= step_ * 1e-4; fine /= 10.0) {
      std::vector<double> x = best_.x;
      const double radius = fine * 100.0;
      std::vector<Interval> window(x.size());
      for (int j : conts_) window[static_cast<std::size_t>(j)] = {x[static_cast<std::size_t>(j)] - radius, x[static_cast<std::size_t>(j)] + radius};
      scan(x, fine, &window);
    }
  }

  const Instance& inst_;
  double step_;
  std::vector<double> obj_;
  int epi_ = -1;
  std::vector<std::size_t> with_t_, without_t_;
  std::vector<int> ints_, conts_;
  GridResult best_;
};

inline GridResult grid_oracle(const Instance& inst, double step = 1e-3) { return GridOracle(inst, step).run(); }

}  // namespace branchsel::testing
