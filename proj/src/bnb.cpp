#include "branchsel/bnb.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <memory>
#include <queue>

#include "branchsel/errors.hpp"

namespace branchsel {

const char* rule_name(BranchRule r) {
  switch (r) {
    case BranchRule::PreferInt: return "prefer-int";
    case BranchRule::Mixed: return "mixed";
    case BranchRule::PreferSpatial: return "prefer-spatial";
  }
  return "?";
}

BranchRule parse_rule(std::string_view text) {
  std::string key;
  for (char c : text) {
    if (c != '-' && c != '_') key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (key == "preferint") return BranchRule::PreferInt;
  if (key == "mixed") return BranchRule::Mixed;
  if (key == "preferspatial") return BranchRule::PreferSpatial;
  throw ValidationError("unknown branching rule '" + std::string(text) + "'");
}

const char* solve_status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "OPTIMAL";
    case SolveStatus::Infeasible: return "INFEASIBLE";
    case SolveStatus::WorkLimit: return "WORK_LIMIT";
    case SolveStatus::Unbounded: return "UNBOUNDED";
  }
  return "?";
}

namespace {

bool branchable(const Interval& b) { return b.hi - b.lo > 1e-9; }

double fractionality(double v) { return std::min(v - std::floor(v), std::ceil(v) - v); }

// Branchable variables of each nonlinear constraint: those inside a nonlinear
// atom. Variables entering only linearly never tighten the relaxation.
std::vector<std::vector<int>> constraint_variables(const Instance& inst) {
  std::vector<std::vector<int>> out;
  out.reserve(inst.nonlinear.size());
  for (const auto& c : inst.nonlinear) out.push_back(nonlinear_variables(inst.dag, c.root));
  return out;
}

std::vector<BranchCandidate> detect(const Instance& inst, const std::vector<std::vector<int>>& vars,
                                    std::span<const Interval> box, std::span<const double> x,
                                    double tol = kFeasibilityTol) {
  const int n = inst.n();
  std::vector<double> spatial(static_cast<std::size_t>(n), 0.0), spatial_score(static_cast<std::size_t>(n), 0.0);
  std::vector<char> fractional(static_cast<std::size_t>(n), 0);
  std::vector<BranchCandidate> out;
  for (int j = 0; j < n; ++j) {
    if (!inst.variables[static_cast<std::size_t>(j)].is_integer) continue;
    const double f = fractionality(x[static_cast<std::size_t>(j)]);
    if (f > kIntegralityTol) fractional[static_cast<std::size_t>(j)] = 1;
  }
  std::vector<double> scratch;
  for (std::size_t k = 0; k < inst.nonlinear.size(); ++k) {
    double g;
    try {
      g = eval(inst.dag, make_tape(inst.dag, inst.nonlinear[k].root), x, scratch);
    } catch (const DomainError&) {
      g = kInf;
    }
    if (!(g > tol)) continue;
    const double v = std::isfinite(g) ? g / (1.0 + std::abs(g)) : 1.0;
    double widest = 0.0;
    for (int j : vars[k]) widest = std::max(widest, box[static_cast<std::size_t>(j)].width());
    for (int j : vars[k]) {
      const std::size_t u = static_cast<std::size_t>(j);
      spatial[u] = std::max(spatial[u], v);
      // the score favors the widest domains of the constraint
      const double w = box[u].width();
      const double share = std::isinf(widest) ? (std::isinf(w) ? 1.0 : 0.0) : (widest > 0.0 ? w / widest : 0.0);
      spatial_score[u] = std::max(spatial_score[u], v * share);
    }
  }
  for (int j = 0; j < n; ++j) {
    const std::size_t u = static_cast<std::size_t>(j);
    if (fractional[u]) {
      const double f = fractionality(x[u]);
      out.push_back({j, CandidateKind::Integer, f, f});
    }
    if (spatial[u] > 0.0 && branchable(box[u])) out.push_back({j, CandidateKind::Spatial, spatial[u], spatial_score[u]});
  }
  return out;
}

}  // namespace

std::vector<BranchCandidate> detect_candidates(const Instance& instance, std::span<const Interval> box,
                                               const LpSolution& lp) {
  return detect(instance, constraint_variables(instance), box, lp.x);
}

const BranchCandidate& select_branching(BranchRule rule, std::span<const BranchCandidate> candidates) {
  if (candidates.empty()) throw EmptyCandidatesError("no branching candidates");
  auto best_of = [&](auto accept) -> const BranchCandidate* {
    const BranchCandidate* best = nullptr;
    for (const auto& c : candidates) {
      if (!accept(c)) continue;
      if (!best || c.score > best->score || (c.score == best->score && c.var < best->var)) best = &c;
    }
    return best;
  };
  auto of_kind = [](CandidateKind k) { return [k](const BranchCandidate& c) { return c.kind == k; }; };
  auto any = [](const BranchCandidate&) { return true; };
  const BranchCandidate* pick = nullptr;
  switch (rule) {
    case BranchRule::PreferInt:
      pick = best_of(of_kind(CandidateKind::Integer));
      if (!pick) pick = best_of(of_kind(CandidateKind::Spatial));
      break;
    case BranchRule::PreferSpatial:
      pick = best_of(of_kind(CandidateKind::Spatial));
      if (!pick) pick = best_of(of_kind(CandidateKind::Integer));
      break;
    case BranchRule::Mixed:
      pick = best_of(any);
      break;
  }
  return *pick;
}

BranchChildren branch(std::span<const Interval> box, const BranchCandidate& cand, const LpSolution& lp,
                      const Instance& instance) {
  const std::size_t j = static_cast<std::size_t>(cand.var);
  if (j >= box.size()) throw IndexError("branching variable out of range");
  const Interval b = box[j];
  const double xv = lp.x.at(j);
  BranchChildren ch;
  ch.down.assign(box.begin(), box.end());
  ch.up.assign(box.begin(), box.end());
  if (cand.kind == CandidateKind::Integer) {
    ch.point = xv;
    ch.down[j].hi = std::floor(xv);
    ch.up[j].lo = std::ceil(xv);
  } else {
    double p;
    const double guard = kBranchPointGuard;
    if (b.is_bounded()) {
      const double w = b.hi - b.lo;
      p = std::clamp(xv, b.lo + 0.2 * w, b.hi - 0.2 * w);
    } else if (b.lo > -kInf) {
      p = std::max(std::min(xv, guard), -guard);
      p = std::max(p, b.lo + 1.0);
    } else if (b.hi < kInf) {
      p = std::max(std::min(xv, guard), -guard);
      p = std::min(p, b.hi - 1.0);
    } else {
      p = std::max(std::min(xv, guard), -guard);
    }
    ch.point = p;
    if (instance.variables.at(j).is_integer) {
      ch.down[j].hi = std::floor(p);
      ch.up[j].lo = std::ceil(p);
    } else {
      ch.down[j].hi = p;
      ch.up[j].lo = p;
    }
  }
  const bool down_same = ch.down[j] == b, up_same = ch.up[j] == b;
  if (down_same && up_same) throw DegenerateBranchError("branching does not shrink the domain");
  return ch;
}

namespace {

struct ChildProbe {
  LpStatus status = LpStatus::IterLimit;
  double objective = 0.0;
  long pivots = 0;
};

// LP, one separation round, LP; at most pivot_cap pivots in total.
ChildProbe probe_child(const Instance& inst, const LpModel& base, std::span<const Interval> child_box,
                       const Basis& warm, int pivot_cap) {
  ChildProbe out;
  LpModel model = base;
  model.bounds.assign(child_box.begin(), child_box.end());
  LpOptions opt;
  opt.pivot_limit = pivot_cap;
  try {
    auto [sol, basis] = lp_solve(model, &warm, opt);
    out.pivots = sol.pivots;
    out.status = sol.status;
    out.objective = sol.objective;
    if (sol.status != LpStatus::Optimal) return out;
    const int left = pivot_cap - sol.pivots;
    if (left < 1) return out;
    const Separation sep = separate_cuts(inst, sol.x, child_box);
    if (sep.cuts.empty()) return out;
    std::vector<LpRow> rows;
    for (const Cut& c : sep.cuts) rows.push_back(cut_to_lp_row(c, inst.n()));
    model = lp_add_rows(model, rows);
    opt.pivot_limit = left;
    auto [sol2, basis2] = lp_solve(model, &basis, opt);
    out.pivots += sol2.pivots;
    if (sol2.status == LpStatus::Optimal || sol2.status == LpStatus::Infeasible) {
      out.status = sol2.status;
      out.objective = std::max(out.objective, sol2.objective);
    }
  } catch (const NumericsError&) {
    out.status = LpStatus::IterLimit;
  }
  return out;
}

}  // namespace

RootSbStats strong_branch_root(const Instance& instance, std::span<const Interval> box, const RootRelaxInfo& root,
                               std::vector<BranchCandidate>& candidates, const StrongBranchOptions& options) {
  RootSbStats st;
  const double z = root.lp_solution.objective;
  const double scale = 1.0 + std::abs(z);
  for (const CandidateKind kind : {CandidateKind::Integer, CandidateKind::Spatial}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (candidates[i].kind == kind) idx.push_back(i);
    }
    (kind == CandidateKind::Integer ? st.n_int_viols : st.n_nonlin_viols) = static_cast<int>(idx.size());
    if (idx.empty()) continue;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      if (candidates[a].violation != candidates[b].violation) return candidates[a].violation > candidates[b].violation;
      return candidates[a].var < candidates[b].var;
    });
    for (std::size_t i : idx) candidates[i].score = 0.0;
    const std::size_t k = std::min(idx.size(), static_cast<std::size_t>(std::max(options.k_max, 0)));
    double rel_sum = 0.0, pivot_sum = 0.0, best_product = 0.0;
    int evaluated = 0;
    std::vector<std::pair<std::size_t, double>> products;
    for (std::size_t e = 0; e < k; ++e) {
      BranchCandidate& cand = candidates[idx[e]];
      BranchChildren ch;
      try {
        ch = branch(box, cand, root.lp_solution, instance);
      } catch (const DegenerateBranchError&) {
        continue;
      }
      double delta[2];
      bool infeasible = false;
      const std::vector<Interval>* boxes[2] = {&ch.down, &ch.up};
      for (int side = 0; side < 2; ++side) {
        const ChildProbe p = probe_child(instance, root.model, *boxes[side], root.basis, options.pivot_cap);
        pivot_sum += static_cast<double>(p.pivots);
        st.pivots += p.pivots;
        if (p.status == LpStatus::Infeasible) {
          delta[side] = scale;
          infeasible = true;
        } else if (p.status == LpStatus::Optimal) {
          delta[side] = std::max(0.0, p.objective - z);
        } else {
          delta[side] = 0.0;
        }
      }
      ++evaluated;
      rel_sum += std::min(delta[0], delta[1]) / scale;
      const double product = std::max(delta[0], 1e-8) * std::max(delta[1], 1e-8);
      products.emplace_back(idx[e], product);
      best_product = std::max(best_product, product);
      if (kind == CandidateKind::Spatial && infeasible) ++st.spat_entities_fixed;
    }
    for (const auto& [i, prod] : products) candidates[i].score = best_product > 0.0 ? prod / best_product : 0.0;
    const double rel = evaluated ? rel_sum / evaluated : 0.0;
    const double work = evaluated ? pivot_sum / (2.0 * evaluated) : 0.0;
    if (kind == CandidateKind::Integer) {
      st.avg_rel_bnd_chng_int = rel;
      st.avg_work_int = work;
    } else {
      st.avg_rel_bnd_chng_spat = rel;
      st.avg_work_spat = work;
    }
  }
  return st;
}

namespace {

constexpr int kPolishRounds = 20;
constexpr double kPolishTol = 1e-9;
// Points violating by more than this are refined by branching while possible.
constexpr double kAcceptTol = 1e-8;

// Cuts added below the root, shared along a tree path.
struct CutChain {
  std::shared_ptr<const CutChain> parent;
  std::vector<LpRow> rows;
};

struct Node {
  long id = 0;
  std::vector<Interval> box;
  double bound = -kInf;
  std::shared_ptr<const CutChain> cuts;
  std::shared_ptr<const Basis> basis;
  int depth = 0;
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.id < b.id;  // newest first among equal bounds
  }
};

class Tree {
 public:
  Tree(const Instance& inst, const SolveOptions& opt) : inst_(inst), opt_(opt), vars_(constraint_variables(inst)) {}

  SolveStats run() {
    const std::vector<Interval> box = inst_.bounds();
    try {
      st_.root = build_root_relaxation(inst_, box, opt_.root_round_limit);
    } catch (const NumericsError&) {
      st_.root = RootRelaxInfo{};
      st_.root.model = base_lp(inst_, box);
      st_.root.lp_solution.status = LpStatus::IterLimit;
    }
    st_.lp_pivots += st_.root.pivots;
    work_ += st_.root.pivots;
    st_.nodes = 1;
    work_ += 10;
    const LpSolution& lp = st_.root.lp_solution;
    if (lp.status == LpStatus::Infeasible) return finish(SolveStatus::Infeasible);
    if (lp.status == LpStatus::Unbounded) return finish(SolveStatus::Unbounded);

    auto root_basis = std::make_shared<const Basis>(st_.root.basis);
    if (lp.status != LpStatus::Optimal) {
      fallback_split(box, -kInf, nullptr, nullptr, 0);
    } else {
      std::vector<BranchCandidate> cands = detect(inst_, vars_, box, lp.x);
      if (cands.empty()) {
        if (!polish_and_accept(st_.root.model, lp, st_.root.basis, box)) {
          cands = fine_candidates(box, lp.x);
          expand(box, lp.objective, lp, cands, nullptr, root_basis, 0);
        }
      } else {
        st_.sb = strong_branch_root(inst_, box, st_.root, cands, opt_.strong_branching);
        work_ += st_.sb.pivots;
        st_.root_candidates = cands;
        expand(box, lp.objective, lp, cands, nullptr, root_basis, 0);
      }
    }
    if (work_ > opt_.work_limit) return finish(SolveStatus::WorkLimit);

    while (!open_.empty()) {
      Node node = open_.top();
      open_.pop();
      if (pruned(node.bound)) continue;
      ++st_.nodes;
      work_ += 10;
      st_.max_depth = std::max(st_.max_depth, node.depth);
      process(node);
      if (work_ > opt_.work_limit) return finish(SolveStatus::WorkLimit);
    }
    return finish(incumbent_ ? SolveStatus::Optimal : SolveStatus::Infeasible);
  }

 private:
  bool pruned(double bound) const { return incumbent_ && bound >= *incumbent_ - 1e-9; }

  void consider_incumbent(std::span<const double> x) {
    if (max_violation(inst_, x) > kFeasibilityTol) return;
    const double obj = objective_value(inst_, x);
    if (!incumbent_ || obj < *incumbent_) {
      incumbent_ = obj;
      st_.solution.assign(x.begin(), x.end());
    }
  }

  // A candidate-free point may still violate constraints by up to the
  // feasibility tolerance. Further separation rounds move it closer to the
  // feasible set or prove the node empty. The least violated point is accepted
  // when it is within kAcceptTol or when no variable is left to split;
  // otherwise false is returned and the caller branches on fine_candidates.
  bool polish_and_accept(LpModel model, LpSolution lp, Basis basis, std::span<const Interval> box) {
    const std::vector<double> start = lp.x;
    std::vector<double> best = lp.x;
    double best_violation = max_violation(inst_, lp.x);
    for (int round = 0; round < kPolishRounds && best_violation > kPolishTol; ++round) {
      const Separation sep = separate_cuts(inst_, lp.x, box, kPolishTol);
      if (sep.cuts.empty()) break;
      std::vector<LpRow> rows;
      for (const Cut& c : sep.cuts) rows.push_back(cut_to_lp_row(c, inst_.n()));
      model = lp_add_rows(model, rows);
      auto res = solve_lp(model, &basis);
      if (res && res->first.status == LpStatus::Infeasible) return true;
      if (!res || res->first.status != LpStatus::Optimal) break;
      lp = std::move(res->first);
      basis = std::move(res->second);
      const double v = max_violation(inst_, lp.x);
      if (v < best_violation) {
        best = lp.x;
        best_violation = v;
      }
    }
    if (best_violation > kAcceptTol && !fine_candidates(box, start).empty()) return false;
    consider_incumbent(best);
    return true;
  }

  std::vector<BranchCandidate> fine_candidates(std::span<const Interval> box, std::span<const double> x) const {
    return detect(inst_, vars_, box, x, kAcceptTol);
  }

  LpModel node_model(const Node& node) const {
    LpModel m = st_.root.model;
    m.bounds = node.box;
    std::vector<const CutChain*> chain;
    for (const CutChain* c = node.cuts.get(); c; c = c->parent.get()) chain.push_back(c);
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
      for (const LpRow& r : (*it)->rows) m.rows.push_back(r);
    }
    return m;
  }

  std::optional<std::pair<LpSolution, Basis>> solve_lp(const LpModel& m, const Basis* warm) {
    try {
      auto res = lp_solve(m, warm);
      st_.lp_pivots += res.first.pivots;
      work_ += res.first.pivots;
      if (res.first.status == LpStatus::IterLimit) return std::nullopt;
      return res;
    } catch (const NumericsError&) {
      return std::nullopt;
    }
  }

  void process(const Node& node) {
    LpModel model = node_model(node);
    auto first = solve_lp(model, node.basis.get());
    if (!first) {
      fallback_split(node.box, node.bound, node.cuts, node.basis, node.depth);
      return;
    }
    if (first->first.status == LpStatus::Infeasible) return;
    if (first->first.status == LpStatus::Unbounded) {
      fallback_split(node.box, node.bound, node.cuts, node.basis, node.depth);
      return;
    }
    double bound = std::max(node.bound, first->first.objective);
    if (pruned(bound)) return;

    LpSolution lp = std::move(first->first);
    auto basis = std::make_shared<const Basis>(std::move(first->second));
    std::shared_ptr<const CutChain> cuts = node.cuts;
    Separation sep = separate_cuts(inst_, lp.x, node.box);
    if (!sep.cuts.empty()) {
      auto link = std::make_shared<CutChain>();
      link->parent = node.cuts;
      for (const Cut& c : sep.cuts) link->rows.push_back(cut_to_lp_row(c, inst_.n()));
      model = lp_add_rows(model, link->rows);
      cuts = link;
      auto second = solve_lp(model, basis.get());
      if (second) {
        if (second->first.status == LpStatus::Infeasible) return;
        if (second->first.status == LpStatus::Optimal) {
          lp = std::move(second->first);
          basis = std::make_shared<const Basis>(std::move(second->second));
          bound = std::max(bound, lp.objective);
          if (pruned(bound)) return;
        }
      }
    }
    std::vector<BranchCandidate> cands = detect(inst_, vars_, node.box, lp.x);
    if (cands.empty()) {
      if (polish_and_accept(std::move(model), lp, *basis, node.box)) return;
      cands = fine_candidates(node.box, lp.x);
    }
    expand(node.box, bound, lp, cands, cuts, basis, node.depth);
  }

  void push(std::vector<Interval> box, double bound, std::shared_ptr<const CutChain> cuts,
            std::shared_ptr<const Basis> basis, int depth) {
    open_.push(Node{next_id_++, std::move(box), bound, std::move(cuts), std::move(basis), depth});
  }

  void expand(std::span<const Interval> box, double bound, const LpSolution& lp, std::vector<BranchCandidate>& cands,
              const std::shared_ptr<const CutChain>& cuts, const std::shared_ptr<const Basis>& basis, int depth) {
    while (!cands.empty()) {
      const BranchCandidate& pick = select_branching(opt_.rule, cands);
      try {
        BranchChildren ch = branch(box, pick, lp, inst_);
        ++(pick.kind == CandidateKind::Integer ? st_.integer_branches : st_.spatial_branches);
        push(std::move(ch.down), bound, cuts, basis, depth + 1);
        push(std::move(ch.up), bound, cuts, basis, depth + 1);
        return;
      } catch (const DegenerateBranchError&) {
        const int var = pick.var;
        const CandidateKind kind = pick.kind;
        std::erase_if(cands, [&](const BranchCandidate& c) { return c.var == var && c.kind == kind; });
      }
    }
  }

  // Bisects the widest splittable variable when the node LP could not be solved.
  void fallback_split(std::span<const Interval> box, double bound, const std::shared_ptr<const CutChain>& cuts,
                      const std::shared_ptr<const Basis>& basis, int depth) {
    int best = -1;
    double width = 0.0;
    for (int j = 0; j < inst_.n(); ++j) {
      const Interval& b = box[static_cast<std::size_t>(j)];
      const double w = b.hi - b.lo;
      if (!branchable(b) || (inst_.variables[static_cast<std::size_t>(j)].is_integer && w < 1.0)) continue;
      if (w > width) {
        width = w;
        best = j;
      }
    }
    if (best < 0) return;
    LpSolution mid;
    mid.x = reference_point(box);
    const BranchCandidate cand{best, CandidateKind::Spatial, 1.0, 1.0};
    try {
      BranchChildren ch = branch(box, cand, mid, inst_);
      push(std::move(ch.down), bound, cuts, basis, depth + 1);
      push(std::move(ch.up), bound, cuts, basis, depth + 1);
    } catch (const DegenerateBranchError&) {
    }
  }

  SolveStats finish(SolveStatus status) {
    st_.status = status;
    st_.work = work_;
    st_.objective = incumbent_;
    if (!incumbent_) st_.solution.clear();
    double open_bound = kInf;
    if (!open_.empty()) open_bound = open_.top().bound;
    if (status == SolveStatus::Optimal) st_.dual_bound = *incumbent_;
    else if (status == SolveStatus::WorkLimit) st_.dual_bound = std::min(open_bound, incumbent_.value_or(kInf));
    else if (status == SolveStatus::Infeasible) st_.dual_bound = kInf;
    return std::move(st_);
  }

  const Instance& inst_;
  const SolveOptions& opt_;
  std::vector<std::vector<int>> vars_;
  SolveStats st_;
  long work_ = 0;
  long next_id_ = 1;
  std::optional<double> incumbent_;
  std::priority_queue<Node, std::vector<Node>, NodeOrder> open_;
};

}  // namespace

SolveStats solve(const Instance& instance, const SolveOptions& options) {
  if (options.work_limit < 1) throw ValidationError("work limit must be positive");
  return Tree(instance, options).run();
}

SolveStats solve(const Instance& instance, BranchRule rule, long work_limit) {
  SolveOptions opt;
  opt.rule = rule;
  opt.work_limit = work_limit;
  return solve(instance, opt);
}

}  // namespace branchsel
