#include "branchsel/lp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "branchsel/errors.hpp"

namespace branchsel {

const char* lp_status_name(LpStatus s) {
  switch (s) {
    case LpStatus::Optimal: return "OPTIMAL";
    case LpStatus::Infeasible: return "INFEASIBLE";
    case LpStatus::Unbounded: return "UNBOUNDED";
    case LpStatus::IterLimit: return "ITER_LIMIT";
  }
  return "?";
}

LpModel lp_add_rows(const LpModel& model, const std::vector<LpRow>& rows) {
  LpModel out = model;
  for (const auto& r : rows) {
    if (static_cast<int>(r.coefs.size()) != model.num_cols()) throw DimensionError("row length does not match columns");
    out.rows.push_back(r);
  }
  return out;
}

LpModel lp_set_bounds(const LpModel& model, int var, Interval bounds) {
  if (var < 0 || var >= model.num_cols()) throw IndexError("column index out of range");
  if (bounds.lo > bounds.hi) throw ValidationError("lower bound exceeds upper bound");
  LpModel out = model;
  out.bounds[static_cast<std::size_t>(var)] = bounds;
  return out;
}

double lp_max_violation(const LpModel& model, const std::vector<double>& x) {
  double worst = 0.0;
  for (int j = 0; j < model.num_cols(); ++j) {
    const auto& b = model.bounds[static_cast<std::size_t>(j)];
    worst = std::max({worst, b.lo - x[static_cast<std::size_t>(j)], x[static_cast<std::size_t>(j)] - b.hi});
  }
  for (const auto& r : model.rows) {
    double act = 0.0;
    for (std::size_t j = 0; j < r.coefs.size(); ++j) act += r.coefs[j] * x[j];
    if (r.sense != Sense::Ge) worst = std::max(worst, act - r.rhs);
    if (r.sense != Sense::Le) worst = std::max(worst, r.rhs - act);
  }
  return worst;
}

namespace {

constexpr double kPivotTol = 1e-9;
constexpr int kRefactorEvery = 64;
constexpr int kDegenerateRunForBland = 30;

class Simplex {
 public:
  Simplex(const LpModel& model, const LpOptions& opt) : opt_(opt), n_(model.num_cols()), m_(model.num_rows()) {
    A_.resize(m_, n_);
    for (int i = 0; i < m_; ++i) {
      const auto& row = model.rows[static_cast<std::size_t>(i)];
      if (static_cast<int>(row.coefs.size()) != n_) throw DimensionError("row length does not match columns");
      for (int j = 0; j < n_; ++j) A_(i, j) = row.coefs[static_cast<std::size_t>(j)];
    }
    cost_ = Eigen::VectorXd::Zero(n_ + m_);
    lo_.resize(n_ + m_);
    hi_.resize(n_ + m_);
    for (int j = 0; j < n_; ++j) {
      cost_(j) = model.objective[static_cast<std::size_t>(j)];
      lo_[j] = model.bounds[static_cast<std::size_t>(j)].lo;
      hi_[j] = model.bounds[static_cast<std::size_t>(j)].hi;
    }
    for (int i = 0; i < m_; ++i) {
      const auto& row = model.rows[static_cast<std::size_t>(i)];
      lo_[n_ + i] = row.sense == Sense::Le ? -kInf : row.rhs;
      hi_[n_ + i] = row.sense == Sense::Ge ? kInf : row.rhs;
    }
    x_ = Eigen::VectorXd::Zero(n_ + m_);
    status_.assign(static_cast<std::size_t>(n_ + m_), ColStatus::AtLower);
  }

  void cold_start() {
    head_.resize(m_);
    for (int j = 0; j < n_; ++j) place_nonbasic(j, ColStatus::AtLower);
    for (int i = 0; i < m_; ++i) {
      head_[i] = n_ + i;
      status_[static_cast<std::size_t>(n_ + i)] = ColStatus::Basic;
    }
    refactor();
  }

  bool warm_start(const Basis& basis) {
    if (basis.num_structural != n_ || static_cast<int>(basis.status.size()) > n_ + m_ ||
        static_cast<int>(basis.status.size()) < n_) {
      return false;
    }
    std::vector<int> head;
    for (int j = 0; j < n_ + m_; ++j) {
      const ColStatus s = j < static_cast<int>(basis.status.size()) ? basis.status[static_cast<std::size_t>(j)] : ColStatus::Basic;
      if (s == ColStatus::Basic) {
        head.push_back(j);
        status_[static_cast<std::size_t>(j)] = ColStatus::Basic;
      } else {
        place_nonbasic(j, s);
      }
    }
    if (static_cast<int>(head.size()) != m_) return false;
    head_ = Eigen::VectorXi::Map(head.data(), m_);
    try {
      refactor();
    } catch (const NumericsError&) {
      return false;
    }
    return true;
  }

  LpSolution run() {
    LpSolution sol;
    int since_refactor = 0;
    int degenerate_run = 0;
    int recheck = 0;
    while (true) {
      if (sol.pivots >= opt_.pivot_limit) {
        sol.status = LpStatus::IterLimit;
        break;
      }
      // phase selection from the current basic infeasibilities
      Eigen::VectorXd cb(m_);
      bool phase_one = false;
      for (int i = 0; i < m_; ++i) {
        const int j = head_(i);
        if (x_(j) < lo_[j] - opt_.feasibility_tol) {
          cb(i) = -1.0;
          phase_one = true;
        } else if (x_(j) > hi_[j] + opt_.feasibility_tol) {
          cb(i) = 1.0;
          phase_one = true;
        } else {
          cb(i) = 0.0;
        }
      }
      if (!phase_one) {
        for (int i = 0; i < m_; ++i) cb(i) = cost_(head_(i));
      }
      const Eigen::VectorXd y = Binv_.transpose() * cb;
      // reduced costs: structural j: c_j - y'a_j, logical n+i: c - y'(-e_i) = y_i
      const Eigen::VectorXd dstruct = (phase_one ? Eigen::VectorXd(Eigen::VectorXd::Zero(n_)) : Eigen::VectorXd(cost_.head(n_))) -
                                      A_.transpose() * y;
      auto reduced = [&](int j) { return j < n_ ? dstruct(j) : y(j - n_); };

      const bool bland = degenerate_run >= kDegenerateRunForBland;
      int enter = -1;
      double best = 0.0;
      double dir = 0.0;
      for (int j = 0; j < n_ + m_; ++j) {
        const ColStatus s = status_[static_cast<std::size_t>(j)];
        if (s == ColStatus::Basic || lo_[j] == hi_[j]) continue;
        const double d = reduced(j);
        double gain = 0.0;
        double dj = 0.0;
        if ((s == ColStatus::AtLower || s == ColStatus::AtZero) && d < -opt_.optimality_tol) {
          gain = -d;
          dj = 1.0;
        } else if ((s == ColStatus::AtUpper || s == ColStatus::AtZero) && d > opt_.optimality_tol) {
          gain = d;
          dj = -1.0;
        }
        if (dj == 0.0) continue;
        if (bland) {
          enter = j;
          dir = dj;
          break;
        }
        if (gain > best) {
          best = gain;
          enter = j;
          dir = dj;
        }
      }

      if (enter < 0) {
        // verify on a fresh factorization before declaring a result
        refactor();
        since_refactor = 0;
        if (still_same_verdict(phase_one) || ++recheck > 3) {
          sol.status = phase_one ? LpStatus::Infeasible : LpStatus::Optimal;
          break;
        }
        continue;
      }

      const Eigen::VectorXd alpha = Binv_ * column(enter);
      double theta = kInf;
      int leave_row = -1;
      double leave_value = 0.0;
      double best_pivot = 0.0;
      for (int i = 0; i < m_; ++i) {
        const double rate = -dir * alpha(i);
        if (std::abs(alpha(i)) <= kPivotTol) continue;
        const int j = head_(i);
        const double xj = x_(j);
        double limit = kInf;
        double target = 0.0;
        if (rate < 0.0) {
          if (xj > hi_[j] + opt_.feasibility_tol) {
            target = hi_[j];
          } else if (xj >= lo_[j] - opt_.feasibility_tol && lo_[j] > -kInf) {
            target = lo_[j];
          } else {
            continue;
          }
          limit = std::max(0.0, (xj - target) / -rate);
        } else {
          if (xj < lo_[j] - opt_.feasibility_tol) {
            target = lo_[j];
          } else if (xj <= hi_[j] + opt_.feasibility_tol && hi_[j] < kInf) {
            target = hi_[j];
          } else {
            continue;
          }
          limit = std::max(0.0, (target - xj) / rate);
        }
        const double tie_tol = 1e-12 * (1.0 + (leave_row < 0 ? 0.0 : theta));
        bool take = false;
        if (leave_row < 0 || limit < theta - tie_tol) {
          take = true;
        } else if (limit <= theta + tie_tol) {
          take = bland ? head_(i) < head_(leave_row) : std::abs(alpha(i)) > best_pivot;
        }
        if (take) {
          theta = leave_row < 0 ? limit : std::min(theta, limit);
          leave_row = i;
          leave_value = target;
          best_pivot = std::abs(alpha(i));
        }
      }
      const double flip = hi_[enter] - lo_[enter];
      const bool bound_flip = flip < theta && flip < kInf;
      if (!bound_flip && leave_row < 0) {
        if (phase_one) throw NumericsError("phase one step is unbounded");
        sol.status = LpStatus::Unbounded;
        break;
      }
      const double step = bound_flip ? flip : theta;
      ++sol.pivots;
      degenerate_run = step <= 1e-12 ? degenerate_run + 1 : 0;
      // move along the edge
      x_(enter) += dir * step;
      for (int i = 0; i < m_; ++i) x_(head_(i)) -= dir * step * alpha(i);
      if (bound_flip) {
        place_nonbasic(enter, dir > 0 ? ColStatus::AtUpper : ColStatus::AtLower);
        continue;
      }
      const int leaving = head_(leave_row);
      x_(leaving) = leave_value;
      status_[static_cast<std::size_t>(leaving)] =
          leave_value == lo_[leaving] ? ColStatus::AtLower : ColStatus::AtUpper;
      head_(leave_row) = enter;
      status_[static_cast<std::size_t>(enter)] = ColStatus::Basic;
      // product-form update of the explicit inverse
      const double piv = alpha(leave_row);
      Binv_.row(leave_row) /= piv;
      for (int i = 0; i < m_; ++i) {
        if (i != leave_row && alpha(i) != 0.0) Binv_.row(i) -= alpha(i) * Binv_.row(leave_row);
      }
      if (++since_refactor >= kRefactorEvery) {
        refactor();
        since_refactor = 0;
      }
    }
    sol.x.assign(x_.data(), x_.data() + n_);
    if (sol.status == LpStatus::Unbounded) {
      sol.objective = -kInf;
    } else {
      sol.objective = 0.0;
      for (int j = 0; j < n_; ++j) sol.objective += cost_(j) * x_(j);
    }
    return sol;
  }

  Basis basis() const {
    Basis b;
    b.num_structural = n_;
    b.status = status_;
    return b;
  }

 private:
  Eigen::VectorXd column(int j) const {
    if (j < n_) return A_.col(j);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(m_);
    e(j - n_) = -1.0;
    return e;
  }

  void place_nonbasic(int j, ColStatus wanted) {
    ColStatus s = wanted;
    if (s == ColStatus::Basic) s = ColStatus::AtLower;
    if (s == ColStatus::AtLower && lo_[j] == -kInf) s = hi_[j] < kInf ? ColStatus::AtUpper : ColStatus::AtZero;
    if (s == ColStatus::AtUpper && hi_[j] == kInf) s = lo_[j] > -kInf ? ColStatus::AtLower : ColStatus::AtZero;
    if (s == ColStatus::AtZero && lo_[j] > -kInf) s = ColStatus::AtLower;
    if (s == ColStatus::AtZero && hi_[j] < kInf) s = ColStatus::AtUpper;
    status_[static_cast<std::size_t>(j)] = s;
    x_(j) = s == ColStatus::AtLower ? lo_[j] : s == ColStatus::AtUpper ? hi_[j] : 0.0;
  }

  void refactor() {
    if (m_ == 0) {
      Binv_.resize(0, 0);
      return;
    }
    Eigen::MatrixXd B(m_, m_);
    for (int i = 0; i < m_; ++i) B.col(i) = column(head_(i));
    Eigen::FullPivLU<Eigen::MatrixXd> lu(B);
    lu.setThreshold(1e-11);
    if (!lu.isInvertible()) throw NumericsError("singular basis");
    Binv_ = lu.inverse();
    // x_B = -B^{-1} N x_N
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m_);
    for (int j = 0; j < n_ + m_; ++j) {
      if (status_[static_cast<std::size_t>(j)] == ColStatus::Basic || x_(j) == 0.0) continue;
      if (j < n_) {
        rhs -= A_.col(j) * x_(j);
      } else {
        rhs(j - n_) += x_(j);
      }
    }
    const Eigen::VectorXd xb = Binv_ * rhs;
    for (int i = 0; i < m_; ++i) x_(head_(i)) = xb(i);
  }

  bool still_same_verdict(bool phase_one) const {
    bool infeasible = false;
    for (int i = 0; i < m_; ++i) {
      const int j = head_(i);
      if (x_(j) < lo_[j] - opt_.feasibility_tol || x_(j) > hi_[j] + opt_.feasibility_tol) infeasible = true;
    }
    return infeasible == phase_one;
  }

  LpOptions opt_;
  int n_;
  int m_;
  Eigen::MatrixXd A_;
  Eigen::VectorXd cost_;
  std::vector<double> lo_;
  std::vector<double> hi_;
  Eigen::VectorXd x_;
  std::vector<ColStatus> status_;
  Eigen::VectorXi head_;
  Eigen::MatrixXd Binv_;
};

}  // namespace

std::pair<LpSolution, Basis> lp_solve(const LpModel& model, const Basis* warm, const LpOptions& options) {
  if (options.pivot_limit < 1) throw ValidationError("pivot limit must be positive");
  if (static_cast<int>(model.bounds.size()) != model.num_cols()) throw DimensionError("bounds do not match columns");
  for (const auto& b : model.bounds) {
    if (b.lo > b.hi) {
      LpSolution sol;
      sol.status = LpStatus::Infeasible;
      sol.x.assign(static_cast<std::size_t>(model.num_cols()), 0.0);
      Simplex s(model, options);
      s.cold_start();
      return {sol, s.basis()};
    }
  }
  Simplex simplex(model, options);
  if (warm == nullptr || !simplex.warm_start(*warm)) simplex.cold_start();
  LpSolution sol = simplex.run();
  return {std::move(sol), simplex.basis()};
}

}  // namespace branchsel
