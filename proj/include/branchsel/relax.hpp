#pragma once

// Linear outer approximation of nonlinear constraints.
//
// For a constraint g(x) <= 0 a linear underestimator of g over the current box
// is composed bottom-up through the expression graph: every node carries an
// affine lower and upper bound in x, built from tangents of convex atoms,
// secants of concave atoms and McCormick envelopes of products, linearized at
// the separation point. The underestimator of the root gives the cut
// L(x) <= 0, valid for every point of the box that satisfies the constraint.

#include <optional>
#include <span>
#include <vector>

#include "branchsel/instance.hpp"
#include "branchsel/lp.hpp"

namespace branchsel {

enum class CutOrigin { TangentConvex, SecantConcave, McCormickBilinear };

const char* cut_origin_name(CutOrigin o);

struct Cut {
  std::vector<Term> row;  // a'x <= rhs
  double rhs = 0.0;
  CutOrigin origin = CutOrigin::TangentConvex;
  int constraint = -1;  // index into Instance::nonlinear
};

struct Separation {
  std::vector<Cut> cuts;
  std::vector<int> unseparable;  // violated constraints for which no cut exists
};

inline constexpr double kCutViolationTol = 1e-6;

/// Cuts for every nonlinear constraint violated at point by more than
/// min_violation. Passing -inf as min_violation emits every available
/// underestimator, which is how the initial relaxation is seeded.
Separation separate_cuts(const Instance& instance, std::span<const double> point, std::span<const Interval> box,
                         double min_violation = kCutViolationTol);

/// log10(max|a| / min|a|) over the nonzero coefficients; 0 for one nonzero.
double cut_coeff_spread(const Cut& cut);

LpRow cut_to_lp_row(const Cut& cut, int num_cols);

/// LP with the objective and linear rows of the instance over box.
LpModel base_lp(const Instance& instance, std::span<const Interval> box);

struct RootRelaxInfo {
  LpModel model;
  std::vector<Cut> cuts_added;
  int rounds = 0;
  LpSolution lp_solution;
  Basis basis;
  int lp_solves = 0;
  long pivots = 0;
};

/// Reference point for seeding: box midpoints, or the projection of 0 onto half-open boxes.
std::vector<double> reference_point(std::span<const Interval> box);

/// Starts from the linear rows, then alternates LP solves and separation until
/// nothing is violated by more than 1e-6 or round_limit rounds have been made.
/// When the first LP is unbounded, underestimators at the reference point are
/// added before the rounds begin.
RootRelaxInfo build_root_relaxation(const Instance& instance, std::span<const Interval> box, int round_limit = 10);

}  // namespace branchsel
