#pragma once

#include "cksc/common.hpp"

#include <vector>

namespace cksc::nqp {

// min  x'Qx + b'x   s.t.  x >= 0,  ||x||_0 <= sparsity
//
// Q must be symmetric and is expected PSD (after the beta repair); the
// solver tolerates indefinite Q by refusing coordinates with a
// non-positive diagonal.
struct QuadProgram {
  Matrix Q;
  Vector b;
  int sparsity = 1;

  Index size() const { return b.size(); }
  void validate() const;
};

struct Step {
  Index index;       // atom added in this round
  double objective;  // objective after the restricted inner solve
};

struct Solution {
  Vector x;
  std::vector<Index> support;
  double objective = 0.0;
  std::vector<Step> steps;
  int skipped_coordinates = 0;  // refused because Q_jj <= 0
};

struct Options {
  double tol = 1e-8;
  int max_inner = 100;  // coordinate-descent passes per added atom
};

// Exact minimizer of the objective along coordinate j, clamped at zero:
// max(0, x_j - g_j / (2 Q_jj)) with g the gradient at x. When Q_jj <= 0
// the coordinate is unusable; the current value is returned and *skipped
// (when given) is set.
double coordinate_min(const Matrix& Q, const Vector& b, const Vector& x, Index j, bool* skipped = nullptr);

double objective_value(const Matrix& Q, const Vector& b, const Vector& x);

// Greedy pursuit: repeatedly add the descent coordinate with the largest
// single-step objective decrease g_j^2 / (4 Q_jj) among j with g_j < -tol,
// then re-optimize over the support with cyclic non-negative coordinate
// descent. Support coordinates driven to zero are pruned, freeing a slot.
// The recorded per-step objectives are non-increasing.
Solution solve(const QuadProgram& p, const Options& opt = {});

}  // namespace cksc::nqp
