#include "cksc/nqp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cksc::nqp {

namespace {

constexpr double kSymmetryTol = 1e-10;
constexpr double kDiagEps = 1e-12;

// objective restricted to the support, recomputed exactly: O(|S|^2)
double support_objective(const Matrix& Q, const Vector& b, const Vector& x, const std::vector<Index>& support) {
  double value = 0.0;
  for (const Index j : support) value += b(j) * x(j);
  for (const Index j : support) {
    for (const Index l : support) value += x(j) * Q(j, l) * x(l);
  }
  return value;
}

}  // namespace

void QuadProgram::validate() const {
  if (Q.rows() != Q.cols()) {
    throw ValidationError("nqp: Q is " + std::to_string(Q.rows()) + "x" + std::to_string(Q.cols()) +
                          ", expected square");
  }
  if (b.size() != Q.rows()) {
    throw ValidationError("nqp: b has length " + std::to_string(b.size()) + ", expected " + std::to_string(Q.rows()));
  }
  if (!Q.allFinite() || !b.allFinite()) throw NumericError("nqp: non-finite problem data");
  const double skew = (Q - Q.transpose()).cwiseAbs().maxCoeff();
  if (!(skew <= kSymmetryTol)) {
    throw ValidationError("nqp: Q not symmetric, max |Q - Q^T| = " + std::to_string(skew));
  }
  if (sparsity < 1 || sparsity > Q.rows()) {
    throw ValidationError("nqp: sparsity " + std::to_string(sparsity) + " outside [1, " + std::to_string(Q.rows()) +
                          "]");
  }
}

double coordinate_min(const Matrix& Q, const Vector& b, const Vector& x, Index j, bool* skipped) {
  if (skipped != nullptr) *skipped = false;
  if (Q(j, j) <= kDiagEps) {
    if (skipped != nullptr) *skipped = true;
    return x(j);
  }
  const double gradient = 2.0 * Q.row(j).dot(x) + b(j);
  return std::max(0.0, x(j) - gradient / (2.0 * Q(j, j)));
}

double objective_value(const Matrix& Q, const Vector& b, const Vector& x) {
  return x.dot(Q * x) + b.dot(x);
}

Solution solve(const QuadProgram& p, const Options& opt) {
  p.validate();
  if (!(opt.tol > 0.0) || opt.max_inner < 1) {
    throw ValidationError("nqp: tol must be positive and max_inner >= 1");
  }

  const Index m = p.size();
  const int cap = p.sparsity;

  Solution sol;
  sol.x = Vector::Zero(m);
  Vector gradient = p.b;  // 2Qx + b at x = 0
  std::vector<bool> in_support(static_cast<std::size_t>(m), false);

  // each addition strictly decreases the objective; the cap only guards
  // against floating-point stalls of the prune/re-add cycle
  const int addition_budget = static_cast<int>(m) + 4 * cap + 8;
  int additions = 0;

  while (static_cast<int>(sol.support.size()) < cap && additions < addition_budget) {
    // pick the usable descent coordinate with the largest one-step decrease
    Index best = -1;
    double best_gain = 0.0;
    for (Index j = 0; j < m; ++j) {
      if (in_support[static_cast<std::size_t>(j)]) continue;
      if (!(gradient(j) < -opt.tol)) continue;
      if (p.Q(j, j) <= kDiagEps) {
        ++sol.skipped_coordinates;
        continue;
      }
      const double gain = gradient(j) * gradient(j) / (4.0 * p.Q(j, j));
      if (gain > best_gain) {
        best_gain = gain;
        best = j;
      }
    }
    if (best < 0) break;

    ++additions;
    sol.support.push_back(best);
    in_support[static_cast<std::size_t>(best)] = true;

    // cyclic non-negative coordinate descent restricted to the support
    double inner_obj = support_objective(p.Q, p.b, sol.x, sol.support);
    for (int pass = 0; pass < opt.max_inner; ++pass) {
      const double pass_start = inner_obj;
      for (const Index j : sol.support) {
        if (p.Q(j, j) <= kDiagEps) {
          ++sol.skipped_coordinates;
          continue;
        }
        const double updated = std::max(0.0, sol.x(j) - gradient(j) / (2.0 * p.Q(j, j)));
        const double delta = updated - sol.x(j);
        if (delta != 0.0) {
          sol.x(j) = updated;
          gradient.noalias() += 2.0 * delta * p.Q.col(j);
        }
      }
      inner_obj = support_objective(p.Q, p.b, sol.x, sol.support);
      if (std::isnan(inner_obj)) {
        throw NumericError("nqp: NaN objective after atom " + std::to_string(best) + ", pass " + std::to_string(pass) +
                           ", support size " + std::to_string(sol.support.size()));
      }
      if (pass_start - inner_obj < opt.tol) break;
    }

    // prune coordinates driven to zero; they free cardinality slots
    std::erase_if(sol.support, [&](Index j) {
      if (sol.x(j) == 0.0) {
        in_support[static_cast<std::size_t>(j)] = false;
        return true;
      }
      return false;
    });

    sol.objective = support_objective(p.Q, p.b, sol.x, sol.support);
    sol.steps.push_back(Step{best, sol.objective});
  }

  if (!sol.x.allFinite()) {
    throw NumericError("nqp: non-finite solution after " + std::to_string(sol.steps.size()) + " atom additions");
  }
  sol.objective = support_objective(p.Q, p.b, sol.x, sol.support);
  return sol;
}

}  // namespace cksc::nqp
