#pragma once

#include "cksc/common.hpp"
#include "cksc/nqp.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cksc {

// p x N one-hot class indicator.
struct LabelMatrix {
  Matrix values;
  std::vector<int> class_of;  // class index per sample column

  int classes() const { return static_cast<int>(values.rows()); }
  Index samples() const { return values.cols(); }

  static LabelMatrix from_ids(const std::vector<int>& ids, int classes);
  void validate() const;
};

struct Hyperparams {
  double alpha = 0.1;    // discriminant weight (the paper tunes it as lambda)
  int sparsity = 4;      // per-column cardinality cap on codes and atoms
  int atoms = 0;         // dictionary size; 0 = classes * sparsity
  int max_outer = 50;
  double rel_tol = 1e-4;
  std::uint64_t seed = 0;
  nqp::Options solver;

  int resolved_atoms(int classes) const { return atoms > 0 ? atoms : classes * sparsity; }
  void validate() const;
};

struct TrainedModel {
  Matrix dictionary;  // N x k, non-negative, kernel-unit-norm columns
  LabelMatrix labels;
  Matrix kernel;      // N x N training Gram matrix
  double beta = 0.0;
  Hyperparams hyper;
  std::vector<double> objective_trace;  // initial value, then one entry per half-step

  // provenance for the recall phase
  std::string kernel_hash;
  std::vector<std::string> class_names;
  std::optional<double> delta;  // training bandwidth, when built from raw series
  std::optional<int> band;
};

// Signalled by build_a_subproblem when the atom's code row is all-zero.
struct DeadAtomError : Error {
  using Error::Error;
};

// Ridge making both K + beta*I and V + beta*I PSD, where
// V = K + alpha * H'(1 - I)H. Computed once per training run.
double compute_beta(const Matrix& kernel, const LabelMatrix& labels, double alpha);

// Sub-problem for one code column:
//   Q = A'(K + beta I)A,  b = [alpha (1 - h_i')HA - 2 K_i A]'
nqp::QuadProgram build_x_subproblem(const Matrix& kernel, const Matrix& dictionary, const LabelMatrix& labels,
                                    Index column, double alpha, double beta, int sparsity);

// E_i = I - sum_{j != i} a_j x^j
Matrix residual_operator(const Matrix& dictionary, const Matrix& codes, Index atom);

// Sub-problem for one dictionary column:
//   Q = ||x^i||^2 (K + beta I)
//   b = [x^i (alpha (1 - H')H + 2 beta (I - E_i') - 2 E_i' K)]'
nqp::QuadProgram build_a_subproblem(const Matrix& kernel, const LabelMatrix& labels, const Matrix& codes,
                                    const Matrix& residual_op, Index atom, double alpha, double beta, int sparsity);

// All code columns re-solved against the fixed dictionary; columns are
// independent and may run in parallel.
Matrix update_codes(const Matrix& kernel, const LabelMatrix& labels, const Matrix& dictionary,
                    const Hyperparams& hyper, double beta, int threads = 1);

// Dictionary columns updated strictly in order, each seeing the columns
// already updated this sweep; every live column is kernel-renormalized,
// dead atoms are re-seeded from the worst-reconstructed class.
Matrix update_dictionary(const Matrix& kernel, const LabelMatrix& labels, Matrix dictionary, const Matrix& codes,
                         const Hyperparams& hyper, double beta, Rng& rng);

// Tr(K) + Tr(X'A'KAX) - 2 Tr(KAX) + beta ||AX||_F^2 + alpha Tr((1 - H')HAX)
double objective(const Matrix& kernel, const LabelMatrix& labels, const Matrix& dictionary, const Matrix& codes,
                 double alpha, double beta);

// Class-pure random seeds: each atom is a random convex combination of up
// to `sparsity` samples of its class, kernel-normalized.
Matrix init_dictionary(const Matrix& kernel, const LabelMatrix& labels, const Hyperparams& hyper, Rng& rng);

struct TrainObserver {
  // called after every half-step with the current state
  std::function<void(const Matrix& dictionary, const Matrix& codes, int iteration, bool after_codes, double objective)>
      after_half_step;
};

TrainedModel train(const Matrix& kernel, const LabelMatrix& labels, const Hyperparams& hyper, int threads = 1,
                   const TrainObserver& observer = {});

// Feasibility checks used by tests and debug paths.
void validate_dictionary(const Matrix& dictionary, const Matrix& kernel, int sparsity);
void validate_codes(const Matrix& codes, int sparsity);

}  // namespace cksc
