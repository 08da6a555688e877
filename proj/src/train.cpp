#include "cksc/train.hpp"

#include "cksc/kernel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

namespace cksc {

namespace {

constexpr double kBetaMargin = 1e-10;
constexpr double kDeadNormTol = 1e-12;

// N x N discriminant coupling (1 - H')H: entry ij is 1 when samples i and j
// belong to different classes.
Matrix cross_class_matrix(const LabelMatrix& labels) {
  const Matrix& h = labels.values;
  return Matrix::Ones(h.cols(), h.cols()) - h.transpose() * h;
}

double min_eigenvalue(const Matrix& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericError(std::string(what) + ": eigensolver failed");
  return solver.eigenvalues()(0);
}

Matrix symmetrized(Matrix m) {
  m = 0.5 * (m + m.transpose()).eval();
  return m;
}

// single class-pure atom: random convex combination of up to `sparsity`
// distinct samples of class q, kernel-normalized
Vector seed_atom(const Matrix& kernel, const LabelMatrix& labels, int cls, int sparsity, Rng& rng) {
  std::vector<Index> members;
  for (Index i = 0; i < labels.samples(); ++i) {
    if (labels.class_of[static_cast<std::size_t>(i)] == cls) members.push_back(i);
  }
  if (members.empty()) throw ValidationError("seed_atom: class " + std::to_string(cls) + " has no samples");
  rng.shuffle(members);
  const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(sparsity), members.size());

  Vector atom = Vector::Zero(kernel.rows());
  double total = 0.0;
  std::vector<double> weights(count);
  for (std::size_t s = 0; s < count; ++s) {
    weights[s] = rng.uniform01();
    total += weights[s];
  }
  for (std::size_t s = 0; s < count; ++s) {
    atom(members[s]) = total > 0.0 ? weights[s] / total : 1.0 / static_cast<double>(count);
  }

  double norm_sq = atom.dot(kernel * atom);
  if (norm_sq <= kDeadNormTol) {
    // fall back to the single best-conditioned member
    atom.setZero();
    atom(members[0]) = 1.0;
    norm_sq = kernel(members[0], members[0]);
    if (norm_sq <= kDeadNormTol) {
      throw NumericError("seed_atom: kernel norm non-positive for every seed of class " + std::to_string(cls));
    }
  }
  return atom / std::sqrt(norm_sq);
}

// class whose samples are currently reconstructed worst (largest
// per-column residual of the kernel-space expansion)
int worst_reconstructed_class(const Matrix& kernel, const LabelMatrix& labels, const Matrix& dictionary,
                              const Matrix& codes) {
  const Matrix ka = kernel * dictionary;                      // N x k
  const Matrix gram = dictionary.transpose() * ka;            // k x k
  int worst_class = 0;
  double worst = -1.0;
  for (Index i = 0; i < kernel.rows(); ++i) {
    const Vector x = codes.col(i);
    const double residual = kernel(i, i) - 2.0 * ka.row(i).dot(x) + x.dot(gram * x);
    if (residual > worst) {
      worst = residual;
      worst_class = labels.class_of[static_cast<std::size_t>(i)];
    }
  }
  return worst_class;
}

}  // namespace

LabelMatrix LabelMatrix::from_ids(const std::vector<int>& ids, int classes) {
  if (ids.empty()) throw ValidationError("LabelMatrix: no samples");
  if (classes < 1) throw ValidationError("LabelMatrix: class count must be positive");
  LabelMatrix labels;
  labels.values = Matrix::Zero(classes, static_cast<Index>(ids.size()));
  labels.class_of = ids;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= classes) {
      throw ValidationError("LabelMatrix: class id " + std::to_string(ids[i]) + " outside [0, " +
                            std::to_string(classes) + ") at sample " + std::to_string(i));
    }
    labels.values(ids[i], static_cast<Index>(i)) = 1.0;
  }
  return labels;
}

void LabelMatrix::validate() const {
  if (values.rows() < 1 || values.cols() < 1) throw ValidationError("LabelMatrix: empty");
  if (static_cast<Index>(class_of.size()) != values.cols()) {
    throw ValidationError("LabelMatrix: class_of length mismatch");
  }
  for (Index i = 0; i < values.cols(); ++i) {
    int ones = 0;
    for (Index s = 0; s < values.rows(); ++s) {
      const double v = values(s, i);
      if (v != 0.0 && v != 1.0) throw ValidationError("LabelMatrix: entries must be 0 or 1");
      if (v == 1.0) {
        ++ones;
        if (class_of[static_cast<std::size_t>(i)] != static_cast<int>(s)) {
          throw ValidationError("LabelMatrix: class_of disagrees with indicator column " + std::to_string(i));
        }
      }
    }
    if (ones != 1) throw ValidationError("LabelMatrix: column " + std::to_string(i) + " is not one-hot");
  }
}

void Hyperparams::validate() const {
  if (alpha < 0.0) throw ValidationError("hyperparams: alpha must be non-negative");
  if (sparsity < 1) throw ValidationError("hyperparams: sparsity must be positive");
  if (atoms < 0) throw ValidationError("hyperparams: atoms must be positive when given");
  if (max_outer < 1) throw ValidationError("hyperparams: max_outer must be positive");
  if (!(rel_tol > 0.0)) throw ValidationError("hyperparams: rel_tol must be positive");
}

double compute_beta(const Matrix& kernel, const LabelMatrix& labels, double alpha) {
  validate_kernel(kernel);
  labels.validate();
  if (labels.samples() != kernel.rows()) {
    throw ValidationError("compute_beta: label count does not match kernel size");
  }

  const Matrix coupling = symmetrized(alpha * cross_class_matrix(labels));
  const double v_min = min_eigenvalue(kernel + coupling, "compute_beta");
  // The recall derivation needs V + beta I PSD; the code and dictionary
  // sub-problems additionally need K + beta I PSD. One ridge covers both.
  const double k_min = min_eigenvalue(kernel, "compute_beta");
  return std::max({0.0, -v_min, -k_min}) + kBetaMargin;
}

nqp::QuadProgram build_x_subproblem(const Matrix& kernel, const Matrix& dictionary, const LabelMatrix& labels,
                                    Index column, double alpha, double beta, int sparsity) {
  const Index n = kernel.rows();
  if (dictionary.rows() != n) throw ValidationError("build_x_subproblem: dictionary row count mismatch");
  if (labels.samples() != n) throw ValidationError("build_x_subproblem: label count mismatch");
  if (column < 0 || column >= n) throw ValidationError("build_x_subproblem: column index out of range");

  nqp::QuadProgram p;
  p.Q = symmetrized(dictionary.transpose() * (kernel + beta * Matrix::Identity(n, n)) * dictionary);
  const RowVector label_row =
      (RowVector::Ones(labels.classes()) - labels.values.col(column).transpose()) * labels.values;
  p.b = (alpha * label_row * dictionary - 2.0 * kernel.row(column) * dictionary).transpose();
  p.sparsity = sparsity;
  return p;
}

Matrix residual_operator(const Matrix& dictionary, const Matrix& codes, Index atom) {
  const Index n = dictionary.rows();
  const Index k = dictionary.cols();
  if (codes.rows() != k || codes.cols() != n) throw ValidationError("residual_operator: codes shape mismatch");
  if (atom < 0 || atom >= k) throw ValidationError("residual_operator: atom index out of range");

  Matrix residual = Matrix::Identity(n, n);
  for (Index j = 0; j < k; ++j) {
    if (j == atom) continue;
    residual.noalias() -= dictionary.col(j) * codes.row(j);
  }
  return residual;
}

nqp::QuadProgram build_a_subproblem(const Matrix& kernel, const LabelMatrix& labels, const Matrix& codes,
                                    const Matrix& residual_op, Index atom, double alpha, double beta, int sparsity) {
  const Index n = kernel.rows();
  if (codes.cols() != n) throw ValidationError("build_a_subproblem: codes column count mismatch");
  if (residual_op.rows() != n || residual_op.cols() != n) {
    throw ValidationError("build_a_subproblem: residual operator shape mismatch");
  }
  if (atom < 0 || atom >= codes.rows()) throw ValidationError("build_a_subproblem: atom index out of range");

  const RowVector row = codes.row(atom);
  const double row_norm_sq = row.squaredNorm();
  if (row_norm_sq == 0.0) {
    throw DeadAtomError("build_a_subproblem: atom " + std::to_string(atom) + " has an all-zero code row");
  }

  nqp::QuadProgram p;
  p.Q = symmetrized(row_norm_sq * (kernel + beta * Matrix::Identity(n, n)));

  const RowVector class_mass = row * labels.values.transpose();  // 1 x p
  const RowVector discriminant = (row.sum() * RowVector::Ones(labels.classes()) - class_mass) * labels.values;
  const RowVector through_residual = row * residual_op.transpose();  // x^i E_i'
  p.b = (alpha * discriminant + 2.0 * beta * (row - through_residual) - 2.0 * through_residual * kernel).transpose();
  p.sparsity = sparsity;
  return p;
}

Matrix update_codes(const Matrix& kernel, const LabelMatrix& labels, const Matrix& dictionary,
                    const Hyperparams& hyper, double beta, int threads) {
  const Index n = kernel.rows();
  const Index k = dictionary.cols();

  // quadratic term and the pieces of b shared by every column
  nqp::QuadProgram shared;
  shared.Q = symmetrized(dictionary.transpose() * (kernel + beta * Matrix::Identity(n, n)) * dictionary);
  shared.sparsity = hyper.sparsity;
  const Matrix ka = kernel * dictionary;                 // N x k
  const Matrix ha = labels.values * dictionary;          // p x k
  const RowVector ha_total = RowVector::Ones(labels.classes()) * ha;

  Matrix codes = Matrix::Zero(k, n);
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
    const Index col = static_cast<Index>(i);
    nqp::QuadProgram p;
    p.Q = shared.Q;
    p.sparsity = shared.sparsity;
    const int cls = labels.class_of[i];
    p.b = (hyper.alpha * (ha_total - ha.row(cls)) - 2.0 * ka.row(col)).transpose();
    codes.col(col) = nqp::solve(p, hyper.solver).x;
  });
  return codes;
}

Matrix update_dictionary(const Matrix& kernel, const LabelMatrix& labels, Matrix dictionary, const Matrix& codes,
                         const Hyperparams& hyper, double beta, Rng& rng) {
  const Index n = kernel.rows();
  const Index k = dictionary.cols();

  // E_i = residual + a_i x^i, with the residual I - AX kept current as
  // columns change so each atom sees the freshest dictionary
  Matrix residual = Matrix::Identity(n, n) - dictionary * codes;

  for (Index i = 0; i < k; ++i) {
    const Vector old_atom = dictionary.col(i);
    const RowVector row = codes.row(i);
    Vector updated;

    if (row.squaredNorm() == 0.0) {
      const int cls = worst_reconstructed_class(kernel, labels, dictionary, codes);
      updated = seed_atom(kernel, labels, cls, hyper.sparsity, rng);
    } else {
      const Matrix e_i = residual + old_atom * row;
      const auto p = build_a_subproblem(kernel, labels, codes, e_i, i, hyper.alpha, beta, hyper.sparsity);
      Vector solved = nqp::solve(p, hyper.solver).x;
      const double norm_sq = solved.dot(kernel * solved);
      if (norm_sq <= kDeadNormTol) {
        const int cls = worst_reconstructed_class(kernel, labels, dictionary, codes);
        updated = seed_atom(kernel, labels, cls, hyper.sparsity, rng);
      } else {
        updated = solved / std::sqrt(norm_sq);
      }
    }

    dictionary.col(i) = updated;
    residual.noalias() -= (updated - old_atom) * row;
  }
  return dictionary;
}

double objective(const Matrix& kernel, const LabelMatrix& labels, const Matrix& dictionary, const Matrix& codes,
                 double alpha, double beta) {
  const Matrix product = dictionary * codes;  // N x N
  const double reconstruction =
      kernel.trace() + (product.cwiseProduct(kernel * product)).sum() - 2.0 * kernel.cwiseProduct(product).sum();
  const double ridge = beta * product.squaredNorm();
  const double discriminant = alpha * cross_class_matrix(labels).cwiseProduct(product.transpose()).sum();
  return reconstruction + ridge + discriminant;
}

Matrix init_dictionary(const Matrix& kernel, const LabelMatrix& labels, const Hyperparams& hyper, Rng& rng) {
  const int p = labels.classes();
  const int k = hyper.resolved_atoms(p);
  Matrix dictionary(kernel.rows(), k);
  for (int i = 0; i < k; ++i) {
    dictionary.col(i) = seed_atom(kernel, labels, i % p, hyper.sparsity, rng);
  }
  return dictionary;
}

TrainedModel train(const Matrix& kernel, const LabelMatrix& labels, const Hyperparams& hyper, int threads,
                   const TrainObserver& observer) {
  validate_kernel(kernel);
  labels.validate();
  hyper.validate();
  if (labels.samples() != kernel.rows()) throw ValidationError("train: label count does not match kernel size");
  const int k = hyper.resolved_atoms(labels.classes());
  if (k > kernel.rows()) {
    throw ValidationError("train: dictionary size " + std::to_string(k) + " exceeds sample count " +
                          std::to_string(kernel.rows()));
  }

  Rng rng(hyper.seed);
  Matrix dictionary = init_dictionary(kernel, labels, hyper, rng);
  Matrix codes = Matrix::Zero(k, kernel.cols());
  const double beta = compute_beta(kernel, labels, hyper.alpha);

  TrainedModel model;
  model.objective_trace.push_back(objective(kernel, labels, dictionary, codes, hyper.alpha, beta));

  auto check_finite = [&](double value) {
    if (!std::isfinite(value)) {
      std::ostringstream oss;
      oss << "train: non-finite objective; trace:";
      for (const double j : model.objective_trace) oss << " " << j;
      throw NumericError(oss.str());
    }
  };

  double previous = model.objective_trace.front();
  bool have_previous = false;
  for (int iter = 1; iter <= hyper.max_outer; ++iter) {
    codes = update_codes(kernel, labels, dictionary, hyper, beta, threads);
    double value = objective(kernel, labels, dictionary, codes, hyper.alpha, beta);
    check_finite(value);
    model.objective_trace.push_back(value);
    if (observer.after_half_step) observer.after_half_step(dictionary, codes, iter, true, value);

    dictionary = update_dictionary(kernel, labels, dictionary, codes, hyper, beta, rng);
    value = objective(kernel, labels, dictionary, codes, hyper.alpha, beta);
    check_finite(value);
    model.objective_trace.push_back(value);
    if (observer.after_half_step) observer.after_half_step(dictionary, codes, iter, false, value);

    logging::debug("iteration " + std::to_string(iter) + " objective " + std::to_string(value));
    if (have_previous) {
      const double rel = std::abs(value - previous) / std::max(previous, 1e-12);
      if (rel < hyper.rel_tol) {
        previous = value;
        break;
      }
    }
    previous = value;
    have_previous = true;
  }

  model.dictionary = std::move(dictionary);
  model.labels = labels;
  model.kernel = kernel;
  model.beta = beta;
  model.hyper = hyper;
  model.kernel_hash = matrix_hash(model.kernel);
  return model;
}

void validate_dictionary(const Matrix& dictionary, const Matrix& kernel, int sparsity) {
  if (dictionary.minCoeff() < 0.0) throw ValidationError("dictionary: negative entries");
  for (Index i = 0; i < dictionary.cols(); ++i) {
    const Vector atom = dictionary.col(i);
    Index nonzeros = 0;
    for (Index r = 0; r < atom.size(); ++r) {
      if (atom(r) != 0.0) ++nonzeros;
    }
    if (nonzeros > sparsity) {
      throw ValidationError("dictionary: column " + std::to_string(i) + " has " + std::to_string(nonzeros) +
                            " nonzeros, cap " + std::to_string(sparsity));
    }
    if (nonzeros == 0) continue;  // dead column, re-seeded by the trainer
    const double norm_sq = atom.dot(kernel * atom);
    if (std::abs(norm_sq - 1.0) > 1e-8) {
      throw ValidationError("dictionary: column " + std::to_string(i) + " kernel norm^2 " + std::to_string(norm_sq));
    }
  }
}

void validate_codes(const Matrix& codes, int sparsity) {
  if (codes.size() > 0 && codes.minCoeff() < 0.0) throw ValidationError("codes: negative entries");
  for (Index i = 0; i < codes.cols(); ++i) {
    Index nonzeros = 0;
    for (Index r = 0; r < codes.rows(); ++r) {
      if (codes(r, i) != 0.0) ++nonzeros;
    }
    if (nonzeros > sparsity) {
      throw ValidationError("codes: column " + std::to_string(i) + " has " + std::to_string(nonzeros) +
                            " nonzeros, cap " + std::to_string(sparsity));
    }
  }
}

}  // namespace cksc
