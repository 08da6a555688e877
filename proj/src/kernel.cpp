#include "cksc/kernel.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <string>

namespace cksc {

namespace {

constexpr double kSymmetryTol = 1e-10;

void check_symmetric(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw ValidationError(std::string(what) + ": matrix is " + std::to_string(m.rows()) + "x" +
                          std::to_string(m.cols()) + ", expected square");
  }
  const double skew = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (!(skew <= kSymmetryTol)) {
    throw ValidationError(std::string(what) + ": matrix not symmetric, max |M - M^T| = " + std::to_string(skew));
  }
}

}  // namespace

double dtw_distance(const TimeSeries& a, const TimeSeries& b, std::optional<int> band) {
  if (a.channels() != b.channels()) {
    throw ValidationError("dtw_distance: channel count mismatch (" + std::to_string(a.channels()) + " vs " +
                          std::to_string(b.channels()) + ")");
  }
  if (a.length() == 0 || b.length() == 0 || a.channels() == 0) {
    throw ValidationError("dtw_distance: empty series");
  }
  if (!a.values.allFinite() || !b.values.allFinite()) {
    throw ValidationError("dtw_distance: non-finite entries in series");
  }
  if (band && *band < 1) {
    throw ValidationError("dtw_distance: band must be >= 1");
  }

  const Index n = a.length();
  const Index m = b.length();
  const Index w = band ? std::max<Index>(*band, std::abs(n - m)) : std::max(n, m);

  const double inf = std::numeric_limits<double>::infinity();
  Matrix acc = Matrix::Constant(n + 1, m + 1, inf);
  acc(0, 0) = 0.0;
  for (Index i = 1; i <= n; ++i) {
    const Index jlo = std::max<Index>(1, i - w);
    const Index jhi = std::min<Index>(m, i + w);
    for (Index j = jlo; j <= jhi; ++j) {
      const double cost = (a.values.col(i - 1) - b.values.col(j - 1)).norm();
      acc(i, j) = cost + std::min({acc(i - 1, j), acc(i, j - 1), acc(i - 1, j - 1)});
    }
  }
  return acc(n, m);
}

Matrix distance_matrix(const std::vector<TimeSeries>& samples, std::optional<int> band, int threads) {
  const Index n = static_cast<Index>(samples.size());
  Matrix distances = Matrix::Zero(n, n);
  if (n < 2) return distances;

  std::vector<std::pair<Index, Index>> pairs;
  pairs.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  }
  parallel_for(pairs.size(), threads, [&](std::size_t p) {
    const auto [i, j] = pairs[p];
    const double d = dtw_distance(samples[static_cast<std::size_t>(i)], samples[static_cast<std::size_t>(j)], band);
    distances(i, j) = d;
    distances(j, i) = d;
  });
  return distances;
}

void validate_distances(const Matrix& distances) {
  check_symmetric(distances, "distances");
  if (!distances.allFinite()) throw ValidationError("distances: non-finite entries");
  if (distances.minCoeff() < 0.0) throw ValidationError("distances: negative entries");
  if (distances.rows() > 0 && distances.diagonal().cwiseAbs().maxCoeff() > 1e-12) {
    throw ValidationError("distances: diagonal not zero");
  }
}

double bandwidth(const Matrix& distances) {
  validate_distances(distances);
  const Index n = distances.rows();
  if (n < 2) throw ValidationError("bandwidth: need at least 2 samples");
  const double total = distances.sum() - distances.trace();
  const double mean = total / static_cast<double>(n * (n - 1));
  if (!(mean > 0.0)) {
    throw ValidationError("bandwidth: all pairwise distances are zero, bandwidth degenerate");
  }
  return mean;
}

Matrix gaussian_kernel(const Matrix& distances, double delta) {
  if (!(delta > 0.0)) throw ValidationError("gaussian_kernel: delta must be positive");
  validate_distances(distances);
  const Index n = distances.rows();
  Matrix kernel(n, n);
  for (Index i = 0; i < n; ++i) {
    kernel(i, i) = 1.0;
    for (Index j = i + 1; j < n; ++j) {
      const double d = distances(i, j);
      const double v = std::exp(-d * d / delta);
      kernel(i, j) = v;
      kernel(j, i) = v;
    }
  }
  return kernel;
}

RowVector cross_kernel(const RowVector& distances_to_train, double delta) {
  if (!(delta > 0.0)) throw ValidationError("cross_kernel: delta must be positive");
  if (!distances_to_train.allFinite()) throw ValidationError("cross_kernel: non-finite distances");
  if (distances_to_train.size() > 0 && distances_to_train.minCoeff() < 0.0) {
    throw ValidationError("cross_kernel: negative distances");
  }
  return (-distances_to_train.array().square() / delta).exp().matrix();
}

Vector gram_spectrum(const Matrix& kernel) {
  validate_kernel(kernel);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(kernel, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericError("gram_spectrum: eigensolver failed");
  return solver.eigenvalues();
}

Matrix clip_psd(const Matrix& kernel) {
  validate_kernel(kernel);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(kernel);
  if (solver.info() != Eigen::Success) throw NumericError("clip_psd: eigensolver failed");
  const Vector clipped = solver.eigenvalues().cwiseMax(0.0);
  Matrix repaired = solver.eigenvectors() * clipped.asDiagonal() * solver.eigenvectors().transpose();
  repaired = 0.5 * (repaired + repaired.transpose());
  return repaired;
}

void validate_kernel(const Matrix& kernel, const char* what) {
  if (!kernel.allFinite()) throw ValidationError(std::string(what) + ": non-finite entries");
  check_symmetric(kernel, what);
}

}  // namespace cksc
