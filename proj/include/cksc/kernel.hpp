#pragma once

#include "cksc/common.hpp"

#include <optional>
#include <vector>

namespace cksc {

// One multivariate sample: channels x time steps.
struct TimeSeries {
  Matrix values;

  Index channels() const { return values.rows(); }
  Index length() const { return values.cols(); }
};

// Minimal cumulative alignment cost under the classic three-neighbor DTW
// recurrence, Euclidean cost between frame vectors. `band` is an optional
// Sakoe-Chiba window half-width; it is widened to the length difference so
// the end point stays reachable.
double dtw_distance(const TimeSeries& a, const TimeSeries& b, std::optional<int> band = {});

// Symmetric pairwise DTW distances, zero diagonal. Pairs run in parallel.
Matrix distance_matrix(const std::vector<TimeSeries>& samples, std::optional<int> band = {}, int threads = 1);

// Gaussian bandwidth: mean of the off-diagonal distances.
double bandwidth(const Matrix& distances);

// K_ij = exp(-D_ij^2 / delta), unit diagonal, exactly symmetric.
Matrix gaussian_kernel(const Matrix& distances, double delta);

// Kernel row of a test point against the training set.
RowVector cross_kernel(const RowVector& distances_to_train, double delta);

// Eigenvalues in ascending order.
Vector gram_spectrum(const Matrix& kernel);

// Spectral clipping: negative eigenvalues zeroed. Optional repair mode,
// not applied anywhere by default.
Matrix clip_psd(const Matrix& kernel);

// Throws unless square, finite and symmetric to 1e-10.
void validate_kernel(const Matrix& kernel, const char* what = "kernel");

// Throws unless square, finite, symmetric to 1e-10, non-negative and with
// (near-)zero diagonal.
void validate_distances(const Matrix& distances);

}  // namespace cksc
