#pragma once

#include "more/tensor.hpp"

#include <span>

// Data-parallel inner loops. Each kernel has an OpenMP version in
// `more::kernels` and a plain serial reference in `more::kernels::serial`;
// the two must agree bit-for-bit (every output element is computed by one
// thread in a fixed order, and reductions run serially).

namespace more::kernels {

/// out(i, j) = ||x_i - x_j||_2, symmetric with an exact zero diagonal.
void pairwise_distances(const Matrix& x, Matrix& out);

/// Assigns each point to its nearest centroid (ties: lowest index) and
/// stores the squared distance. Returns the summed squared distance.
double assign_nearest(const Matrix& points, const Matrix& centroids, std::span<int> assign,
                      std::span<double> dist2);

/// Runs flat-kernel mean-shift from every point as a seed. modes(i) is the
/// converged position of seed i; iterations(i) the step count used.
void mean_shift_modes(const Matrix& points, double bandwidth, int max_iter, double tol,
                      Matrix& modes, std::span<int> iterations);

namespace serial {

void pairwise_distances(const Matrix& x, Matrix& out);
double assign_nearest(const Matrix& points, const Matrix& centroids, std::span<int> assign,
                      std::span<double> dist2);
void mean_shift_modes(const Matrix& points, double bandwidth, int max_iter, double tol,
                      Matrix& modes, std::span<int> iterations);

} // namespace serial

} // namespace more::kernels
