#include "more/kernels.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace more::kernels {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// One seed's trajectory; shared by both variants so only the loop
// scheduling differs.
int shift_seed(const Matrix& points, double bandwidth, int max_iter, double tol,
               std::span<double> mode) {
    const std::size_t n = points.rows;
    const std::size_t d = points.cols;
    const double h2 = bandwidth * bandwidth;
    std::vector<double> mean(d);
    int it = 0;
    while (it < max_iter) {
        ++it;
        std::fill(mean.begin(), mean.end(), 0.0);
        std::size_t count = 0;
        for (std::size_t j = 0; j < n; ++j) {
            const auto p = points.row(j);
            if (squared_distance(mode, p) <= h2) {
                for (std::size_t k = 0; k < d; ++k) mean[k] += p[k];
                ++count;
            }
        }
        if (count == 0) break;  // unreachable for a seed that started on a point
        double shift2 = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            mean[k] /= static_cast<double>(count);
            const double delta = mean[k] - mode[k];
            shift2 += delta * delta;
            mode[k] = mean[k];
        }
        if (std::sqrt(shift2) < tol) break;
    }
    return it;
}

} // namespace

// ---- OpenMP versions ----------------------------------------------------

void pairwise_distances(const Matrix& x, Matrix& out) {
    const long m = static_cast<long>(x.rows);
    out = Matrix(x.rows, x.rows);
#pragma omp parallel for schedule(dynamic, 4)
    for (long i = 0; i < m; ++i) {
        for (long j = i + 1; j < m; ++j) {
            const double d = std::sqrt(squared_distance(x.row(static_cast<std::size_t>(i)),
                                                        x.row(static_cast<std::size_t>(j))));
            out(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = d;
            out(static_cast<std::size_t>(j), static_cast<std::size_t>(i)) = d;
        }
    }
}

double assign_nearest(const Matrix& points, const Matrix& centroids, std::span<int> assign,
                      std::span<double> dist2) {
    const long n = static_cast<long>(points.rows);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
        const auto p = points.row(static_cast<std::size_t>(i));
        double best = std::numeric_limits<double>::infinity();
        int at = 0;
        for (std::size_t c = 0; c < centroids.rows; ++c) {
            const double d = squared_distance(p, centroids.row(c));
            if (d < best) {
                best = d;
                at = static_cast<int>(c);
            }
        }
        assign[static_cast<std::size_t>(i)] = at;
        dist2[static_cast<std::size_t>(i)] = best;
    }
    double total = 0.0;
    for (double v : dist2) total += v;
    return total;
}

void mean_shift_modes(const Matrix& points, double bandwidth, int max_iter, double tol,
                      Matrix& modes, std::span<int> iterations) {
    modes = points;
    const long n = static_cast<long>(points.rows);
#pragma omp parallel for schedule(dynamic, 8)
    for (long i = 0; i < n; ++i) {
        iterations[static_cast<std::size_t>(i)] =
            shift_seed(points, bandwidth, max_iter, tol, modes.row(static_cast<std::size_t>(i)));
    }
}

// ---- serial reference ---------------------------------------------------

namespace serial {

void pairwise_distances(const Matrix& x, Matrix& out) {
    out = Matrix(x.rows, x.rows);
    for (std::size_t i = 0; i < x.rows; ++i) {
        for (std::size_t j = i + 1; j < x.rows; ++j) {
            const double d = std::sqrt(squared_distance(x.row(i), x.row(j)));
            out(i, j) = d;
            out(j, i) = d;
        }
    }
}

double assign_nearest(const Matrix& points, const Matrix& centroids, std::span<int> assign,
                      std::span<double> dist2) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.rows; ++i) {
        double best = std::numeric_limits<double>::infinity();
        int at = 0;
        for (std::size_t c = 0; c < centroids.rows; ++c) {
            const double d = squared_distance(points.row(i), centroids.row(c));
            if (d < best) {
                best = d;
                at = static_cast<int>(c);
            }
        }
        assign[i] = at;
        dist2[i] = best;
    }
    for (double v : dist2) total += v;
    return total;
}

void mean_shift_modes(const Matrix& points, double bandwidth, int max_iter, double tol,
                      Matrix& modes, std::span<int> iterations) {
    modes = points;
    for (std::size_t i = 0; i < points.rows; ++i) {
        iterations[i] = shift_seed(points, bandwidth, max_iter, tol, modes.row(i));
    }
}

} // namespace serial

} // namespace more::kernels
