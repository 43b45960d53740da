#include "more/clustering.hpp"

#include "more/error.hpp"
#include "more/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

namespace more {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double assign(const Matrix& points, const Matrix& centroids, std::vector<int>& ids,
              std::vector<double>& dist2, Exec exec) {
    return exec == Exec::parallel ? kernels::assign_nearest(points, centroids, ids, dist2)
                                  : kernels::serial::assign_nearest(points, centroids, ids, dist2);
}

Matrix kmeanspp_seeds(const Matrix& points, int k, Rng& rng) {
    const std::size_t n = points.rows;
    Matrix centers(static_cast<std::size_t>(k), points.cols);
    std::uniform_int_distribution<std::size_t> first(0, n - 1);
    std::size_t pick = first(rng);
    std::copy_n(points.row(pick).begin(), points.cols, centers.row(0).begin());

    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points.row(i), centers.row(0));
    for (int c = 1; c < k; ++c) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            const double target = u(rng);
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc > target && d2[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = first(rng);
        }
        auto dst = centers.row(static_cast<std::size_t>(c));
        std::copy_n(points.row(pick).begin(), points.cols, dst.begin());
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], squared_distance(points.row(i), dst));
        }
    }
    return centers;
}

// Means of the assigned points; empty clusters are moved onto the point
// farthest from its current centroid.
void update_centroids(const Matrix& points, const std::vector<int>& ids, std::vector<double> dist2,
                      Matrix& centroids) {
    const std::size_t k = centroids.rows;
    std::vector<std::size_t> count(k, 0);
    Matrix sum(k, points.cols);
    for (std::size_t i = 0; i < points.rows; ++i) {
        const auto c = static_cast<std::size_t>(ids[i]);
        ++count[c];
        auto s = sum.row(c);
        const auto p = points.row(i);
        for (std::size_t d = 0; d < points.cols; ++d) s[d] += p[d];
    }
    for (std::size_t c = 0; c < k; ++c) {
        auto dst = centroids.row(c);
        if (count[c] > 0) {
            const auto s = sum.row(c);
            for (std::size_t d = 0; d < points.cols; ++d) dst[d] = s[d] / static_cast<double>(count[c]);
            continue;
        }
        const auto far = static_cast<std::size_t>(
            std::max_element(dist2.begin(), dist2.end()) - dist2.begin());
        std::copy_n(points.row(far).begin(), points.cols, dst.begin());
        dist2[far] = -1.0;
    }
}

struct Run {
    std::vector<int> ids;
    Matrix centroids;
    double inertia = 0.0;
    std::vector<double> objective;
    int iterations = 0;
};

Run lloyd(const Matrix& points, Matrix centroids, int max_iter, Exec exec) {
    const std::size_t n = points.rows;
    Run run;
    run.ids.assign(n, -1);
    std::vector<int> prev;
    std::vector<double> dist2(n);
    for (int it = 1; it <= max_iter; ++it) {
        prev = run.ids;
        const double inertia = assign(points, centroids, run.ids, dist2, exec);
        if (!run.objective.empty() && inertia > run.objective.back() * (1.0 + 1e-9) + 1e-12) {
            throw std::logic_error("k-means objective increased during Lloyd iterations");
        }
        run.objective.push_back(inertia);
        run.iterations = it;
        if (run.ids == prev) break;
        update_centroids(points, run.ids, dist2, centroids);
    }
    // Centroids consistent with the returned assignment.
    update_centroids(points, run.ids, dist2, centroids);
    run.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        run.inertia += squared_distance(points.row(i), centroids.row(static_cast<std::size_t>(run.ids[i])));
    }
    run.centroids = std::move(centroids);
    return run;
}

} // namespace

ClusterAssignment canonical_assignment(const std::vector<int>& ids) {
    ClusterAssignment out;
    out.cluster_ids.reserve(ids.size());
    std::vector<std::pair<int, int>> seen;  // (raw, dense)
    for (int raw : ids) {
        auto it = std::find_if(seen.begin(), seen.end(), [raw](const auto& p) { return p.first == raw; });
        if (it == seen.end()) {
            seen.emplace_back(raw, static_cast<int>(seen.size()));
            it = seen.end() - 1;
        }
        out.cluster_ids.push_back(it->second);
    }
    out.num_clusters = static_cast<int>(seen.size());
    return out;
}

KMeansResult kmeans(const Matrix& points, const KMeansOptions& opt, Rng& rng, Exec exec) {
    if (opt.k < 1) throw ValidationError("kmeans: k must be >= 1");
    if (static_cast<std::size_t>(opt.k) > points.rows) {
        throw ValidationError(fmt::format("kmeans: k = {} exceeds {} points", opt.k, points.rows));
    }
    if (opt.max_iter < 1) throw ValidationError("kmeans: max_iter must be >= 1");
    if (opt.restarts < 1) throw ValidationError("kmeans: restarts must be >= 1");

    Run best;
    bool have = false;
    for (int r = 0; r < opt.restarts; ++r) {
        Run run = lloyd(points, kmeanspp_seeds(points, opt.k, rng), opt.max_iter, exec);
        if (!have || run.inertia < best.inertia) {
            best = std::move(run);
            have = true;
        }
    }

    KMeansResult out;
    out.assignment = canonical_assignment(best.ids);
    out.centroids = Matrix(static_cast<std::size_t>(out.assignment.num_clusters), points.cols);
    for (std::size_t i = 0; i < points.rows; ++i) {
        const auto dense = static_cast<std::size_t>(out.assignment.cluster_ids[i]);
        const auto raw = static_cast<std::size_t>(best.ids[i]);
        std::copy_n(best.centroids.row(raw).begin(), points.cols, out.centroids.row(dense).begin());
    }
    out.inertia = best.inertia;
    out.objective = std::move(best.objective);
    out.iterations = best.iterations;
    return out;
}

double estimate_bandwidth(const Matrix& points, double quantile) {
    const std::size_t n = points.rows;
    if (n < 2) throw ValidationError("estimate_bandwidth needs at least two points");
    if (!(quantile > 0.0 && quantile <= 1.0)) throw ValidationError("quantile must be in (0, 1]");
    const auto kth = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(n))), 1, n);

    double total = 0.0;
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) d[j] = std::sqrt(squared_distance(points.row(i), points.row(j)));
        std::nth_element(d.begin(), d.begin() + static_cast<long>(kth - 1), d.end());
        total += d[kth - 1];
    }
    const double bw = total / static_cast<double>(n);
    if (!(bw > 0.0)) throw ValidationError("degenerate bandwidth: points are not spread out");
    return bw;
}

MeanShiftResult mean_shift(const Matrix& points, double bandwidth, const MeanShiftOptions& opt,
                           Exec exec) {
    if (!(bandwidth > 0.0)) throw ValidationError("mean_shift: bandwidth must be > 0");
    if (opt.max_iter < 1) throw ValidationError("mean_shift: max_iter must be >= 1");
    const std::size_t n = points.rows;

    MeanShiftResult out;
    std::vector<int> iters(n);
    if (exec == Exec::parallel) {
        kernels::mean_shift_modes(points, bandwidth, opt.max_iter, opt.tol, out.modes, iters);
    } else {
        kernels::serial::mean_shift_modes(points, bandwidth, opt.max_iter, opt.tol, out.modes, iters);
    }

    const double h2 = bandwidth * bandwidth;
    std::vector<std::size_t> intensity(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (squared_distance(out.modes.row(i), points.row(j)) <= h2) ++intensity[i];
        }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return intensity[a] > intensity[b]; });

    const double merge2 = (bandwidth / 2.0) * (bandwidth / 2.0);
    std::vector<std::size_t> kept;
    for (std::size_t i : order) {
        const bool dup = std::any_of(kept.begin(), kept.end(), [&](std::size_t c) {
            return squared_distance(out.modes.row(i), out.modes.row(c)) <= merge2;
        });
        if (!dup) kept.push_back(i);
    }

    std::vector<int> raw(n);
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < kept.size(); ++c) {
            const double d = squared_distance(out.modes.row(i), out.modes.row(kept[c]));
            if (d < best) {
                best = d;
                raw[i] = static_cast<int>(c);
            }
        }
    }
    out.assignment = canonical_assignment(raw);
    out.centers = Matrix(static_cast<std::size_t>(out.assignment.num_clusters), points.cols);
    for (std::size_t i = 0; i < n; ++i) {
        const auto dense = static_cast<std::size_t>(out.assignment.cluster_ids[i]);
        const auto src = out.modes.row(kept[static_cast<std::size_t>(raw[i])]);
        std::copy_n(src.begin(), points.cols, out.centers.row(dense).begin());
    }
    return out;
}

void write_assignment_csv(const std::filesystem::path& path, const ClusterAssignment& a) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    out << "instance_index,cluster_id\n";
    for (std::size_t i = 0; i < a.cluster_ids.size(); ++i) out << i << ',' << a.cluster_ids[i] << '\n';
}

ClusterAssignment read_assignment_csv(const std::filesystem::path& path, std::size_t expected_rows) {
    std::ifstream in(path);
    if (!in) throw ValidationError(fmt::format("cannot open assignment file '{}'", path.string()));
    std::string line;
    if (!std::getline(in, line) || line.rfind("instance_index,cluster_id", 0) != 0) {
        throw ValidationError("assignment CSV must start with header instance_index,cluster_id");
    }
    std::vector<int> ids(expected_rows, -1);
    std::size_t rows = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        long long index = -1;
        long long cluster = -1;
        char comma = 0;
        std::istringstream ss(line);
        if (!(ss >> index >> comma >> cluster) || comma != ',' || index < 0 || cluster < 0) {
            throw ValidationError(fmt::format("assignment CSV line {}: malformed row", line_no));
        }
        if (static_cast<std::size_t>(index) >= expected_rows) {
            throw ValidationError(fmt::format("alignment error: line {} references instance {} but gold has {}",
                                              line_no, index, expected_rows));
        }
        if (ids[static_cast<std::size_t>(index)] != -1) {
            throw ValidationError(fmt::format("alignment error: instance {} assigned twice", index));
        }
        ids[static_cast<std::size_t>(index)] = static_cast<int>(cluster);
        ++rows;
    }
    if (rows != expected_rows) {
        throw ValidationError(fmt::format("alignment error: {} assignments for {} gold instances", rows,
                                          expected_rows));
    }
    return canonical_assignment(ids);
}

} // namespace more
