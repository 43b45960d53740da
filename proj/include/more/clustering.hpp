#pragma once

#include "more/data.hpp"
#include "more/exec.hpp"
#include "more/tensor.hpp"

#include <filesystem>
#include <vector>

namespace more {

/// Cluster ids are dense, 0..num_clusters-1, numbered by first appearance.
struct ClusterAssignment {
    std::vector<int> cluster_ids;
    int num_clusters = 0;

    bool operator==(const ClusterAssignment&) const = default;
};

/// Renumbers arbitrary ids densely in order of first appearance.
ClusterAssignment canonical_assignment(const std::vector<int>& ids);

struct KMeansOptions {
    int k = 16;
    int max_iter = 300;
    int restarts = 8;
};

struct KMeansResult {
    ClusterAssignment assignment;
    Matrix centroids;                // row c is the mean of cluster c
    double inertia = 0.0;            // within-cluster sum of squared distances
    std::vector<double> objective;   // best run's inertia after every Lloyd step
    int iterations = 0;
};

/// k-means++ seeding, Lloyd iterations to a fixed point or max_iter, best of
/// `restarts` runs by inertia. An empty cluster is reseeded at the point
/// farthest from its centroid.
KMeansResult kmeans(const Matrix& points, const KMeansOptions& opt, Rng& rng,
                    Exec exec = Exec::parallel);

/// Mean over points of the distance to the ceil(quantile * n)-th nearest
/// neighbor, counting the point itself as the first. Throws
/// ValidationError("degenerate bandwidth") when that mean is zero.
double estimate_bandwidth(const Matrix& points, double quantile);

struct MeanShiftOptions {
    int max_iter = 300;
    double tol = 1e-6;
};

struct MeanShiftResult {
    ClusterAssignment assignment;
    Matrix centers;   // one kept mode per cluster
    Matrix modes;     // converged position of every seed
};

/// Flat-kernel mean-shift seeded at every point. Converged modes are
/// visited by decreasing neighbor count and dropped when within
/// bandwidth / 2 of an already kept mode; each point takes the label of
/// the kept mode nearest to its own mode.
MeanShiftResult mean_shift(const Matrix& points, double bandwidth, const MeanShiftOptions& opt = {},
                           Exec exec = Exec::parallel);

/// CSV with header instance_index,cluster_id.
void write_assignment_csv(const std::filesystem::path& path, const ClusterAssignment& a);
ClusterAssignment read_assignment_csv(const std::filesystem::path& path, std::size_t expected_rows);

} // namespace more
