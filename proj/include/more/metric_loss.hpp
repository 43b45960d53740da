#pragma once

#include "more/exec.hpp"
#include "more/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace more {

/// Ranked-list-loss hyperparameters. Boundaries are in Euclidean distance
/// units on the unit sphere.
struct LossConfig {
    double alpha_p = 0.8;      // positives beyond this are pulled in
    double alpha_n = 1.2;      // negatives inside this are pushed out
    double lambda = 0.5;       // weight of the negative term
    double temperature = 10.0; // sharpness of the negative weighting

    void validate() const;
};

/// m x m Euclidean distances; symmetric, zero diagonal.
using DistanceMatrix = Matrix;

DistanceMatrix pairwise_distances(const Matrix& reps, Exec exec = Exec::parallel);

/// exp(T * (alpha_n - d_ij)) over the informative negatives, normalized to
/// sum to 1. Throws ValidationError("no informative negatives") when empty.
std::vector<double> negative_weights(std::size_t anchor, const DistanceMatrix& dmat,
                                     std::span<const std::size_t> informative_negatives,
                                     const LossConfig& cfg);

struct AnchorLossBreakdown {
    std::size_t anchor = 0;
    std::vector<std::size_t> positives;  // same label, d > alpha_p
    std::vector<std::size_t> negatives;  // other label, d < alpha_n
    std::vector<double> weights;         // aligned with `negatives`
    double positive_loss = 0.0;          // sum of [d - alpha_p]_+
    double negative_loss = 0.0;          // sum of w * (alpha_n - d)

    double combined(const LossConfig& cfg) const {
        return (1.0 - cfg.lambda) * positive_loss + cfg.lambda * negative_loss;
    }
};

AnchorLossBreakdown rll_anchor(std::size_t anchor, const DistanceMatrix& dmat,
                               std::span<const std::int32_t> labels, const LossConfig& cfg);

struct RllResult {
    double loss = 0.0;
    Matrix grad;  // d loss / d reps, with the negative weights held constant
};

/// Sum over anchors of (1 - lambda) L_P + lambda L_N. Anchors are evaluated
/// independently and reduced in index order, so the result is reproducible
/// bit-for-bit regardless of thread count.
RllResult rll_batch(const Matrix& reps, std::span<const std::int32_t> labels,
                    const LossConfig& cfg, Exec exec = Exec::parallel);

} // namespace more
