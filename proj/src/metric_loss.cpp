#include "more/metric_loss.hpp"

#include "more/error.hpp"
#include "more/kernels.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace more {

void LossConfig::validate() const {
    if (!(alpha_p >= 0.0)) throw ConfigError("loss.alpha_p", "must be >= 0");
    if (!(alpha_n > alpha_p)) throw ConfigError("loss.alpha_n", "must exceed alpha_p");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("loss.lambda", "must be in [0, 1]");
    if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
        throw ConfigError("loss.temperature", "must be finite and >= 0");
    }
}

DistanceMatrix pairwise_distances(const Matrix& reps, Exec exec) {
    DistanceMatrix out;
    if (exec == Exec::parallel) {
        kernels::pairwise_distances(reps, out);
    } else {
        kernels::serial::pairwise_distances(reps, out);
    }
    return out;
}

std::vector<double> negative_weights(std::size_t anchor, const DistanceMatrix& dmat,
                                     std::span<const std::size_t> informative_negatives,
                                     const LossConfig& cfg) {
    if (informative_negatives.empty()) throw ValidationError("no informative negatives");
    // Shifting the exponent by its maximum leaves the normalized weights
    // unchanged and keeps exp() in range for large temperatures.
    std::vector<double> w(informative_negatives.size());
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < w.size(); ++k) {
        w[k] = cfg.temperature * (cfg.alpha_n - dmat(anchor, informative_negatives[k]));
        top = std::max(top, w[k]);
    }
    double sum = 0.0;
    for (double& x : w) {
        x = std::exp(x - top);
        sum += x;
    }
    for (double& x : w) x /= sum;
    return w;
}

AnchorLossBreakdown rll_anchor(std::size_t anchor, const DistanceMatrix& dmat,
                               std::span<const std::int32_t> labels, const LossConfig& cfg) {
    AnchorLossBreakdown b;
    b.anchor = anchor;
    const std::size_t m = labels.size();
    for (std::size_t j = 0; j < m; ++j) {
        if (j == anchor) continue;
        const double d = dmat(anchor, j);
        if (labels[j] == labels[anchor]) {
            if (d > cfg.alpha_p) {
                b.positives.push_back(j);
                b.positive_loss += d - cfg.alpha_p;
            }
        } else if (d < cfg.alpha_n) {
            b.negatives.push_back(j);
        }
    }
    if (!b.negatives.empty()) {
        b.weights = negative_weights(anchor, dmat, b.negatives, cfg);
        for (std::size_t k = 0; k < b.negatives.size(); ++k) {
            b.negative_loss += b.weights[k] * (cfg.alpha_n - dmat(anchor, b.negatives[k]));
        }
    }
    return b;
}

RllResult rll_batch(const Matrix& reps, std::span<const std::int32_t> labels, const LossConfig& cfg,
                    Exec exec) {
    const std::size_t m = reps.rows;
    if (m < 2) throw ValidationError("rll_batch needs at least two representations");
    if (labels.size() != m) {
        throw ValidationError(fmt::format("{} labels for {} representations", labels.size(), m));
    }
    const DistanceMatrix dmat = pairwise_distances(reps, exec);

    // coef(i, j): derivative of anchor i's loss w.r.t. d_ij.
    Matrix coef(m, m);
    std::vector<double> anchor_loss(m, 0.0);
    const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(dynamic, 4) if (exec == Exec::parallel)
    for (long i = 0; i < rows; ++i) {
        const auto a = static_cast<std::size_t>(i);
        const AnchorLossBreakdown b = rll_anchor(a, dmat, labels, cfg);
        for (std::size_t j : b.positives) coef(a, j) = 1.0 - cfg.lambda;
        for (std::size_t k = 0; k < b.negatives.size(); ++k) {
            coef(a, b.negatives[k]) = -cfg.lambda * b.weights[k];
        }
        anchor_loss[a] = b.combined(cfg);
    }

    RllResult res;
    for (double l : anchor_loss) res.loss += l;

    // d d_ij / d r_i = (r_i - r_j) / d_ij; coincident points get the zero
    // subgradient.
    res.grad = Matrix(m, reps.cols);
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
    for (long i = 0; i < rows; ++i) {
        const auto a = static_cast<std::size_t>(i);
        auto g = res.grad.row(a);
        const auto ra = reps.row(a);
        for (std::size_t j = 0; j < m; ++j) {
            const double c = coef(a, j) + coef(j, a);
            if (c == 0.0 || dmat(a, j) == 0.0) continue;
            const double s = c / dmat(a, j);
            const auto rj = reps.row(j);
            for (std::size_t k = 0; k < reps.cols; ++k) g[k] += s * (ra[k] - rj[k]);
        }
    }
    return res;
}

} // namespace more
