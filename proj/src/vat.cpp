#include "more/vat.hpp"

#include "more/error.hpp"

#include <cmath>

namespace more {

namespace {

constexpr double kGradFloor = 1e-12;

// Gradient of sum_i ||a_i - b_i|| w.r.t. b, scaled by `scale`; rows with
// a_i == b_i get zero.
Matrix distance_grad(const Matrix& a, const Matrix& b, double scale, double* total) {
    Matrix g(b.rows, b.cols);
    double sum = 0.0;
    for (std::size_t i = 0; i < b.rows; ++i) {
        const double d = euclidean_distance(a.row(i), b.row(i));
        sum += d;
        if (d == 0.0) continue;
        for (std::size_t k = 0; k < b.cols; ++k) g(i, k) = scale * (b(i, k) - a(i, k)) / d;
    }
    if (total != nullptr) *total = sum;
    return g;
}

} // namespace

void VatConfig::validate() const {
    if (!(epsilon > 0.0)) throw ConfigError("vat.epsilon", "must be > 0");
    if (!(beta >= 0.0)) throw ConfigError("vat.beta", "must be >= 0");
    if (!(probe_scale > 0.0)) throw ConfigError("vat.probe_scale", "must be > 0");
}

Perturbation random_probe(std::size_t rows, std::size_t max_len, std::size_t word_dim,
                          double probe_scale, Rng& rng) {
    Perturbation p({rows, max_len, word_dim});
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double& x : p.data) x = gauss(rng);
    for (std::size_t i = 0; i < rows; ++i) {
        auto s = p.slice(i);
        const double norm = std::sqrt(squared_norm(s));
        if (norm == 0.0) {
            s[0] = probe_scale;
            continue;
        }
        for (double& x : s) x *= probe_scale / norm;
    }
    return p;
}

Perturbation worst_case_perturbation(const EncoderParams& params, const EncoderConfig& cfg,
                                     const EncodedBatch& batch, const VatConfig& vcfg, Rng& rng,
                                     Exec exec) {
    const Matrix clean = forward(params, cfg, batch, nullptr, exec).representations;
    return worst_case_perturbation(params, cfg, batch, clean, vcfg, rng, exec);
}

Perturbation worst_case_perturbation(const EncoderParams& params, const EncoderConfig& cfg,
                                     const EncodedBatch& batch, const Matrix& clean,
                                     const VatConfig& vcfg, Rng& rng, Exec exec) {
    vcfg.validate();
    const Perturbation probe = random_probe(batch.rows, batch.max_len, cfg.word_dim,
                                            vcfg.probe_scale, rng);
    ForwardResult probed = forward(params, cfg, batch, &probe, exec);
    const Matrix g_reps = distance_grad(clean, probed.representations, 1.0, nullptr);
    const BackwardResult back = backward(params, cfg, std::move(probed.trace), g_reps, exec);

    Perturbation xi = back.word_inputs;
    for (std::size_t i = 0; i < batch.rows; ++i) {
        auto s = xi.slice(i);
        const double norm = std::sqrt(squared_norm(s));
        if (norm < kGradFloor) {
            std::fill(s.begin(), s.end(), 0.0);
            continue;
        }
        for (double& x : s) x *= vcfg.epsilon / norm;
    }
    return xi;
}

VatLoss vat_loss(const EncoderParams& params, const EncoderConfig& cfg, const EncodedBatch& batch,
                 const Perturbation& xi, Exec exec) {
    const Matrix clean = forward(params, cfg, batch, nullptr, exec).representations;
    return vat_loss(params, cfg, batch, clean, xi, exec);
}

VatLoss vat_loss(const EncoderParams& params, const EncoderConfig& cfg, const EncodedBatch& batch,
                 const Matrix& clean, const Perturbation& xi, Exec exec) {
    if (xi.shape != std::vector<std::size_t>{batch.rows, batch.max_len, cfg.word_dim}) {
        throw ValidationError("perturbation shape does not match the batch");
    }
    if (batch.rows == 0) throw ValidationError("vat_loss needs a non-empty batch");
    ForwardResult perturbed = forward(params, cfg, batch, &xi, exec);
    const double inv_m = 1.0 / static_cast<double>(batch.rows);
    double total = 0.0;
    const Matrix g = distance_grad(clean, perturbed.representations, inv_m, &total);
    VatLoss out;
    out.loss = total * inv_m;
    out.grad = backward(params, cfg, std::move(perturbed.trace), g, exec).params;
    return out;
}

double total_loss(double rll, double adv, const VatConfig& cfg) {
    return rll + cfg.beta * adv;
}

} // namespace more
