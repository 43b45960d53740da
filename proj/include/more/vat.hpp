#pragma once

#include "more/encoder.hpp"

namespace more {

/// Virtual adversarial training settings. Radii are measured in
/// word-embedding units, per instance, over all token x dim entries.
struct VatConfig {
    double epsilon = 0.02;      // radius of the adversarial perturbation
    double beta = 1.0;          // weight of the penalty in the total loss
    double probe_scale = 0.02;  // radius of the random probe

    void validate() const;
};

/// rows x max_len x word_dim; slice i is the perturbation of instance i.
using Perturbation = Tensor;

/// Isotropic Gaussian per instance, rescaled to norm `probe_scale`. A
/// degenerate all-zero draw becomes probe_scale times the first basis
/// vector.
Perturbation random_probe(std::size_t rows, std::size_t max_len, std::size_t word_dim,
                          double probe_scale, Rng& rng);

/// One power-iteration step: perturb with a random probe, differentiate
/// sum_i ||r_i - r~_i|| w.r.t. the probe, and rescale each instance's
/// gradient to norm epsilon. Instances whose gradient norm is below 1e-12
/// get a zero slice.
Perturbation worst_case_perturbation(const EncoderParams& params, const EncoderConfig& cfg,
                                     const EncodedBatch& batch, const VatConfig& vcfg, Rng& rng,
                                     Exec exec = Exec::parallel);

/// Same, reusing clean representations already computed for this batch.
Perturbation worst_case_perturbation(const EncoderParams& params, const EncoderConfig& cfg,
                                     const EncodedBatch& batch, const Matrix& clean,
                                     const VatConfig& vcfg, Rng& rng, Exec exec = Exec::parallel);

struct VatLoss {
    double loss = 0.0;
    EncoderParams grad;
};

/// (1/m) sum_i ||F(S_i) - F(S_i + xi_i)||. The clean branch is a constant
/// target; the gradient flows through the perturbed branch only.
VatLoss vat_loss(const EncoderParams& params, const EncoderConfig& cfg, const EncodedBatch& batch,
                 const Perturbation& xi, Exec exec = Exec::parallel);

VatLoss vat_loss(const EncoderParams& params, const EncoderConfig& cfg, const EncodedBatch& batch,
                 const Matrix& clean, const Perturbation& xi, Exec exec = Exec::parallel);

/// rll + beta * adv
double total_loss(double rll, double adv, const VatConfig& cfg);

} // namespace more
