#pragma once

#include "more/data.hpp"
#include "more/encoder.hpp"
#include "more/metric_loss.hpp"
#include "more/vat.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace more {

/// Adam moments mirror the parameter shapes.
struct AdamState {
    EncoderParams first_moment;
    EncoderParams second_moment;
    long step = 0;

    static AdamState zeros(const EncoderConfig& cfg);
};

struct AdamConstants {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam update, in place. Throws DivergenceError naming the
/// step when a gradient entry is not finite; nothing is modified then.
void adam_step(EncoderParams& params, const EncoderParams& grads, AdamState& state, double lr,
               const AdamConstants& k = {});

struct TrainConfig {
    double learning_rate = 0.003;
    long num_steps = 1000;
    SamplerConfig sampler;
    LossConfig loss;
    std::optional<VatConfig> vat = VatConfig{};
    long eval_every = 0;  // checkpoint period in steps; 0 = only at the end
    std::uint64_t seed = 42;
    std::optional<std::filesystem::path> checkpoint_path;

    void validate() const;
};

struct StepRecord {
    long step = 0;
    double rll_loss = 0.0;
    double vat_loss = 0.0;
    double total_loss = 0.0;

    bool operator==(const StepRecord&) const = default;
};

struct TrainResult {
    EncoderParams params;
    std::vector<StepRecord> history;
};

using StepCallback = std::function<void(const StepRecord&)>;

/// Episodic training: sample c x k instances, encode, RLL (+ beta * VAT when
/// enabled with beta > 0), one combined gradient, one Adam step. With VAT
/// disabled no VAT randomness is drawn, so `vat = nullopt` and `beta = 0`
/// follow the same trajectory.
TrainResult train(const Dataset& data, const Vocabulary& vocab, const EncoderConfig& enc_cfg,
                  const TrainConfig& cfg, const StepCallback& on_step = {},
                  Exec exec = Exec::parallel);

/// Same, starting from given parameters instead of a fresh initialization.
TrainResult train_from(EncoderParams params, const Dataset& data, const Vocabulary& vocab,
                       const EncoderConfig& enc_cfg, const TrainConfig& cfg,
                       const StepCallback& on_step = {}, Exec exec = Exec::parallel);

/// Deterministic parameter initialization used by `train`.
EncoderParams initial_params(const EncoderConfig& enc_cfg, std::uint64_t seed);

/// CSV with header step,rll_loss,vat_loss,total_loss.
void write_history_csv(const std::filesystem::path& path, const std::vector<StepRecord>& history);

/// Independent random streams derived from one seed.
Rng make_rng(std::uint64_t seed, std::uint64_t stream);

} // namespace more
