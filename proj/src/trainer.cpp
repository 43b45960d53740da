#include "more/trainer.hpp"

#include "more/error.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>

namespace more {

namespace {

enum Stream : std::uint64_t { kInitStream = 1, kSamplerStream = 2, kVatStream = 3 };

void write_csv_double(std::ostream& out, double v) { out << fmt::format("{:.17g}", v); }

} // namespace

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), 0x4d4f5245u};
    return Rng(seq);
}

AdamState AdamState::zeros(const EncoderConfig& cfg) {
    return {EncoderParams::zeros(cfg), EncoderParams::zeros(cfg), 0};
}

void adam_step(EncoderParams& params, const EncoderParams& grads, AdamState& state, double lr,
               const AdamConstants& k) {
    const long step = state.step + 1;
    if (!grads.all_finite()) {
        throw DivergenceError(fmt::format("divergent gradients at step {}", step), step);
    }
    const double c1 = 1.0 - std::pow(k.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(k.beta2, static_cast<double>(step));

    std::vector<const Tensor*> g;
    grads.for_each([&](std::string_view, const Tensor& t) { g.push_back(&t); });
    std::vector<Tensor*> m1;
    std::vector<Tensor*> m2;
    state.first_moment.for_each([&](std::string_view, Tensor& t) { m1.push_back(&t); });
    state.second_moment.for_each([&](std::string_view, Tensor& t) { m2.push_back(&t); });

    std::size_t idx = 0;
    params.for_each([&](std::string_view name, Tensor& p) {
        const Tensor& gt = *g[idx];
        Tensor& mt = *m1[idx];
        Tensor& vt = *m2[idx];
        ++idx;
        if (gt.shape != p.shape || mt.shape != p.shape || vt.shape != p.shape) {
            throw ValidationError(fmt::format("adam_step: shape mismatch for '{}'", name));
        }
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            const double gi = gt.data[i];
            mt.data[i] = k.beta1 * mt.data[i] + (1.0 - k.beta1) * gi;
            vt.data[i] = k.beta2 * vt.data[i] + (1.0 - k.beta2) * gi * gi;
            const double mhat = mt.data[i] / c1;
            const double vhat = vt.data[i] / c2;
            p.data[i] -= lr * mhat / (std::sqrt(vhat) + k.eps);
        }
    });
    state.step = step;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("train.learning_rate", "must be > 0");
    }
    if (num_steps < 1) throw ConfigError("train.num_steps", "must be >= 1");
    if (eval_every < 0) throw ConfigError("train.eval_every", "must be >= 0");
    sampler.validate();
    loss.validate();
    if (vat) vat->validate();
}

EncoderParams initial_params(const EncoderConfig& enc_cfg, std::uint64_t seed) {
    Rng rng = make_rng(seed, kInitStream);
    return init_params(enc_cfg, rng);
}

TrainResult train(const Dataset& data, const Vocabulary& vocab, const EncoderConfig& enc_cfg,
                  const TrainConfig& cfg, const StepCallback& on_step, Exec exec) {
    return train_from(initial_params(enc_cfg, cfg.seed), data, vocab, enc_cfg, cfg, on_step, exec);
}

TrainResult train_from(EncoderParams params, const Dataset& data, const Vocabulary& vocab,
                       const EncoderConfig& enc_cfg, const TrainConfig& cfg,
                       const StepCallback& on_step, Exec exec) {
    cfg.validate();
    enc_cfg.validate();
    if (vocab.size() != enc_cfg.vocab_size) {
        throw ValidationError(fmt::format("vocabulary has {} tokens but encoder expects {}",
                                          vocab.size(), enc_cfg.vocab_size));
    }
    params.check_shapes(enc_cfg);

    const EpisodeSampler sampler(data, cfg.sampler);
    Rng sample_rng = make_rng(cfg.seed, kSamplerStream);
    Rng vat_rng = make_rng(cfg.seed, kVatStream);
    const bool use_vat = cfg.vat.has_value() && cfg.vat->beta > 0.0;

    AdamState adam = AdamState::zeros(enc_cfg);
    TrainResult result;
    result.history.reserve(static_cast<std::size_t>(cfg.num_steps));

    std::vector<Instance> episode;
    for (long step = 1; step <= cfg.num_steps; ++step) {
        episode.clear();
        for (std::size_t i : sampler.sample_indices(sample_rng)) episode.push_back(data[i]);
        const EncodedBatch batch = encode_inputs(episode, vocab, enc_cfg.max_len, enc_cfg.max_offset);

        ForwardResult fwd = forward(params, enc_cfg, batch, nullptr, exec);
        const RllResult rll = rll_batch(fwd.representations, batch.labels, cfg.loss, exec);
        const Matrix clean = fwd.representations;
        EncoderParams grads = backward(params, enc_cfg, std::move(fwd.trace), rll.grad, exec).params;

        StepRecord rec;
        rec.step = step;
        rec.rll_loss = rll.loss;
        if (use_vat) {
            const Perturbation xi =
                worst_case_perturbation(params, enc_cfg, batch, clean, *cfg.vat, vat_rng, exec);
            const VatLoss adv = vat_loss(params, enc_cfg, batch, clean, xi, exec);
            grads.axpy(cfg.vat->beta, adv.grad);
            rec.vat_loss = adv.loss;
            rec.total_loss = total_loss(rll.loss, adv.loss, *cfg.vat);
        } else {
            rec.total_loss = rll.loss;
        }
        if (!std::isfinite(rec.total_loss)) {
            throw DivergenceError(fmt::format("non-finite loss at step {}", step), step);
        }

        adam_step(params, grads, adam, cfg.learning_rate);
        result.history.push_back(rec);
        if (on_step) on_step(rec);

        if (cfg.checkpoint_path && cfg.eval_every > 0 && step % cfg.eval_every == 0) {
            save_checkpoint(*cfg.checkpoint_path, enc_cfg, params);
        }
    }
    if (cfg.checkpoint_path) save_checkpoint(*cfg.checkpoint_path, enc_cfg, params);
    result.params = std::move(params);
    return result;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<StepRecord>& history) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    out << "step,rll_loss,vat_loss,total_loss\n";
    for (const auto& r : history) {
        out << r.step << ',';
        write_csv_double(out, r.rll_loss);
        out << ',';
        write_csv_double(out, r.vat_loss);
        out << ',';
        write_csv_double(out, r.total_loss);
        out << '\n';
    }
}

} // namespace more
