#pragma once

#include "more/data.hpp"
#include "more/exec.hpp"
#include "more/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string_view>

namespace more {

struct EncoderConfig {
    std::size_t vocab_size = 0;
    std::size_t word_dim = 64;
    std::size_t position_dim = 8;
    std::size_t num_filters = 128;
    std::size_t kernel_width = 3;
    std::size_t hidden_dim = 32;
    std::size_t max_len = 32;
    std::size_t max_offset = 32;

    void validate() const;
    std::size_t input_dim() const { return word_dim + 2 * position_dim; }
    std::size_t position_vocab() const { return 2 * max_offset + 1; }

    bool operator==(const EncoderConfig&) const = default;
};

/// Trainable CNN encoder parameters. Gradients and Adam moments reuse this
/// type with identical shapes.
struct EncoderParams {
    Tensor word_embedding;   // vocab_size x word_dim
    Tensor head_position;    // position_vocab x position_dim
    Tensor tail_position;    // position_vocab x position_dim
    Tensor conv_filters;     // num_filters x kernel_width x input_dim
    Tensor conv_bias;        // num_filters
    Tensor proj_weight;      // hidden_dim x num_filters
    Tensor proj_bias;        // hidden_dim

    static EncoderParams zeros(const EncoderConfig& cfg);

    template <class F>
    void for_each(F&& f) {
        f(std::string_view("word_embedding"), word_embedding);
        f(std::string_view("head_position"), head_position);
        f(std::string_view("tail_position"), tail_position);
        f(std::string_view("conv_filters"), conv_filters);
        f(std::string_view("conv_bias"), conv_bias);
        f(std::string_view("proj_weight"), proj_weight);
        f(std::string_view("proj_bias"), proj_bias);
    }
    template <class F>
    void for_each(F&& f) const {
        const_cast<EncoderParams*>(this)->for_each(
            [&](std::string_view name, Tensor& t) { f(name, static_cast<const Tensor&>(t)); });
    }

    /// Throws ValidationError if any tensor shape disagrees with `cfg`.
    void check_shapes(const EncoderConfig& cfg) const;
    bool all_finite() const;
    std::size_t num_values() const;

    /// this += scale * other
    void axpy(double scale, const EncoderParams& other);

    bool operator==(const EncoderParams&) const = default;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)) per tensor, biases zero.
EncoderParams init_params(const EncoderConfig& cfg, Rng& rng);

/// Activations cached by forward for the matching backward call.
struct ForwardTrace {
    std::size_t rows = 0;
    std::size_t max_len = 0;
    std::uint64_t params_tag = 0;      // fingerprint of the parameter shapes
    bool live = false;                 // cleared once consumed by backward
    std::vector<std::int32_t> token_ids;
    std::vector<std::int32_t> head_positions;
    std::vector<std::int32_t> tail_positions;
    Tensor inputs;                     // rows x max_len x input_dim (zero at PAD)
    Tensor conv_out;                   // rows x max_len x num_filters, post-ReLU
    std::vector<std::int32_t> argmax;  // rows x num_filters, -1 when the row is all PAD
    Matrix pooled;                     // rows x num_filters
    Matrix projected;                  // rows x hidden_dim, before normalization
    std::vector<double> norms;         // rows

    bool empty() const { return !live; }
};

struct ForwardResult {
    Matrix representations;  // rows x hidden_dim, unit norm
    ForwardTrace trace;
};

/// Embedding lookup (+ optional word-embedding offset, rows x max_len x
/// word_dim) -> same-padded 1-D convolution -> ReLU -> masked max-pool ->
/// affine projection -> L2 normalization with denominator norm + 1e-12.
ForwardResult forward(const EncoderParams& params, const EncoderConfig& cfg,
                      const EncodedBatch& batch, const Tensor* embedding_offset = nullptr,
                      Exec exec = Exec::parallel);

struct BackwardResult {
    EncoderParams params;   // gradient w.r.t. every parameter
    Tensor word_inputs;     // rows x max_len x word_dim; zero at PAD positions
};

/// Reverse-mode gradient of a scalar given its gradient w.r.t. the
/// representations. Consumes the trace; a moved-from or mismatched trace is
/// rejected.
BackwardResult backward(const EncoderParams& params, const EncoderConfig& cfg,
                        ForwardTrace&& trace, const Matrix& grad_representations,
                        Exec exec = Exec::parallel);

// ---- checkpoints --------------------------------------------------------
//
// Binary, little-endian:
//   magic "MOREENC\0" | u32 version (=1) | 8 x u64 EncoderConfig fields
//   | u32 tensor count | per tensor: u32 name length, name bytes,
//     u32 rank, rank x u64 dims, prod(dims) x f64 raw IEEE-754 values

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const EncoderConfig& cfg,
                     const EncoderParams& params);

struct Checkpoint {
    EncoderConfig config;
    EncoderParams params;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace more
