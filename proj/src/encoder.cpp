#include "more/encoder.hpp"

#include "more/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <fmt/format.h>

namespace more {

namespace {

constexpr double kNormEps = 1e-12;

std::uint64_t shape_tag(const EncoderConfig& cfg) {
    // FNV-1a over the config fields.
    std::uint64_t h = 1469598103934665603ull;
    for (std::size_t v : {cfg.vocab_size, cfg.word_dim, cfg.position_dim, cfg.num_filters,
                          cfg.kernel_width, cfg.hidden_dim, cfg.max_len, cfg.max_offset}) {
        h ^= static_cast<std::uint64_t>(v);
        h *= 1099511628211ull;
    }
    return h;
}

void fill_uniform(Tensor& t, double bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& x : t.data) x = dist(rng);
}

double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

} // namespace

void EncoderConfig::validate() const {
    auto positive = [](std::size_t v, const char* key) {
        if (v < 1) throw ConfigError(key, "must be >= 1");
    };
    positive(vocab_size, "encoder.vocab_size");
    positive(word_dim, "encoder.word_dim");
    positive(position_dim, "encoder.position_dim");
    positive(num_filters, "encoder.num_filters");
    positive(kernel_width, "encoder.kernel_width");
    positive(hidden_dim, "encoder.hidden_dim");
    positive(max_len, "encoder.max_len");
    positive(max_offset, "encoder.max_offset");
    if (kernel_width > max_len) throw ConfigError("encoder.kernel_width", "must be <= max_len");
}

// ---- EncoderParams ------------------------------------------------------

EncoderParams EncoderParams::zeros(const EncoderConfig& cfg) {
    EncoderParams p;
    p.word_embedding = Tensor({cfg.vocab_size, cfg.word_dim});
    p.head_position = Tensor({cfg.position_vocab(), cfg.position_dim});
    p.tail_position = Tensor({cfg.position_vocab(), cfg.position_dim});
    p.conv_filters = Tensor({cfg.num_filters, cfg.kernel_width, cfg.input_dim()});
    p.conv_bias = Tensor({cfg.num_filters});
    p.proj_weight = Tensor({cfg.hidden_dim, cfg.num_filters});
    p.proj_bias = Tensor({cfg.hidden_dim});
    return p;
}

void EncoderParams::check_shapes(const EncoderConfig& cfg) const {
    const EncoderParams ref = zeros(cfg);
    auto expect = [](const Tensor& got, const Tensor& want, const char* name) {
        if (got.shape != want.shape || got.data.size() != want.data.size()) {
            throw ValidationError(fmt::format("parameter '{}' has the wrong shape", name));
        }
    };
    expect(word_embedding, ref.word_embedding, "word_embedding");
    expect(head_position, ref.head_position, "head_position");
    expect(tail_position, ref.tail_position, "tail_position");
    expect(conv_filters, ref.conv_filters, "conv_filters");
    expect(conv_bias, ref.conv_bias, "conv_bias");
    expect(proj_weight, ref.proj_weight, "proj_weight");
    expect(proj_bias, ref.proj_bias, "proj_bias");
}

bool EncoderParams::all_finite() const {
    bool ok = true;
    for_each([&](std::string_view, const Tensor& t) {
        for (double x : t.data) ok = ok && std::isfinite(x);
    });
    return ok;
}

std::size_t EncoderParams::num_values() const {
    std::size_t n = 0;
    for_each([&](std::string_view, const Tensor& t) { n += t.size(); });
    return n;
}

void EncoderParams::axpy(double scale, const EncoderParams& other) {
    std::array<const Tensor*, 7> src{};
    std::size_t k = 0;
    other.for_each([&](std::string_view, const Tensor& t) { src[k++] = &t; });
    k = 0;
    for_each([&](std::string_view, Tensor& t) {
        const Tensor& o = *src[k++];
        for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] += scale * o.data[i];
    });
}

EncoderParams init_params(const EncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    EncoderParams p = EncoderParams::zeros(cfg);
    fill_uniform(p.word_embedding, glorot_bound(cfg.vocab_size, cfg.word_dim), rng);
    fill_uniform(p.head_position, glorot_bound(cfg.position_vocab(), cfg.position_dim), rng);
    fill_uniform(p.tail_position, glorot_bound(cfg.position_vocab(), cfg.position_dim), rng);
    fill_uniform(p.conv_filters,
                 glorot_bound(cfg.kernel_width * cfg.input_dim(), cfg.kernel_width * cfg.num_filters), rng);
    fill_uniform(p.proj_weight, glorot_bound(cfg.num_filters, cfg.hidden_dim), rng);
    return p;
}

// ---- forward ------------------------------------------------------------

namespace {

void forward_row(const EncoderParams& p, const EncoderConfig& cfg, const EncodedBatch& batch,
                 const Tensor* offset, std::size_t r, ForwardTrace& tr, Matrix& reps) {
    const std::size_t L = batch.max_len;
    const std::size_t Dw = cfg.word_dim;
    const std::size_t Dp = cfg.position_dim;
    const std::size_t C = cfg.input_dim();
    const std::size_t F = cfg.num_filters;
    const std::size_t K = cfg.kernel_width;
    const std::size_t H = cfg.hidden_dim;
    const std::size_t pad = (K - 1) / 2;

    double* X = tr.inputs.data.data() + r * L * C;
    for (std::size_t t = 0; t < L; ++t) {
        if (!batch.valid(r, t)) continue;
        double* x = X + t * C;
        const auto tok = static_cast<std::size_t>(batch.token(r, t));
        const double* emb = p.word_embedding.data.data() + tok * Dw;
        if (offset != nullptr) {
            const double* off = offset->data.data() + (r * L + t) * Dw;
            for (std::size_t d = 0; d < Dw; ++d) x[d] = emb[d] + off[d];
        } else {
            std::copy(emb, emb + Dw, x);
        }
        const auto hp = static_cast<std::size_t>(batch.head_positions[r * L + t]);
        const auto tp = static_cast<std::size_t>(batch.tail_positions[r * L + t]);
        std::copy_n(p.head_position.data.data() + hp * Dp, Dp, x + Dw);
        std::copy_n(p.tail_position.data.data() + tp * Dp, Dp, x + Dw + Dp);
    }

    double* A = tr.conv_out.data.data() + r * L * F;
    const double* W = p.conv_filters.data.data();
    for (std::size_t t = 0; t < L; ++t) {
        if (!batch.valid(r, t)) continue;
        for (std::size_t f = 0; f < F; ++f) {
            double acc = p.conv_bias.data[f];
            for (std::size_t j = 0; j < K; ++j) {
                const long src = static_cast<long>(t + j) - static_cast<long>(pad);
                if (src < 0 || src >= static_cast<long>(L)) continue;
                const double* x = X + static_cast<std::size_t>(src) * C;
                const double* w = W + (f * K + j) * C;
                for (std::size_t c = 0; c < C; ++c) acc += w[c] * x[c];
            }
            A[t * F + f] = acc > 0.0 ? acc : 0.0;
        }
    }

    // Max-pool over valid positions; ties go to the earliest index.
    std::int32_t* arg = tr.argmax.data() + r * F;
    auto pooled = tr.pooled.row(r);
    for (std::size_t f = 0; f < F; ++f) {
        double best = -std::numeric_limits<double>::infinity();
        std::int32_t at = -1;
        for (std::size_t t = 0; t < L; ++t) {
            if (!batch.valid(r, t)) continue;
            if (A[t * F + f] > best) {
                best = A[t * F + f];
                at = static_cast<std::int32_t>(t);
            }
        }
        arg[f] = at;
        pooled[f] = at < 0 ? 0.0 : best;
    }

    auto z = tr.projected.row(r);
    const double* P = p.proj_weight.data.data();
    for (std::size_t h = 0; h < H; ++h) {
        double acc = p.proj_bias.data[h];
        for (std::size_t f = 0; f < F; ++f) acc += P[h * F + f] * pooled[f];
        z[h] = acc;
    }
    const double norm = std::sqrt(squared_norm(z));
    tr.norms[r] = norm;
    auto out = reps.row(r);
    for (std::size_t h = 0; h < H; ++h) out[h] = z[h] / (norm + kNormEps);
}

} // namespace

ForwardResult forward(const EncoderParams& params, const EncoderConfig& cfg,
                      const EncodedBatch& batch, const Tensor* embedding_offset, Exec exec) {
    params.check_shapes(cfg);
    const std::size_t m = batch.rows;
    const std::size_t L = batch.max_len;
    if (L != cfg.max_len) {
        throw ValidationError(fmt::format("batch max_len {} != encoder max_len {}", L, cfg.max_len));
    }
    if (batch.token_ids.size() != m * L || batch.head_positions.size() != m * L ||
        batch.tail_positions.size() != m * L) {
        throw ValidationError("encoded batch arrays have inconsistent sizes");
    }
    for (std::size_t i = 0; i < m * L; ++i) {
        if (batch.token_ids[i] < 0 || static_cast<std::size_t>(batch.token_ids[i]) >= cfg.vocab_size) {
            throw ValidationError(fmt::format("token id {} out of vocabulary range", batch.token_ids[i]));
        }
        if (batch.head_positions[i] < 0 || batch.tail_positions[i] < 0 ||
            static_cast<std::size_t>(batch.head_positions[i]) >= cfg.position_vocab() ||
            static_cast<std::size_t>(batch.tail_positions[i]) >= cfg.position_vocab()) {
            throw ValidationError("position index out of range");
        }
    }
    if (embedding_offset != nullptr &&
        embedding_offset->shape != std::vector<std::size_t>{m, L, cfg.word_dim}) {
        throw ValidationError("embedding offset shape must be rows x max_len x word_dim");
    }

    ForwardResult res;
    ForwardTrace& tr = res.trace;
    tr.rows = m;
    tr.max_len = L;
    tr.params_tag = shape_tag(cfg);
    tr.token_ids = batch.token_ids;
    tr.head_positions = batch.head_positions;
    tr.tail_positions = batch.tail_positions;
    tr.inputs = Tensor({m, L, cfg.input_dim()});
    tr.conv_out = Tensor({m, L, cfg.num_filters});
    tr.argmax.assign(m * cfg.num_filters, -1);
    tr.pooled = Matrix(m, cfg.num_filters);
    tr.projected = Matrix(m, cfg.hidden_dim);
    tr.norms.assign(m, 0.0);
    res.representations = Matrix(m, cfg.hidden_dim);

    const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
    for (long r = 0; r < rows; ++r) {
        forward_row(params, cfg, batch, embedding_offset, static_cast<std::size_t>(r), tr,
                    res.representations);
    }
    tr.live = true;
    return res;
}

// ---- backward -----------------------------------------------------------

namespace {

struct RowGrads {
    std::vector<double> conv_filters;
    std::vector<double> conv_bias;
    std::vector<double> proj_weight;
    std::vector<double> proj_bias;
};

void backward_row(const EncoderParams& p, const EncoderConfig& cfg, const ForwardTrace& tr,
                  const Matrix& grad_reps, std::size_t r, RowGrads& g, Tensor& dX) {
    const std::size_t L = tr.max_len;
    const std::size_t C = cfg.input_dim();
    const std::size_t F = cfg.num_filters;
    const std::size_t K = cfg.kernel_width;
    const std::size_t H = cfg.hidden_dim;
    const std::size_t pad = (K - 1) / 2;

    // r = z / (n + eps):  dz = dr/(n+eps) - z (z.dr) / (n (n+eps)^2)
    const auto z = tr.projected.row(r);
    const auto dr = grad_reps.row(r);
    const double n = tr.norms[r];
    const double denom = n + kNormEps;
    double zdr = 0.0;
    for (std::size_t h = 0; h < H; ++h) zdr += z[h] * dr[h];
    std::vector<double> dz(H);
    for (std::size_t h = 0; h < H; ++h) {
        dz[h] = dr[h] / denom;
        if (n > 0.0) dz[h] -= z[h] * zdr / (n * denom * denom);
    }

    const auto pooled = tr.pooled.row(r);
    const double* P = p.proj_weight.data.data();
    std::vector<double> dpool(F, 0.0);
    for (std::size_t h = 0; h < H; ++h) {
        g.proj_bias[h] = dz[h];
        for (std::size_t f = 0; f < F; ++f) {
            g.proj_weight[h * F + f] = dz[h] * pooled[f];
            dpool[f] += P[h * F + f] * dz[h];
        }
    }

    const double* X = tr.inputs.data.data() + r * L * C;
    const double* A = tr.conv_out.data.data() + r * L * F;
    const double* W = p.conv_filters.data.data();
    double* dx = dX.data.data() + r * L * C;
    const std::int32_t* arg = tr.argmax.data() + r * F;
    for (std::size_t f = 0; f < F; ++f) {
        if (arg[f] < 0) continue;
        const auto t = static_cast<std::size_t>(arg[f]);
        if (!(A[t * F + f] > 0.0)) continue;  // ReLU inactive
        const double gf = dpool[f];
        g.conv_bias[f] += gf;
        for (std::size_t j = 0; j < K; ++j) {
            const long src = static_cast<long>(t + j) - static_cast<long>(pad);
            if (src < 0 || src >= static_cast<long>(L)) continue;
            const double* x = X + static_cast<std::size_t>(src) * C;
            const double* w = W + (f * K + j) * C;
            double* gw = g.conv_filters.data() + (f * K + j) * C;
            double* gx = dx + static_cast<std::size_t>(src) * C;
            for (std::size_t c = 0; c < C; ++c) {
                gw[c] += gf * x[c];
                gx[c] += gf * w[c];
            }
        }
    }
    // Inputs at PAD positions are constants (zero), not embeddings.
    for (std::size_t t = 0; t < L; ++t) {
        if (tr.token_ids[r * L + t] == Vocabulary::kPad) std::fill_n(dx + t * C, C, 0.0);
    }
}

} // namespace

BackwardResult backward(const EncoderParams& params, const EncoderConfig& cfg,
                        ForwardTrace&& trace, const Matrix& grad_representations, Exec exec) {
    if (trace.empty()) throw ValidationError("stale trace: already consumed or never produced");
    if (trace.params_tag != shape_tag(cfg)) throw ValidationError("trace was produced by a different encoder");
    params.check_shapes(cfg);
    if (grad_representations.rows != trace.rows || grad_representations.cols != cfg.hidden_dim) {
        throw ValidationError("representation gradient shape does not match the trace");
    }

    const std::size_t m = trace.rows;
    const std::size_t L = trace.max_len;
    const std::size_t C = cfg.input_dim();
    const std::size_t Dw = cfg.word_dim;
    const std::size_t Dp = cfg.position_dim;
    const std::size_t F = cfg.num_filters;
    const std::size_t H = cfg.hidden_dim;

    std::vector<RowGrads> rows(m);
    for (auto& g : rows) {
        g.conv_filters.assign(params.conv_filters.size(), 0.0);
        g.conv_bias.assign(F, 0.0);
        g.proj_weight.assign(H * F, 0.0);
        g.proj_bias.assign(H, 0.0);
    }
    Tensor dX({m, L, C});

    const long nrows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
    for (long r = 0; r < nrows; ++r) {
        backward_row(params, cfg, trace, grad_representations, static_cast<std::size_t>(r),
                     rows[static_cast<std::size_t>(r)], dX);
    }

    // Fixed-order reduction keeps serial and parallel runs bit-identical.
    BackwardResult out;
    out.params = EncoderParams::zeros(cfg);
    out.word_inputs = Tensor({m, L, Dw});
    auto add = [](std::vector<double>& dst, const std::vector<double>& src) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    };
    for (std::size_t r = 0; r < m; ++r) {
        add(out.params.conv_filters.data, rows[r].conv_filters);
        add(out.params.conv_bias.data, rows[r].conv_bias);
        add(out.params.proj_weight.data, rows[r].proj_weight);
        add(out.params.proj_bias.data, rows[r].proj_bias);
        for (std::size_t t = 0; t < L; ++t) {
            const std::size_t at = r * L + t;
            const auto tok = trace.token_ids[at];
            if (tok == Vocabulary::kPad) continue;
            const double* g = dX.data.data() + at * C;
            double* gw = out.params.word_embedding.data.data() + static_cast<std::size_t>(tok) * Dw;
            double* gi = out.word_inputs.data.data() + at * Dw;
            for (std::size_t d = 0; d < Dw; ++d) {
                gw[d] += g[d];
                gi[d] = g[d];
            }
            double* gh = out.params.head_position.data.data() +
                         static_cast<std::size_t>(trace.head_positions[at]) * Dp;
            double* gt = out.params.tail_position.data.data() +
                         static_cast<std::size_t>(trace.tail_positions[at]) * Dp;
            for (std::size_t d = 0; d < Dp; ++d) {
                gh[d] += g[Dw + d];
                gt[d] += g[Dw + Dp + d];
            }
        }
    }
    trace = ForwardTrace{};
    return out;
}

// ---- checkpoints --------------------------------------------------------

namespace {

constexpr std::array<char, 8> kMagic{'M', 'O', 'R', 'E', 'E', 'N', 'C', '\0'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

template <class T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw ValidationError("checkpoint truncated");
    return v;
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const EncoderConfig& cfg,
                     const EncoderParams& params) {
    params.check_shapes(cfg);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot write checkpoint '{}'", path.string()));
    out.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(out, kCheckpointVersion);
    for (std::size_t v : {cfg.vocab_size, cfg.word_dim, cfg.position_dim, cfg.num_filters,
                          cfg.kernel_width, cfg.hidden_dim, cfg.max_len, cfg.max_offset}) {
        put<std::uint64_t>(out, v);
    }
    put<std::uint32_t>(out, 7);
    params.for_each([&](std::string_view name, const Tensor& t) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
        for (std::size_t d : t.shape) put<std::uint64_t>(out, d);
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    });
    if (!out) throw std::runtime_error(fmt::format("write failed for '{}'", path.string()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(fmt::format("cannot open checkpoint '{}'", path.string()));
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) throw ValidationError("not an encoder checkpoint (bad magic)");
    const auto version = get<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
        throw ValidationError(fmt::format("unsupported checkpoint version {}", version));
    }
    Checkpoint ck;
    for (std::size_t* field : {&ck.config.vocab_size, &ck.config.word_dim, &ck.config.position_dim,
                               &ck.config.num_filters, &ck.config.kernel_width,
                               &ck.config.hidden_dim, &ck.config.max_len, &ck.config.max_offset}) {
        *field = static_cast<std::size_t>(get<std::uint64_t>(in));
    }
    ck.config.validate();
    ck.params = EncoderParams::zeros(ck.config);
    if (get<std::uint32_t>(in) != 7) throw ValidationError("checkpoint tensor count mismatch");
    ck.params.for_each([&](std::string_view name, Tensor& t) {
        const auto len = get<std::uint32_t>(in);
        std::string stored(len, '\0');
        in.read(stored.data(), len);
        if (!in || stored != name) {
            throw ValidationError(fmt::format("checkpoint: expected tensor '{}'", name));
        }
        const auto rank = get<std::uint32_t>(in);
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(in));
        if (shape != t.shape) throw ValidationError(fmt::format("checkpoint: tensor '{}' has wrong shape", name));
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!in) throw ValidationError("checkpoint truncated");
    });
    if (in.peek() != std::char_traits<char>::eof()) throw ValidationError("checkpoint has trailing bytes");
    return ck;
}

} // namespace more
