#pragma once
// Fixtures and independent oracles shared by the unit and acceptance tests.
// Oracles here are written straight from the formulas and share no code
// with the library beyond plain data types.

#include "more/data.hpp"
#include "more/encoder.hpp"
#include "more/metric_loss.hpp"
#include "more/tensor.hpp"
#include "more/vat.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace more::test {

// ---- fixtures -------------------------------------------------------------

inline EncoderConfig tiny_encoder() {
    EncoderConfig c;
    c.vocab_size = 20;
    c.word_dim = 4;
    c.position_dim = 3;
    c.num_filters = 5;
    c.kernel_width = 3;
    c.hidden_dim = 4;
    c.max_len = 7;
    c.max_offset = 4;
    return c;
}

/// 6 special tokens + w0..w13.
inline Vocabulary tiny_vocab() {
    Vocabulary v;
    for (int i = 0; v.size() < 20; ++i) v.add("w" + std::to_string(i));
    return v;
}

/// Random instances over w0..w13; lengths may exceed max_len to exercise
/// truncation.
inline std::vector<Instance> random_instances(std::size_t m, std::size_t min_len, std::size_t max_len,
                                              std::mt19937_64& rng, int num_labels = 3) {
    std::uniform_int_distribution<std::size_t> len_d(min_len, max_len);
    std::uniform_int_distribution<int> tok_d(0, 13);
    std::uniform_int_distribution<int> lab_d(0, num_labels - 1);
    std::vector<Instance> out;
    for (std::size_t i = 0; i < m; ++i) {
        Instance inst;
        const std::size_t len = len_d(rng);
        for (std::size_t t = 0; t < len; ++t) inst.tokens.push_back("w" + std::to_string(tok_d(rng)));
        std::uniform_int_distribution<std::size_t> pos_d(0, len - 1);
        const std::size_t h = pos_d(rng);
        std::size_t t = pos_d(rng);
        while (t == h) t = pos_d(rng);
        inst.head = {h, h};
        inst.tail = {t, t};
        inst.label = "L" + std::to_string(lab_d(rng));
        out.push_back(std::move(inst));
    }
    return out;
}

inline EncodedBatch random_batch(const EncoderConfig& cfg, std::size_t m, std::mt19937_64& rng) {
    return encode_inputs(random_instances(m, 2, cfg.max_len + 2, rng), tiny_vocab(), cfg.max_len,
                         cfg.max_offset);
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Matrix m(rows, cols);
    for (double& v : m.data) v = g(rng);
    return m;
}

inline Matrix random_unit_rows(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    Matrix m = random_matrix(rows, cols, rng);
    for (std::size_t i = 0; i < rows; ++i) {
        double n = 0.0;
        for (double v : m.row(i)) n += v * v;
        n = std::sqrt(n);
        for (double& v : m.row(i)) v /= n;
    }
    return m;
}

inline std::filesystem::path temp_path(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "more_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

// ---- ranked list loss oracle ----------------------------------------------

/// Direct evaluation of the per-anchor objective summed over the batch:
///   L_P(i) = sum_{j != i, y_j = y_i} max(0, d_ij - alpha_p)
///   N_i    = {j : y_j != y_i, d_ij < alpha_n}
///   w_ij   = exp(T (alpha_n - d_ij)) / sum_{k in N_i} exp(T (alpha_n - d_ik))
///   L_N(i) = sum_{j in N_i} w_ij (alpha_n - d_ij)
///   L      = sum_i (1 - lambda) L_P(i) + lambda L_N(i)
inline double brute_force_rll(const Matrix& x, const std::vector<std::int32_t>& y, const LossConfig& c) {
    const std::size_t m = x.rows;
    auto dist = [&](std::size_t i, std::size_t j) {
        double s = 0.0;
        for (std::size_t k = 0; k < x.cols; ++k) s += (x(i, k) - x(j, k)) * (x(i, k) - x(j, k));
        return std::sqrt(s);
    };
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double lp = 0.0;
        double z = 0.0;
        double ln_num = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            if (j == i) continue;
            const double d = dist(i, j);
            if (y[j] == y[i]) {
                lp += std::max(0.0, d - c.alpha_p);
            } else if (d < c.alpha_n) {
                const double w = std::exp(c.temperature * (c.alpha_n - d));
                z += w;
                ln_num += w * (c.alpha_n - d);
            }
        }
        const double ln = z > 0.0 ? ln_num / z : 0.0;
        total += (1.0 - c.lambda) * lp + c.lambda * ln;
    }
    return total;
}

/// The same objective with informative sets and weights frozen at `base`;
/// its gradient is the one rll_batch reports.
inline std::function<double(const Matrix&)> frozen_rll(const Matrix& base, const std::vector<std::int32_t>& y,
                                                       const LossConfig& c) {
    struct Term {
        std::size_t i, j;
        double coef;    // multiplies d_ij
        double offset;  // constant part
    };
    std::vector<Term> terms;
    const std::size_t m = base.rows;
    auto dist = [](const Matrix& x, std::size_t i, std::size_t j) {
        double s = 0.0;
        for (std::size_t k = 0; k < x.cols; ++k) s += (x(i, k) - x(j, k)) * (x(i, k) - x(j, k));
        return std::sqrt(s);
    };
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<std::pair<std::size_t, double>> negs;
        double z = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            if (j == i) continue;
            const double d = dist(base, i, j);
            if (y[j] == y[i]) {
                if (d > c.alpha_p) terms.push_back({i, j, 1.0 - c.lambda, -(1.0 - c.lambda) * c.alpha_p});
            } else if (d < c.alpha_n) {
                const double w = std::exp(c.temperature * (c.alpha_n - d));
                negs.emplace_back(j, w);
                z += w;
            }
        }
        for (const auto& [j, w] : negs) {
            const double wn = w / z;
            terms.push_back({i, j, -c.lambda * wn, c.lambda * wn * c.alpha_n});
        }
    }
    return [terms, dist](const Matrix& x) {
        double s = 0.0;
        for (const auto& t : terms) s += t.coef * dist(x, t.i, t.j) + t.offset;
        return s;
    };
}

// ---- B-cubed oracle -------------------------------------------------------

struct NaiveB3 {
    double p, r, f;
};

inline NaiveB3 naive_b3(const std::vector<int>& pred, const std::vector<int>& gold) {
    const std::size_t n = pred.size();
    double p = 0.0;
    double r = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double both = 0.0, same_c = 0.0, same_l = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const bool c = pred[j] == pred[i];
            const bool l = gold[j] == gold[i];
            same_c += c;
            same_l += l;
            both += c && l;
        }
        p += both / same_c;
        r += both / same_l;
    }
    p /= static_cast<double>(n);
    r /= static_cast<double>(n);
    return {p, r, p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0};
}

/// Random partition of n items into at most `max_parts` parts.
inline std::vector<int> random_partition(std::size_t n, int max_parts, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> d(0, max_parts - 1);
    std::vector<int> out(n);
    for (int& v : out) v = d(rng);
    return out;
}

// ---- finite differences ---------------------------------------------------

/// |a - b| / max(|a|, |b|, floor)
inline double rel_error(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double central_difference(const std::function<double()>& f, double& x, double h = 1e-6) {
    const double saved = x;
    x = saved + h;
    const double up = f();
    x = saved - h;
    const double down = f();
    x = saved;
    return (up - down) / (2.0 * h);
}

/// Random linear functional of the representations, sum_ij c_ij r_ij.
struct LinearProbe {
    Matrix coef;
    double operator()(const Matrix& r) const {
        double s = 0.0;
        for (std::size_t k = 0; k < r.data.size(); ++k) s += coef.data[k] * r.data[k];
        return s;
    }
};

/// Worst relative error between encoder backward and central differences for
/// the scalar sum_ij c_ij r_ij, over every parameter coordinate and every
/// word-input coordinate at non-PAD positions.
inline double encoder_gradient_error(const EncoderConfig& cfg, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    EncoderParams params = init_params(cfg, rng);
    // Non-zero biases so the bias paths are exercised away from init.
    std::normal_distribution<double> g(0.0, 0.1);
    for (double& v : params.conv_bias.data) v = g(rng);
    for (double& v : params.proj_bias.data) v = g(rng);
    const EncodedBatch batch = random_batch(cfg, 4, rng);
    const LinearProbe probe{random_matrix(batch.rows, cfg.hidden_dim, rng)};

    auto fwd = forward(params, cfg, batch, nullptr, Exec::serial);
    const BackwardResult back = backward(params, cfg, std::move(fwd.trace), probe.coef, Exec::serial);

    double worst = 0.0;
    EncoderParams work = params;
    std::vector<Tensor*> live;
    work.for_each([&](std::string_view, Tensor& t) { live.push_back(&t); });
    std::vector<const Tensor*> grads;
    back.params.for_each([&](std::string_view, const Tensor& t) { grads.push_back(&t); });
    auto loss = [&] { return probe(forward(work, cfg, batch, nullptr, Exec::serial).representations); };
    for (std::size_t t = 0; t < live.size(); ++t) {
        for (std::size_t k = 0; k < live[t]->data.size(); ++k) {
            const double fd = central_difference(loss, live[t]->data[k]);
            worst = std::max(worst, rel_error(grads[t]->data[k], fd));
        }
    }

    Tensor offset({batch.rows, cfg.max_len, cfg.word_dim});
    auto loss_off = [&] { return probe(forward(params, cfg, batch, &offset, Exec::serial).representations); };
    for (std::size_t r = 0; r < batch.rows; ++r) {
        for (std::size_t t = 0; t < cfg.max_len; ++t) {
            for (std::size_t k = 0; k < cfg.word_dim; ++k) {
                const std::size_t idx = (r * cfg.max_len + t) * cfg.word_dim + k;
                if (!batch.valid(r, t)) continue;
                const double fd = central_difference(loss_off, offset.data[idx]);
                worst = std::max(worst, rel_error(back.word_inputs.data[idx], fd));
            }
        }
    }
    return worst;
}

/// Worst relative error of the rll_batch gradient against central
/// differences of the frozen-weight objective on a random batch.
inline double rll_gradient_error(std::uint64_t seed, std::size_t m = 6, std::size_t d = 5) {
    std::mt19937_64 rng(seed);
    const Matrix x = random_unit_rows(m, d, rng);
    std::vector<std::int32_t> y(m);
    for (std::size_t i = 0; i < m; ++i) y[i] = static_cast<std::int32_t>(i % 3);
    LossConfig cfg;
    const RllResult res = rll_batch(x, y, cfg, Exec::serial);
    const auto f = frozen_rll(x, y, cfg);
    Matrix work = x;
    double worst = 0.0;
    for (std::size_t k = 0; k < work.data.size(); ++k) {
        const double fd = central_difference([&] { return f(work); }, work.data[k]);
        worst = std::max(worst, rel_error(res.grad.data[k], fd));
    }
    return worst;
}

/// Worst relative error of the vat_loss parameter gradient against central
/// differences of (1/m) sum_i ||clean_i - F(S_i + xi_i)|| with clean fixed.
inline double vat_gradient_error(const EncoderConfig& cfg, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const EncoderParams params = init_params(cfg, rng);
    const EncodedBatch batch = random_batch(cfg, 4, rng);
    const Matrix clean = forward(params, cfg, batch, nullptr, Exec::serial).representations;
    // A larger-than-default radius keeps distances well away from zero.
    VatConfig vcfg;
    vcfg.epsilon = 0.5;
    const Perturbation xi = worst_case_perturbation(params, cfg, batch, clean, vcfg, rng, Exec::serial);
    const VatLoss res = vat_loss(params, cfg, batch, clean, xi, Exec::serial);

    EncoderParams work = params;
    std::vector<Tensor*> live;
    work.for_each([&](std::string_view, Tensor& t) { live.push_back(&t); });
    std::vector<const Tensor*> grads;
    res.grad.for_each([&](std::string_view, const Tensor& t) { grads.push_back(&t); });
    auto loss = [&] {
        const Matrix r = forward(work, cfg, batch, &xi, Exec::serial).representations;
        double s = 0.0;
        for (std::size_t i = 0; i < r.rows; ++i) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < r.cols; ++k) d2 += (r(i, k) - clean(i, k)) * (r(i, k) - clean(i, k));
            s += std::sqrt(d2);
        }
        return s / static_cast<double>(r.rows);
    };
    double worst = 0.0;
    for (std::size_t t = 0; t < live.size(); ++t) {
        for (std::size_t k = 0; k < live[t]->data.size(); ++k) {
            const double fd = central_difference(loss, live[t]->data[k]);
            worst = std::max(worst, rel_error(grads[t]->data[k], fd));
        }
    }
    return worst;
}

} // namespace more::test
