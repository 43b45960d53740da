// Serial reference vs OpenMP kernels. Run: build/bench/more_bench
#include "more/clustering.hpp"
#include "more/data.hpp"
#include "more/encoder.hpp"
#include "more/kernels.hpp"
#include "more/metric_loss.hpp"
#include "more/trainer.hpp"

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

namespace {

more::Matrix random_points(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    more::Matrix m(n, d);
    for (auto& v : m.data) v = g(rng);
    return m;
}

template <bool Parallel>
void BM_PairwiseDistances(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const more::Matrix x = random_points(n, 32, 1);
    more::Matrix out(n, n);
    for (auto _ : state) {
        if constexpr (Parallel) more::kernels::pairwise_distances(x, out);
        else more::kernels::serial::pairwise_distances(x, out);
        benchmark::DoNotOptimize(out.data.data());
    }
}

template <bool Parallel>
void BM_AssignNearest(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const more::Matrix x = random_points(n, 32, 2);
    const more::Matrix c = random_points(16, 32, 3);
    std::vector<int> assign(n);
    std::vector<double> d2(n);
    for (auto _ : state) {
        double total = Parallel ? more::kernels::assign_nearest(x, c, assign, d2)
                                : more::kernels::serial::assign_nearest(x, c, assign, d2);
        benchmark::DoNotOptimize(total);
    }
}

template <bool Parallel>
void BM_MeanShift(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const more::Matrix x = random_points(n, 16, 4);
    const double bw = more::estimate_bandwidth(x, 0.3);
    more::Matrix modes(n, 16);
    std::vector<int> iters(n);
    for (auto _ : state) {
        if constexpr (Parallel) more::kernels::mean_shift_modes(x, bw, 300, 1e-6, modes, iters);
        else more::kernels::serial::mean_shift_modes(x, bw, 300, 1e-6, modes, iters);
        benchmark::DoNotOptimize(modes.data.data());
    }
}

template <more::Exec E>
void BM_EncoderForwardBackward(benchmark::State& state) {
    more::Rng rng(5);
    more::SynthConfig sc;
    sc.num_classes = 8;
    sc.per_class = static_cast<int>(state.range(0)) / 8;
    const more::Dataset data = more::synth_generate(sc, rng);
    const more::Vocabulary vocab = more::build_vocab(data, 1);
    more::EncoderConfig cfg;
    cfg.vocab_size = vocab.size();
    const more::EncoderParams params = more::init_params(cfg, rng);
    const more::EncodedBatch batch = more::encode_inputs(data.instances(), vocab, cfg.max_len, cfg.max_offset);
    for (auto _ : state) {
        auto fwd = more::forward(params, cfg, batch, nullptr, E);
        more::Matrix grad(fwd.representations.rows, fwd.representations.cols, 1e-3);
        auto bwd = more::backward(params, cfg, std::move(fwd.trace), grad, E);
        benchmark::DoNotOptimize(bwd.params.conv_filters.data.data());
    }
}

template <more::Exec E>
void BM_RllBatch(benchmark::State& state) {
    const auto classes = static_cast<std::size_t>(state.range(0));
    const std::size_t per = 10;
    const more::Matrix x = random_points(classes * per, 32, 6);
    more::Matrix reps = x;
    for (std::size_t i = 0; i < reps.rows; ++i) {
        double n = 0.0;
        for (double v : reps.row(i)) n += v * v;
        for (double& v : reps.row(i)) v /= std::sqrt(n);
    }
    std::vector<std::int32_t> labels(reps.rows);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::int32_t>(i / per);
    const more::LossConfig cfg;
    for (auto _ : state) {
        auto r = more::rll_batch(reps, labels, cfg, E);
        benchmark::DoNotOptimize(r.loss);
    }
}

} // namespace

BENCHMARK(BM_PairwiseDistances<false>)->Arg(256)->Arg(1024)->Name("pairwise_distances/serial");
BENCHMARK(BM_PairwiseDistances<true>)->Arg(256)->Arg(1024)->Name("pairwise_distances/parallel");
BENCHMARK(BM_AssignNearest<false>)->Arg(4096)->Arg(65536)->Name("assign_nearest/serial");
BENCHMARK(BM_AssignNearest<true>)->Arg(4096)->Arg(65536)->Name("assign_nearest/parallel");
BENCHMARK(BM_MeanShift<false>)->Arg(400)->Arg(1600)->Name("mean_shift_modes/serial");
BENCHMARK(BM_MeanShift<true>)->Arg(400)->Arg(1600)->Name("mean_shift_modes/parallel");
BENCHMARK(BM_EncoderForwardBackward<more::Exec::serial>)->Arg(64)->Arg(240)->Name("encoder_fwd_bwd/serial");
BENCHMARK(BM_EncoderForwardBackward<more::Exec::parallel>)->Arg(64)->Arg(240)->Name("encoder_fwd_bwd/parallel");
BENCHMARK(BM_RllBatch<more::Exec::serial>)->Arg(8)->Arg(24)->Name("rll_batch/serial");
BENCHMARK(BM_RllBatch<more::Exec::parallel>)->Arg(8)->Arg(24)->Name("rll_batch/parallel");

BENCHMARK_MAIN();
