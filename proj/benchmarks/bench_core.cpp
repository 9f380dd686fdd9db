// ==========================================================================
// Microbenchmarks for the numeric kernels: dense matmul, batched LSTM
// forward, TT matvec against its densified equivalent, quantization, and
// truncated SVD.
// ==========================================================================

#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "rnnc/batch.hpp"
#include "rnnc/compress.hpp"
#include "rnnc/forward.hpp"
#include "rnnc/matrix.hpp"
#include "rnnc/model.hpp"
#include "rnnc/svd.hpp"
#include "rnnc/tt.hpp"
#include "rnnc/vocab.hpp"

namespace {

using namespace rnnc;

void fill_uniform(std::vector<double>& data, std::mt19937_64& rng) {
    for (double& x : data) {
        x = 2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0;
    }
}

DenseMatrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    DenseMatrix m(rows, cols);
    fill_uniform(m.data, rng);
    return m;
}

Vocabulary words_vocab(std::size_t n_words) {
    std::string text;
    for (std::size_t i = 0; i < n_words; ++i) text += "w" + std::to_string(i) + " ";
    text += "\n";
    return build_vocab(text, n_words + 2);
}

void BM_MatMul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(1);
    const DenseMatrix a = random_matrix(n, n, rng);
    const DenseMatrix b = random_matrix(n, n, rng);
    for (auto _ : state) {
        DenseMatrix c = matmul(a, b);
        benchmark::DoNotOptimize(c.data.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_MatMul)->Arg(64)->Arg(128)->Arg(256);

void BM_LstmForwardWindow(benchmark::State& state) {
    const auto hidden = static_cast<std::size_t>(state.range(0));
    ModelConfig config;
    config.kind = LayerKind::DenseLstm;
    config.layers = 2;
    config.hidden = hidden;
    config.embed_dim = hidden;
    config.unroll = 16;
    Vocabulary vocab = words_vocab(998);
    config.n_vocab = vocab.size();
    const LmModel model = build_model(config, std::move(vocab), 1);

    const std::size_t batch = 16;
    std::mt19937_64 rng(2);
    IntMatrix inputs(config.unroll, batch);
    for (auto& id : inputs.data) id = static_cast<std::int32_t>(rng() % config.n_vocab);
    const LmState init = zero_state(config, batch);

    for (auto _ : state) {
        ForwardResult out = forward(model, inputs, init);
        benchmark::DoNotOptimize(out.logits.data.data());
    }
    state.SetItemsProcessed(state.iterations() *
                            static_cast<std::int64_t>(config.unroll * batch));
}
BENCHMARK(BM_LstmForwardWindow)->Arg(64)->Arg(128)->Arg(200);

void BM_TtMatvec(benchmark::State& state) {
    const auto rank = static_cast<std::size_t>(state.range(0));
    const std::vector<std::size_t> modes = {8, 8, 4, 4};  // 1024 x 1024
    std::mt19937_64 rng(3);
    TTMatrix tt = tt_zeros(modes, modes, tt_bounded_ranks(modes, modes, {rank}));
    for (auto& core : tt.cores) fill_uniform(core, rng);

    std::vector<double> x(tt.cols());
    fill_uniform(x, rng);
    for (auto _ : state) {
        std::vector<double> y = tt_matvec(tt, x);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(tt_param_count(tt)));
}
BENCHMARK(BM_TtMatvec)->Arg(4)->Arg(16)->Arg(64);

void BM_DenseMatvecBaseline(benchmark::State& state) {
    // Densified counterpart of BM_TtMatvec's operator.
    const std::vector<std::size_t> modes = {8, 8, 4, 4};
    std::mt19937_64 rng(3);
    TTMatrix tt = tt_zeros(modes, modes, tt_bounded_ranks(modes, modes, {16}));
    for (auto& core : tt.cores) fill_uniform(core, rng);
    const DenseMatrix a = tt_to_dense(tt);

    std::vector<double> x(a.cols);
    fill_uniform(x, rng);
    std::vector<double> y(a.rows);
    for (auto _ : state) {
        std::fill(y.begin(), y.end(), 0.0);
        matvec_accum(a, x, y);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() *
                            static_cast<std::int64_t>(a.rows * a.cols));
}
BENCHMARK(BM_DenseMatvecBaseline);

void BM_Quantize(benchmark::State& state) {
    const auto len = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(4);
    std::vector<double> tensor(len);
    fill_uniform(tensor, rng);
    for (auto _ : state) {
        QuantizedTensor q = quantize(tensor);
        benchmark::DoNotOptimize(q.codes.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(len));
}
BENCHMARK(BM_Quantize)->Arg(1 << 16)->Arg(1 << 20);

void BM_Prune(benchmark::State& state) {
    const auto len = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(5);
    std::vector<double> tensor(len);
    fill_uniform(tensor, rng);
    for (auto _ : state) {
        auto [values, mask] = prune(tensor, 0.9);
        benchmark::DoNotOptimize(values.data());
        benchmark::DoNotOptimize(mask.mask.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(len));
}
BENCHMARK(BM_Prune)->Arg(1 << 16)->Arg(1 << 20);

void BM_TruncatedSvd(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(6);
    const DenseMatrix a = random_matrix(n, n, rng);
    for (auto _ : state) {
        SvdResult f = truncated_svd(a, 16);
        benchmark::DoNotOptimize(f.s.data());
    }
}
BENCHMARK(BM_TruncatedSvd)->Arg(64)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
