#include "rnnc/forward.hpp"

#include <cmath>
#include <string>

#include "rnnc/errors.hpp"

namespace rnnc {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_width(std::span<const double> v, std::size_t want, const char* what) {
    if (v.size() != want) {
        throw ShapeError(std::string(what) + " has length " + std::to_string(v.size()) +
                         ", expected " + std::to_string(want));
    }
}

// pre[g] = w[g] x + u[g] h + b[g] for one lane, then the standard LSTM
// combine. Shared by the dense and low-rank single-lane cells.
void combine_gates(std::array<std::vector<double>, kNumGates>& pre, std::span<double> cell,
                   std::span<double> h_out) {
    const std::size_t k = h_out.size();
    for (std::size_t j = 0; j < k; ++j) {
        const double gi = sigmoid(pre[0][j]);
        const double gf = sigmoid(pre[1][j]);
        const double gc = std::tanh(pre[2][j]);
        const double go = sigmoid(pre[3][j]);
        cell[j] = gf * cell[j] + gi * gc;
        h_out[j] = go * std::tanh(cell[j]);
    }
}

}  // namespace

LmState zero_state(const ModelConfig& config, std::size_t batch_size) {
    LmState s;
    s.h.assign(config.layers, DenseMatrix(batch_size, config.hidden));
    s.c.assign(config.layers, DenseMatrix(batch_size, config.hidden));
    if (config.kind == LayerKind::LowRankLstm) {
        s.m.assign(config.layers, DenseMatrix(batch_size, config.rank));
    }
    return s;
}

void rnn_cell_forward(const DenseRnnLayer& layer, std::span<const double> input,
                      std::span<const double> h_prev, std::span<double> h_out) {
    check_width(input, layer.w.cols, "rnn input");
    check_width(h_prev, layer.v.cols, "rnn hidden state");
    check_width(h_out, layer.w.rows, "rnn output");
    std::vector<double> pre = layer.b;
    matvec_accum(layer.w, input, pre);
    matvec_accum(layer.v, h_prev, pre);
    for (std::size_t j = 0; j < pre.size(); ++j) h_out[j] = std::tanh(pre[j]);
}

void lstm_cell_forward(const DenseLstmLayer& layer, std::span<const double> input,
                       std::span<const double> h_prev, std::span<double> cell,
                       std::span<double> h_out) {
    const std::size_t k = layer.w[0].rows;
    check_width(input, layer.w[0].cols, "lstm input");
    check_width(h_prev, k, "lstm hidden state");
    check_width(cell, k, "lstm cell state");
    check_width(h_out, k, "lstm output");
    std::array<std::vector<double>, kNumGates> pre;
    for (std::size_t g = 0; g < kNumGates; ++g) {
        pre[g] = layer.b[g];
        matvec_accum(layer.w[g], input, pre[g]);
        matvec_accum(layer.v[g], h_prev, pre[g]);
    }
    combine_gates(pre, cell, h_out);
}

void lowrank_cell_forward(const LowRankLstmLayer& layer, std::span<const double> input,
                          std::span<const double> m_prev, std::span<double> cell,
                          std::span<double> h_out, std::span<double> m_out) {
    const std::size_t k = layer.wa[0].rows;
    const std::size_t r = layer.ub.rows;
    check_width(input, r, "low-rank projected input");
    check_width(m_prev, r, "low-rank projected state");
    check_width(cell, k, "low-rank cell state");
    check_width(h_out, k, "low-rank output");
    check_width(m_out, r, "low-rank projected output");
    std::array<std::vector<double>, kNumGates> pre;
    for (std::size_t g = 0; g < kNumGates; ++g) {
        pre[g] = layer.b[g];
        matvec_accum(layer.wa[g], input, pre[g]);
        matvec_accum(layer.ua[g], m_prev, pre[g]);
    }
    combine_gates(pre, cell, h_out);
    std::fill(m_out.begin(), m_out.end(), 0.0);
    matvec_accum(layer.ub, h_out, m_out);
}

void tt_cell_forward(const TtLstmLayer& layer, std::span<const double> input,
                     std::span<const double> h_prev, std::span<double> cell,
                     std::span<double> h_out) {
    const std::size_t k = layer.w[0].rows();
    check_width(input, layer.w[0].cols(), "tt-lstm input");
    check_width(h_prev, k, "tt-lstm hidden state");
    check_width(cell, k, "tt-lstm cell state");
    check_width(h_out, k, "tt-lstm output");
    std::array<std::vector<double>, kNumGates> pre;
    for (std::size_t g = 0; g < kNumGates; ++g) {
        pre[g] = layer.b[g];
        const std::vector<double> wx = tt_matvec(layer.w[g], input);
        const std::vector<double> vh = tt_matvec(layer.v[g], h_prev);
        for (std::size_t j = 0; j < k; ++j) pre[g][j] += wx[j] + vh[j];
    }
    combine_gates(pre, cell, h_out);
}

namespace {

void add_bias_rows(DenseMatrix& m, const std::vector<double>& b) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        double* row = m.data.data() + i * m.cols;
        for (std::size_t j = 0; j < m.cols; ++j) row[j] += b[j];
    }
}

void accum_into(DenseMatrix& dst, const DenseMatrix& src) {
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

// One batched step of one layer; fills the cache entry and leaves the new
// hidden (and projection) in it.
void step_layer(const LmModel& model, std::size_t l, const DenseMatrix& x_in, const LmState& prev,
                LayerStepCache& cache) {
    const std::size_t B = x_in.rows;
    const std::size_t k = model.config.hidden;
    cache.x_in = x_in;
    cache.h_prev = prev.h[l];
    switch (model.config.kind) {
        case LayerKind::DenseRnn: {
            const DenseRnnLayer& layer = model.rnn_layers[l];
            DenseMatrix pre = matmul_nt(x_in, layer.w);
            accum_into(pre, matmul_nt(prev.h[l], layer.v));
            add_bias_rows(pre, layer.b);
            cache.h_new = DenseMatrix(B, k);
            for (std::size_t i = 0; i < pre.data.size(); ++i) {
                cache.h_new.data[i] = std::tanh(pre.data[i]);
            }
            break;
        }
        case LayerKind::DenseLstm:
        case LayerKind::LowRankLstm:
        case LayerKind::TtLstm: {
            cache.c_prev = prev.c[l];
            std::array<DenseMatrix, kNumGates> pre;
            if (model.config.kind == LayerKind::DenseLstm) {
                const DenseLstmLayer& layer = model.lstm_layers[l];
                for (std::size_t g = 0; g < kNumGates; ++g) {
                    pre[g] = matmul_nt(x_in, layer.w[g]);
                    accum_into(pre[g], matmul_nt(prev.h[l], layer.v[g]));
                    add_bias_rows(pre[g], layer.b[g]);
                }
            } else if (model.config.kind == LayerKind::LowRankLstm) {
                const LowRankLstmLayer& layer = model.lowrank_layers[l];
                cache.m_prev = prev.m[l];
                for (std::size_t g = 0; g < kNumGates; ++g) {
                    pre[g] = matmul_nt(x_in, layer.wa[g]);
                    accum_into(pre[g], matmul_nt(prev.m[l], layer.ua[g]));
                    add_bias_rows(pre[g], layer.b[g]);
                }
            } else {
                const TtLstmLayer& layer = model.tt_layers[l];
                for (std::size_t g = 0; g < kNumGates; ++g) {
                    pre[g] = DenseMatrix(B, k);
                    for (std::size_t b = 0; b < B; ++b) {
                        const std::vector<double> wx = tt_matvec(layer.w[g], x_in.row(b));
                        const std::vector<double> vh = tt_matvec(layer.v[g], prev.h[l].row(b));
                        for (std::size_t j = 0; j < k; ++j) {
                            pre[g](b, j) = wx[j] + vh[j] + layer.b[g][j];
                        }
                    }
                }
            }
            for (std::size_t g = 0; g < kNumGates; ++g) cache.gate[g] = DenseMatrix(B, k);
            cache.c_new = DenseMatrix(B, k);
            cache.tanh_c = DenseMatrix(B, k);
            cache.h_new = DenseMatrix(B, k);
            for (std::size_t i = 0; i < B * k; ++i) {
                const double gi = sigmoid(pre[0].data[i]);
                const double gf = sigmoid(pre[1].data[i]);
                const double gc = std::tanh(pre[2].data[i]);
                const double go = sigmoid(pre[3].data[i]);
                cache.gate[0].data[i] = gi;
                cache.gate[1].data[i] = gf;
                cache.gate[2].data[i] = gc;
                cache.gate[3].data[i] = go;
                const double c = gf * cache.c_prev.data[i] + gi * gc;
                cache.c_new.data[i] = c;
                const double tc = std::tanh(c);
                cache.tanh_c.data[i] = tc;
                cache.h_new.data[i] = go * tc;
            }
            if (model.config.kind == LayerKind::LowRankLstm) {
                cache.m_new = matmul_nt(cache.h_new, model.lowrank_layers[l].ub);
            }
            break;
        }
    }
}

}  // namespace

ForwardResult forward_cached(const LmModel& model, const IntMatrix& inputs, const LmState& init,
                             ForwardCache& cache) {
    const ModelConfig& c = model.config;
    const std::size_t N = inputs.rows;
    const std::size_t B = inputs.cols;
    if (init.h.size() != c.layers || (init.h.size() > 0 && init.h[0].rows != B)) {
        throw ShapeError("initial state does not match layer count " + std::to_string(c.layers) +
                         " and batch size " + std::to_string(B));
    }

    cache.steps.assign(N, std::vector<LayerStepCache>(c.layers));
    cache.top.assign(N, DenseMatrix());

    ForwardResult out;
    out.logits = DenseMatrix(N * B, c.n_vocab);
    out.state = init;

    const std::size_t ew = model.embedding.cols;
    for (std::size_t t = 0; t < N; ++t) {
        DenseMatrix x(B, ew);
        for (std::size_t b = 0; b < B; ++b) {
            const std::int32_t id = inputs(t, b);
            if (id < 0 || static_cast<std::size_t>(id) >= c.n_vocab) {
                throw VocabError("token id " + std::to_string(id) +
                                 " outside vocabulary of size " + std::to_string(c.n_vocab));
            }
            const auto row = model.embedding.row(static_cast<std::size_t>(id));
            std::copy(row.begin(), row.end(), x.row(b).begin());
        }
        for (std::size_t l = 0; l < c.layers; ++l) {
            LayerStepCache& sc = cache.steps[t][l];
            step_layer(model, l, x, out.state, sc);
            out.state.h[l] = sc.h_new;
            if (c.kind != LayerKind::DenseRnn) out.state.c[l] = sc.c_new;
            if (c.kind == LayerKind::LowRankLstm) {
                out.state.m[l] = sc.m_new;
                x = sc.m_new;
            } else {
                x = sc.h_new;
            }
        }
        cache.top[t] = x;
        DenseMatrix logits_t = matmul_nt(x, model.softmax_w);
        add_bias_rows(logits_t, model.softmax_b);
        std::copy(logits_t.data.begin(), logits_t.data.end(),
                  out.logits.data.begin() + t * B * c.n_vocab);
    }
    return out;
}

ForwardResult forward(const LmModel& model, const IntMatrix& inputs, const LmState& init) {
    ForwardCache cache;
    return forward_cached(model, inputs, init, cache);
}

double log_softmax_at(std::span<const double> logits, std::size_t index) {
    if (index >= logits.size()) {
        throw IndexError("softmax index " + std::to_string(index) + " out of range " +
                         std::to_string(logits.size()));
    }
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - mx);
    return logits[index] - mx - std::log(sum);
}

void softmax_inplace(std::span<double> logits) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    for (double& v : logits) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : logits) v /= sum;
}

double sequence_log_prob(const LmModel& model, const TokenStream& tokens) {
    if (tokens.empty()) throw ArgumentError("cannot score an empty sequence");
    const ModelConfig& c = model.config;
    LmState state = zero_state(c, 1);
    IntMatrix step(1, 1);
    std::int32_t prev = model.vocab.eos_id();
    double total = 0.0;
    for (std::int32_t tok : tokens) {
        if (tok < 0 || static_cast<std::size_t>(tok) >= c.n_vocab) {
            throw VocabError("token id " + std::to_string(tok) + " outside vocabulary of size " +
                             std::to_string(c.n_vocab));
        }
        step(0, 0) = prev;
        ForwardResult fr = forward(model, step, state);
        total += log_softmax_at(fr.logits.row(0), static_cast<std::size_t>(tok));
        state = std::move(fr.state);
        prev = tok;
    }
    return total;
}

double perplexity(const LmModel& model, const TokenStream& stream, std::size_t batch_size,
                  std::size_t seq_len) {
    const BatchPlan plan = batchify(stream, batch_size, seq_len);
    LmState state = zero_state(model.config, batch_size);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < plan.num_batches(); ++i) {
        const Batch b = plan.batch(i);
        ForwardResult fr = forward(model, b.inputs, state);
        for (std::size_t t = 0; t < b.targets.rows; ++t) {
            for (std::size_t lane = 0; lane < b.targets.cols; ++lane) {
                total -= log_softmax_at(fr.logits.row(t * batch_size + lane),
                                        static_cast<std::size_t>(b.targets(t, lane)));
                ++count;
            }
        }
        state = std::move(fr.state);
    }
    return std::exp(total / static_cast<double>(count));
}

}  // namespace rnnc
