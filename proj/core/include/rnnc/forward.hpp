#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rnnc/batch.hpp"
#include "rnnc/model.hpp"

namespace rnnc {

// ============================================================
// Inference
// ============================================================

// Recurrent state for a batch of lanes. h and c are B x k per layer; m is
// B x r per layer and used only by low-rank models (the projected hidden
// state that feeds the next step's gates).
struct LmState {
    std::vector<DenseMatrix> h;
    std::vector<DenseMatrix> c;
    std::vector<DenseMatrix> m;
};

LmState zero_state(const ModelConfig& config, std::size_t batch_size);

// --- single-lane cells -------------------------------------------------

void rnn_cell_forward(const DenseRnnLayer& layer, std::span<const double> input,
                      std::span<const double> h_prev, std::span<double> h_out);

// Writes the new hidden into h_out and updates cell in place.
void lstm_cell_forward(const DenseLstmLayer& layer, std::span<const double> input,
                       std::span<const double> h_prev, std::span<double> cell,
                       std::span<double> h_out);

// input and m_prev have width r; emits both the hidden state and the
// projected m_out = ub * h that the next layer and next step consume.
void lowrank_cell_forward(const LowRankLstmLayer& layer, std::span<const double> input,
                          std::span<const double> m_prev, std::span<double> cell,
                          std::span<double> h_out, std::span<double> m_out);

void tt_cell_forward(const TtLstmLayer& layer, std::span<const double> input,
                     std::span<const double> h_prev, std::span<double> cell,
                     std::span<double> h_out);

// --- batched unrolled forward ------------------------------------------

// Per-step, per-layer activations retained for backpropagation.
struct LayerStepCache {
    DenseMatrix x_in;                            // B x in
    DenseMatrix h_prev, c_prev;                  // B x k
    std::array<DenseMatrix, kNumGates> gate;     // B x k, post-nonlinearity
    DenseMatrix c_new, tanh_c;                   // B x k
    DenseMatrix h_new;                           // B x k
    DenseMatrix m_prev, m_new;                   // B x r, low-rank only
};

struct ForwardCache {
    // steps[t][l]
    std::vector<std::vector<LayerStepCache>> steps;
    // top[t]: B x top_width feature rows handed to the softmax head
    std::vector<DenseMatrix> top;
};

struct ForwardResult {
    // Row t * B + b holds the logits for lane b at step t.
    DenseMatrix logits;
    LmState state;
};

// inputs is seq_len x batch (a Batch's input matrix). Threading the
// returned state into the next call continues the sequence exactly.
ForwardResult forward(const LmModel& model, const IntMatrix& inputs, const LmState& init);
ForwardResult forward_cached(const LmModel& model, const IntMatrix& inputs, const LmState& init,
                             ForwardCache& cache);

// --- scoring ------------------------------------------------------------

// log softmax(logits)[index], computed stably.
double log_softmax_at(std::span<const double> logits, std::size_t index);
void softmax_inplace(std::span<double> logits);

// Log probability of the whole sequence under the chain rule, starting
// from zero state with the end-of-sentence token as bootstrap context, so
// a T-token sequence contributes exactly T factors.
double sequence_log_prob(const LmModel& model, const TokenStream& tokens);

// exp(mean cross-entropy) over every target batchify yields for (B, N),
// with state carried across windows.
double perplexity(const LmModel& model, const TokenStream& stream, std::size_t batch_size,
                  std::size_t seq_len);

}  // namespace rnnc
