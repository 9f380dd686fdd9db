#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rnnc/batch.hpp"
#include "rnnc/compress.hpp"
#include "rnnc/forward.hpp"
#include "rnnc/model.hpp"

namespace rnnc {

// ============================================================
// Truncated-BPTT training with Adam
// ============================================================

struct TrainConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 5.0;
    std::size_t batch_size = 16;
    std::size_t unroll = 20;
    std::size_t epochs = 10;
    std::uint64_t seed = 1;
};

void validate_train_config(const TrainConfig& config);

// One flat gradient buffer per registry entry, same order as param_refs.
struct GradientSet {
    std::vector<std::vector<double>> grads;

    void zero();
};

GradientSet make_gradient_set(const std::vector<ParamRef>& refs);

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t t = 0;
};

AdamState make_adam_state(const std::vector<ParamRef>& refs);

// Mean negative log-likelihood over every (step, lane) cell. logits rows
// are indexed t * B + lane, matching forward().
double cross_entropy_loss(const DenseMatrix& logits, const IntMatrix& targets);

struct BpttResult {
    double loss = 0.0;
    LmState state;  // final state, for threading into the next window
};

// Exact reverse-mode gradients of cross_entropy_loss over the window.
// Gradients are accumulated into `grads` (zeroed first); the initial state
// is treated as constant, which is where truncation cuts the graph.
BpttResult bptt_gradients(const LmModel& model, const Batch& batch, const LmState& init,
                          GradientSet& grads);

// Global-norm clipping followed by the bias-corrected Adam update.
void adam_step(std::vector<ParamRef>& params, const GradientSet& grads, AdamState& state,
               const TrainConfig& config);

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_pp = 0.0;
    double valid_pp = 0.0;
    double seconds = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    double initial_loss = 0.0;
};

// One `epoch=<i> train_pp=<v> valid_pp=<v> seconds=<v>` line per epoch.
std::string format_report(const TrainReport& report);

// Trains in place. With a mask set, masked weights stay exactly zero after
// every update. Throws DivergenceError when the epoch loss exceeds three
// times the initial loss for three consecutive epochs. on_epoch, when set,
// runs after each epoch's record is complete.
TrainReport train(LmModel& model, const TokenStream& corpus, const TokenStream& valid,
                  const TrainConfig& config, const PruneSet* masks = nullptr,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
};

// Central finite differences over every parameter coordinate; restricted
// to tiny models so the sweep stays tractable. The relative error divides
// by max(|analytic|, |numeric|, 1e-4), the floor screening difference-quotient
// roundoff on coordinates whose true gradient is near zero.
GradCheckReport grad_check(LmModel& model, const Batch& batch, double h = 1e-5);

// ============================================================
// TT grid-search driver
// ============================================================

struct TTGridPoint {
    std::size_t dims = 0;
    std::size_t rank = 0;
    std::size_t params = 0;
    double valid_pp = 0.0;
};

// Trains one fresh TT model per (dims, rank) combination and reports the
// resulting size/quality pairs, smallest perplexity first.
std::vector<TTGridPoint> tt_grid_search(const ModelConfig& base, const Vocabulary& vocab,
                                        const TokenStream& corpus, const TokenStream& valid,
                                        const TrainConfig& tc,
                                        const std::vector<std::size_t>& dims_list,
                                        const std::vector<std::size_t>& rank_list);

}  // namespace rnnc
