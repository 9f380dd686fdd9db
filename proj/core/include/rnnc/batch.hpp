#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

#include "rnnc/vocab.hpp"

namespace rnnc {

// ============================================================
// Batched token views for truncated-BPTT training
// ============================================================

// Row-major matrix of token ids, rows = timesteps, cols = batch lanes.
struct IntMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::int32_t> data;

    IntMatrix() = default;
    IntMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0) {}

    std::int32_t& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    std::int32_t operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

// One BPTT window: inputs[t][b] is consumed at step t, targets[t][b] is the
// token the model should predict from it (the next token in lane b's stripe).
struct Batch {
    IntMatrix inputs;
    IntMatrix targets;
};

// A token stream cut into batch_size parallel stripes and sliced into
// windows of seq_len steps. Lane b of window i continues lane b of window
// i-1, so recurrent state can be carried across batches within an epoch.
class BatchPlan {
public:
    BatchPlan(TokenStream stream, std::size_t batch_size, std::size_t seq_len);

    std::size_t batch_size() const { return batch_size_; }
    std::size_t seq_len() const { return seq_len_; }
    std::size_t stripe_len() const { return stripe_len_; }
    std::size_t num_batches() const { return num_batches_; }
    std::size_t tokens_per_batch() const { return seq_len_ * batch_size_; }

    Batch batch(std::size_t index) const;

private:
    TokenStream stream_;
    std::size_t batch_size_;
    std::size_t seq_len_;
    std::size_t stripe_len_;
    std::size_t num_batches_;
};

BatchPlan batchify(TokenStream stream, std::size_t batch_size, std::size_t seq_len);

}  // namespace rnnc
