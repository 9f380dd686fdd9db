#include "rnnc/batch.hpp"

#include <string>

#include "rnnc/errors.hpp"

namespace rnnc {

BatchPlan::BatchPlan(TokenStream stream, std::size_t batch_size, std::size_t seq_len)
    : stream_(std::move(stream)), batch_size_(batch_size), seq_len_(seq_len) {
    if (batch_size_ == 0) throw ArgumentError("batch_size must be positive");
    if (seq_len_ == 0) throw ArgumentError("seq_len must be positive");
    stripe_len_ = stream_.size() / batch_size_;
    if (stripe_len_ < seq_len_ + 1) {
        const std::size_t needed = batch_size_ * (seq_len_ + 1);
        throw IngestionError("token stream of length " + std::to_string(stream_.size()) +
                             " is too short for batch_size " + std::to_string(batch_size_) +
                             " and seq_len " + std::to_string(seq_len_) + "; need at least " +
                             std::to_string(needed) + " tokens");
    }
    num_batches_ = (stripe_len_ - 1) / seq_len_;
}

Batch BatchPlan::batch(std::size_t index) const {
    if (index >= num_batches_) {
        throw IndexError("batch index " + std::to_string(index) + " out of range [0, " +
                         std::to_string(num_batches_) + ")");
    }
    Batch out;
    out.inputs = IntMatrix(seq_len_, batch_size_);
    out.targets = IntMatrix(seq_len_, batch_size_);
    const std::size_t base = index * seq_len_;
    for (std::size_t b = 0; b < batch_size_; ++b) {
        const std::size_t stripe = b * stripe_len_;
        for (std::size_t t = 0; t < seq_len_; ++t) {
            out.inputs(t, b) = stream_[stripe + base + t];
            out.targets(t, b) = stream_[stripe + base + t + 1];
        }
    }
    return out;
}

BatchPlan batchify(TokenStream stream, std::size_t batch_size, std::size_t seq_len) {
    return BatchPlan(std::move(stream), batch_size, seq_len);
}

}  // namespace rnnc
