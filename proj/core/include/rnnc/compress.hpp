#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rnnc/model.hpp"
#include "rnnc/quantized_tensor.hpp"
#include "rnnc/vocab.hpp"

namespace rnnc {

// ============================================================
// Magnitude pruning
// ============================================================

struct PruneMask {
    std::vector<std::size_t> shape;
    std::vector<std::uint8_t> mask;  // 1 = kept, 0 = pruned
    double target_sparsity = 0.0;

    std::size_t zeros() const;
};

// Masks by parameter name, in the model's registry naming.
struct PruneSet {
    std::map<std::string, PruneMask> masks;
};

// Zeroes the floor(s * len) smallest-magnitude entries. Ties at the
// threshold keep earlier indices. The returned mask records shape {len};
// model-level callers overwrite it with the tensor's true shape.
std::pair<std::vector<double>, PruneMask> prune(std::span<const double> tensor, double sparsity);

struct PruneSelection {
    bool embedding = false;
    bool recurrent = false;
    bool output = false;
};

// In-place per-tensor pruning of the selected parameter groups; biases are
// never pruned. Returns the masks for retraining.
PruneSet prune_model(LmModel& model, double sparsity, PruneSelection selection);

void apply_masks(LmModel& model, const PruneSet& masks);

// ============================================================
// 8-bit quantization
// ============================================================

QuantizedTensor quantize(std::span<const double> tensor);

std::vector<double> dequantize(const QuantizedTensor& q);

// Quantizes every non-bias tensor in place: the 8-bit payloads are kept on
// the model for bit-exact storage and the dense tensors are replaced by
// their dequantized values, which is what inference then uses.
void quantize_model(LmModel& model);

// ============================================================
// Low-rank factorization
// ============================================================

// SVD initialization of a rank-r shared-projection model from a trained
// dense LSTM. Each layer's recurrent factors come from a truncated SVD of
// its four stacked gate matrices; the right factor becomes the layer's
// shared projection, and the consumers upstream (next layer's input
// factors, or the softmax head) absorb its transpose, so the sharing
// constraint holds by construction. Intended to be followed by finetuning.
LmModel lowrank_factorize(const LmModel& dense, std::size_t r);

// ============================================================
// TT conversion
// ============================================================

// Converts a dense LSTM's gate matrices to TT form, dims-way modes from
// factorize_modes. Exactly one of max_ranks / epsilon picks the
// truncation rule. Embedding and softmax head stay dense.
LmModel tt_compress(const LmModel& dense, std::size_t dims,
                    const std::vector<std::size_t>& max_ranks, std::optional<double> epsilon);

// ============================================================
// Reporting
// ============================================================

// Parameters that survive as nonzero weights, which is what a sparse
// model's parameter count means. Dense models almost surely match
// count_params.
std::size_t nonzero_params(const LmModel& model);

struct CompressionReport {
    std::size_t before_params = 0;
    std::size_t after_params = 0;
    std::size_t before_bytes = 0;
    std::size_t after_bytes = 0;
    double ratio = 0.0;
    double before_pp = 0.0;
    double after_pp = 0.0;
};

// Perplexities are computed with identical batching for both models. Byte
// sizes use each model's natural storage precision (8-bit when the model
// carries quantized payloads).
CompressionReport compression_report(const LmModel& before, const LmModel& after,
                                     const TokenStream& eval, std::size_t batch_size,
                                     std::size_t seq_len);

std::string format_report_text(const CompressionReport& report);
std::string format_report_json(const CompressionReport& report);

}  // namespace rnnc
