#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rnnc/matrix.hpp"
#include "rnnc/quantized_tensor.hpp"
#include "rnnc/tt.hpp"
#include "rnnc/vocab.hpp"

namespace rnnc {

// ============================================================
// Model structure
// ============================================================

enum class LayerKind { DenseRnn, DenseLstm, LowRankLstm, TtLstm };

const char* layer_kind_name(LayerKind kind);
LayerKind layer_kind_from_name(const std::string& name);

struct ModelConfig {
    std::size_t layers = 2;    // L
    std::size_t hidden = 200;  // k, per-layer width
    std::size_t embed_dim = 200;
    std::size_t n_vocab = 0;  // 0 = take the vocabulary's size
    LayerKind kind = LayerKind::DenseLstm;
    std::size_t rank = 128;             // r, low-rank projection width
    std::size_t tt_dims = 4;            // d
    std::vector<std::size_t> tt_ranks;  // rank caps, broadcast when size 1
    std::size_t unroll = 20;            // N, default BPTT window
};

void validate_config(const ModelConfig& config);

// Gate order is pinned to i, f, c, o everywhere: storage, registry names,
// and the training loop all index gates this way.
inline constexpr std::size_t kNumGates = 4;
inline constexpr std::array<const char*, kNumGates> kGateNames = {"i", "f", "c", "o"};

struct DenseRnnLayer {
    DenseMatrix w;          // k x in
    DenseMatrix v;          // k x k
    std::vector<double> b;  // k
};

struct DenseLstmLayer {
    std::array<DenseMatrix, kNumGates> w;  // k x in
    std::array<DenseMatrix, kNumGates> v;  // k x k
    std::array<std::vector<double>, kNumGates> b;
};

// All inputs and recurrent signals arrive pre-projected to width r; the
// layer's own u_b produces the projection consumed both by its recurrence
// at the next step and by the layer above, which is what makes the shared
// projection constraint structural rather than a numeric coincidence.
struct LowRankLstmLayer {
    std::array<DenseMatrix, kNumGates> wa;  // k x r, input factors
    std::array<DenseMatrix, kNumGates> ua;  // k x r, recurrent factors
    DenseMatrix ub;                         // r x k, shared projection
    std::array<std::vector<double>, kNumGates> b;
};

struct TtLstmLayer {
    std::array<TTMatrix, kNumGates> w;  // k x in, TT form
    std::array<TTMatrix, kNumGates> v;  // k x k, TT form
    std::array<std::vector<double>, kNumGates> b;
};

struct LmModel {
    LmModel() = default;
    LmModel(ModelConfig c, Vocabulary v) : config(std::move(c)), vocab(std::move(v)) {}

    ModelConfig config;
    Vocabulary vocab;

    DenseMatrix embedding;  // n_vocab x embed width (r for low-rank)
    std::vector<DenseRnnLayer> rnn_layers;
    std::vector<DenseLstmLayer> lstm_layers;
    std::vector<LowRankLstmLayer> lowrank_layers;
    std::vector<TtLstmLayer> tt_layers;
    DenseMatrix softmax_w;  // n_vocab x top width
    std::vector<double> softmax_b;

    // Original 8-bit payloads by parameter name, kept so quantized models
    // round-trip through storage bit for bit. The dense tensors above hold
    // the dequantized values actually used at inference.
    std::map<std::string, QuantizedTensor> quantized;

    // Width of the input consumed by layer `l`.
    std::size_t layer_input_width(std::size_t l) const;
    // Width of the vector handed to the softmax head.
    std::size_t top_width() const;

    // Low-rank shared-projection accessor: the projection feeding layer
    // l's input is owned by layer l-1 (the embedding plays that role for
    // layer 0, so the accessor starts at 1). Identity of the returned
    // pointer with &lowrank_layers[l-1].ub is the structural constraint.
    const DenseMatrix* shared_input_projection(std::size_t l) const;
};

// Zero-initialized model of the right shape (storage fills it on load).
LmModel make_model(const ModelConfig& config, Vocabulary vocab);

// Uniform [-0.08, 0.08] initialization, reproducible for a given seed.
LmModel build_model(const ModelConfig& config, Vocabulary vocab, std::uint64_t seed);

// ============================================================
// Parameter registry
// ============================================================

enum class ParamGroup { Embedding, Recurrent, Output, Bias };

struct ParamRef {
    std::string name;
    double* data;
    std::size_t size;
    std::vector<std::size_t> shape;
    ParamGroup group;
};

// Every trainable tensor in a stable, documented order: embedding, layers
// bottom-up (matrices before biases), softmax weight, softmax bias. The
// optimizer, serializer, and compression passes all key off this order.
std::vector<ParamRef> param_refs(LmModel& model);
std::vector<ParamRef> param_refs(const LmModel& model);

std::size_t count_params(const LmModel& model);

// Shape arithmetic only; nothing is allocated. Used where instantiating
// the configuration would be wasteful (multi-hundred-MB models).
std::size_t count_params(const ModelConfig& config);

enum class StoragePrecision { Float32, Quant8 };

// Bytes of tensor payloads plus per-tensor headers at the given storage
// precision. Quant8 keeps biases in 32-bit floats and charges each
// quantized tensor its 8-byte min/scale pair.
std::size_t model_size_bytes(const LmModel& model, StoragePrecision precision);
std::size_t model_size_bytes(const ModelConfig& config, StoragePrecision precision);

}  // namespace rnnc
