#include "rnnc/compress.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "nlohmann/json.hpp"
#include "rnnc/errors.hpp"
#include "rnnc/forward.hpp"
#include "rnnc/svd.hpp"

namespace rnnc {

std::size_t PruneMask::zeros() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{0}));
}

std::pair<std::vector<double>, PruneMask> prune(std::span<const double> tensor, double sparsity) {
    if (!(sparsity > 0.0 && sparsity < 1.0)) {
        throw ArgumentError("sparsity must lie strictly between 0 and 1, got " +
                            std::to_string(sparsity));
    }
    const std::size_t n = tensor.size();
    const std::size_t kill = static_cast<std::size_t>(sparsity * static_cast<double>(n));

    // Sorting by (|w|, index descending) makes the first `kill` entries the
    // smallest magnitudes with later indices pruned first on ties, so the
    // survivors of a tie are the earlier positions.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double ma = std::abs(tensor[a]);
        const double mb = std::abs(tensor[b]);
        if (ma != mb) return ma < mb;
        return a > b;
    });

    std::vector<double> pruned(tensor.begin(), tensor.end());
    PruneMask mask;
    mask.shape = {n};
    mask.mask.assign(n, 1);
    mask.target_sparsity = sparsity;
    for (std::size_t i = 0; i < kill; ++i) {
        pruned[order[i]] = 0.0;
        mask.mask[order[i]] = 0;
    }
    return {std::move(pruned), std::move(mask)};
}

namespace {

bool selected(ParamGroup group, const PruneSelection& sel) {
    switch (group) {
        case ParamGroup::Embedding: return sel.embedding;
        case ParamGroup::Recurrent: return sel.recurrent;
        case ParamGroup::Output: return sel.output;
        case ParamGroup::Bias: return false;
    }
    return false;
}

}  // namespace

PruneSet prune_model(LmModel& model, double sparsity, PruneSelection selection) {
    if (!selection.embedding && !selection.recurrent && !selection.output) {
        throw ArgumentError("pruning needs at least one of embedding/recurrent/output selected");
    }
    PruneSet set;
    for (ParamRef& ref : param_refs(model)) {
        if (!selected(ref.group, selection)) continue;
        auto [pruned, mask] = prune(std::span<const double>(ref.data, ref.size), sparsity);
        std::copy(pruned.begin(), pruned.end(), ref.data);
        mask.shape = ref.shape;
        set.masks.emplace(ref.name, std::move(mask));
    }
    return set;
}

void apply_masks(LmModel& model, const PruneSet& masks) {
    for (ParamRef& ref : param_refs(model)) {
        auto it = masks.masks.find(ref.name);
        if (it == masks.masks.end()) continue;
        if (it->second.mask.size() != ref.size) {
            throw CompatibilityError("mask for " + ref.name + " has " +
                                     std::to_string(it->second.mask.size()) +
                                     " entries but the tensor holds " + std::to_string(ref.size));
        }
        for (std::size_t i = 0; i < ref.size; ++i) {
            if (it->second.mask[i] == 0) ref.data[i] = 0.0;
        }
    }
}

QuantizedTensor quantize(std::span<const double> tensor) {
    if (!all_finite(tensor)) throw NumericError("cannot quantize non-finite values");
    if (tensor.empty()) throw ArgumentError("cannot quantize an empty tensor");
    const auto [lo_it, hi_it] = std::minmax_element(tensor.begin(), tensor.end());
    const double lo = *lo_it;
    const double hi = *hi_it;

    QuantizedTensor q;
    q.shape = {tensor.size()};
    q.min = static_cast<float>(lo);
    q.scale = static_cast<float>((hi - lo) / 255.0);
    q.codes.resize(tensor.size());
    if (q.scale == 0.0f) {
        std::fill(q.codes.begin(), q.codes.end(), std::uint8_t{0});
        return q;
    }
    const double minw = static_cast<double>(q.min);
    const double scalew = static_cast<double>(q.scale);
    for (std::size_t i = 0; i < tensor.size(); ++i) {
        const double code = std::round((tensor[i] - minw) / scalew);
        q.codes[i] = static_cast<std::uint8_t>(std::clamp(code, 0.0, 255.0));
    }
    return q;
}

std::vector<double> dequantize(const QuantizedTensor& q) {
    std::vector<double> out(q.codes.size());
    for (std::size_t i = 0; i < q.codes.size(); ++i) {
        const float v = q.min + static_cast<float>(q.codes[i]) * q.scale;
        out[i] = static_cast<double>(v);
    }
    return out;
}

void quantize_model(LmModel& model) {
    for (ParamRef& ref : param_refs(model)) {
        if (ref.group == ParamGroup::Bias) continue;
        QuantizedTensor q = quantize(std::span<const double>(ref.data, ref.size));
        q.shape = ref.shape;
        const std::vector<double> back = dequantize(q);
        std::copy(back.begin(), back.end(), ref.data);
        model.quantized[ref.name] = std::move(q);
    }
}

namespace {

// Stacks the four gate matrices on top of each other: (4k) x in.
DenseMatrix stack_gates(const std::array<DenseMatrix, kNumGates>& gates) {
    const std::size_t k = gates[0].rows;
    const std::size_t in = gates[0].cols;
    DenseMatrix out(kNumGates * k, in);
    for (std::size_t g = 0; g < kNumGates; ++g) {
        std::copy(gates[g].data.begin(), gates[g].data.end(),
                  out.data.begin() + g * k * in);
    }
    return out;
}

// Left factors U * diag(s), split back into the four gate blocks.
std::array<DenseMatrix, kNumGates> split_scaled_left(const SvdResult& svd, std::size_t k,
                                                     std::size_t r) {
    std::array<DenseMatrix, kNumGates> out;
    for (std::size_t g = 0; g < kNumGates; ++g) {
        out[g] = DenseMatrix(k, r);
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < r; ++j) {
                out[g](i, j) = svd.u(g * k + i, j) * svd.s[j];
            }
        }
    }
    return out;
}

}  // namespace

LmModel lowrank_factorize(const LmModel& dense, std::size_t r) {
    const ModelConfig& dc = dense.config;
    if (dc.kind != LayerKind::DenseLstm) {
        throw ArgumentError("low-rank factorization starts from a dense LSTM model");
    }
    if (r < 1 || r > dc.hidden) {
        throw RankError("low-rank width " + std::to_string(r) + " must lie in [1, " +
                        std::to_string(dc.hidden) + "]");
    }

    ModelConfig lc = dc;
    lc.kind = LayerKind::LowRankLstm;
    lc.rank = r;
    LmModel out = make_model(lc, dense.vocab);

    const std::size_t k = dc.hidden;

    // Recurrent side: one SVD of the stacked V gates per layer. Its right
    // factor is the layer's shared projection u_b; its scaled left blocks
    // are the recurrent factors.
    std::vector<DenseMatrix> ub(dc.layers);
    for (std::size_t l = 0; l < dc.layers; ++l) {
        const SvdResult svd = truncated_svd(stack_gates(dense.lstm_layers[l].v), r);
        ub[l] = transpose(svd.v);  // r x k
        out.lowrank_layers[l].ua = split_scaled_left(svd, k, r);
        out.lowrank_layers[l].ub = ub[l];
        out.lowrank_layers[l].b = dense.lstm_layers[l].b;
    }

    // Input side. Layer 0's projection comes from its own stacked W gates
    // and is folded into the embedding; layer l > 0 consumes the previous
    // layer's shared projection, so its input factors are W * u_b^T.
    {
        const SvdResult svd = truncated_svd(stack_gates(dense.lstm_layers[0].w), r);
        out.lowrank_layers[0].wa = split_scaled_left(svd, k, r);
        // embedding' = embedding * p^T where p = v^T is the input projection
        out.embedding = matmul(dense.embedding, svd.v);
    }
    for (std::size_t l = 1; l < dc.layers; ++l) {
        for (std::size_t g = 0; g < kNumGates; ++g) {
            out.lowrank_layers[l].wa[g] = matmul_nt(dense.lstm_layers[l].w[g], ub[l - 1]);
        }
    }

    // Softmax head consumes the top layer's projection.
    out.softmax_w = matmul_nt(dense.softmax_w, ub[dc.layers - 1]);
    out.softmax_b = dense.softmax_b;
    return out;
}

LmModel tt_compress(const LmModel& dense, std::size_t dims,
                    const std::vector<std::size_t>& max_ranks, std::optional<double> epsilon) {
    const ModelConfig& dc = dense.config;
    if (dc.kind != LayerKind::DenseLstm) {
        throw ArgumentError("TT conversion starts from a dense LSTM model");
    }
    if (dims < 2) throw ArgumentError("TT dimension count must be at least 2");
    if (max_ranks.empty() == !epsilon.has_value()) {
        throw ArgumentError("exactly one of max_ranks and epsilon must govern TT truncation");
    }

    ModelConfig tc = dc;
    tc.kind = LayerKind::TtLstm;
    tc.tt_dims = dims;
    tc.tt_ranks = max_ranks;

    LmModel out{tc, dense.vocab};
    out.embedding = dense.embedding;
    out.softmax_w = dense.softmax_w;
    out.softmax_b = dense.softmax_b;

    auto convert = [&](const DenseMatrix& m) {
        TTConfig config;
        config.row_modes = factorize_modes(m.rows, dims);
        config.col_modes = factorize_modes(m.cols, dims);
        config.max_ranks = max_ranks;
        config.epsilon = epsilon;
        return tt_from_dense(m, config);
    };

    out.tt_layers.resize(dc.layers);
    for (std::size_t l = 0; l < dc.layers; ++l) {
        for (std::size_t g = 0; g < kNumGates; ++g) {
            out.tt_layers[l].w[g] = convert(dense.lstm_layers[l].w[g]);
            out.tt_layers[l].v[g] = convert(dense.lstm_layers[l].v[g]);
        }
        out.tt_layers[l].b = dense.lstm_layers[l].b;
    }
    return out;
}

std::size_t nonzero_params(const LmModel& model) {
    std::size_t n = 0;
    for (const ParamRef& ref : param_refs(model)) {
        for (std::size_t j = 0; j < ref.size; ++j) n += ref.data[j] != 0.0;
    }
    return n;
}

CompressionReport compression_report(const LmModel& before, const LmModel& after,
                                     const TokenStream& eval, std::size_t batch_size,
                                     std::size_t seq_len) {
    if (before.vocab.tokens() != after.vocab.tokens()) {
        throw CompatibilityError("compression report needs both models on the same vocabulary");
    }
    CompressionReport rep;
    rep.before_params = nonzero_params(before);
    rep.after_params = nonzero_params(after);
    rep.before_bytes = model_size_bytes(
        before, before.quantized.empty() ? StoragePrecision::Float32 : StoragePrecision::Quant8);
    rep.after_bytes = model_size_bytes(
        after, after.quantized.empty() ? StoragePrecision::Float32 : StoragePrecision::Quant8);
    rep.ratio = static_cast<double>(rep.before_bytes) / static_cast<double>(rep.after_bytes);
    rep.before_pp = perplexity(before, eval, batch_size, seq_len);
    rep.after_pp = perplexity(after, eval, batch_size, seq_len);
    return rep;
}

std::string format_report_text(const CompressionReport& report) {
    std::ostringstream ss;
    ss << "before_params=" << report.before_params << '\n';
    ss << "after_params=" << report.after_params << '\n';
    ss << "before_bytes=" << report.before_bytes << '\n';
    ss << "after_bytes=" << report.after_bytes << '\n';
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", report.ratio);
    ss << "ratio=" << buf << '\n';
    std::snprintf(buf, sizeof(buf), "%.3f", report.before_pp);
    ss << "before_pp=" << buf << '\n';
    std::snprintf(buf, sizeof(buf), "%.3f", report.after_pp);
    ss << "after_pp=" << buf << '\n';
    return std::move(ss).str();
}

std::string format_report_json(const CompressionReport& report) {
    nlohmann::json j;
    j["before_params"] = report.before_params;
    j["after_params"] = report.after_params;
    j["before_bytes"] = report.before_bytes;
    j["after_bytes"] = report.after_bytes;
    j["ratio"] = report.ratio;
    j["before_pp"] = report.before_pp;
    j["after_pp"] = report.after_pp;
    return j.dump(2) + "\n";
}

}  // namespace rnnc
