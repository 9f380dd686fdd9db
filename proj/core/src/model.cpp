#include "rnnc/model.hpp"

#include <random>
#include <stdexcept>

#include "rnnc/errors.hpp"

namespace rnnc {

namespace {

// Bits-to-double mapping pinned so initialization is reproducible across
// standard libraries; std::uniform_real_distribution is not.
class UniformRng {
public:
    explicit UniformRng(std::uint64_t seed) : gen_(seed) {}

    double uniform(double lo, double hi) {
        const double u = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * u;
    }

private:
    std::mt19937_64 gen_;
};

std::size_t embed_width(const ModelConfig& c) {
    return c.kind == LayerKind::LowRankLstm ? c.rank : c.embed_dim;
}

std::size_t input_width(const ModelConfig& c, std::size_t l) {
    if (c.kind == LayerKind::LowRankLstm) return c.rank;
    return l == 0 ? c.embed_dim : c.hidden;
}

// Enumerates every tensor shape of a configuration in registry order,
// mirroring param_refs exactly. fn(shape, group).
template <typename Fn>
void for_each_tensor_shape(const ModelConfig& c, Fn&& fn) {
    using Shape = std::vector<std::size_t>;
    fn(Shape{c.n_vocab, embed_width(c)}, ParamGroup::Embedding);
    for (std::size_t l = 0; l < c.layers; ++l) {
        const std::size_t in = input_width(c, l);
        const std::size_t k = c.hidden;
        switch (c.kind) {
            case LayerKind::DenseRnn:
                fn(Shape{k, in}, ParamGroup::Recurrent);
                fn(Shape{k, k}, ParamGroup::Recurrent);
                fn(Shape{k}, ParamGroup::Bias);
                break;
            case LayerKind::DenseLstm:
                for (std::size_t g = 0; g < kNumGates; ++g) fn(Shape{k, in}, ParamGroup::Recurrent);
                for (std::size_t g = 0; g < kNumGates; ++g) fn(Shape{k, k}, ParamGroup::Recurrent);
                for (std::size_t g = 0; g < kNumGates; ++g) fn(Shape{k}, ParamGroup::Bias);
                break;
            case LayerKind::LowRankLstm:
                for (std::size_t g = 0; g < kNumGates; ++g) fn(Shape{k, c.rank}, ParamGroup::Recurrent);
                for (std::size_t g = 0; g < kNumGates; ++g) fn(Shape{k, c.rank}, ParamGroup::Recurrent);
                fn(Shape{c.rank, k}, ParamGroup::Recurrent);
                for (std::size_t g = 0; g < kNumGates; ++g) fn(Shape{k}, ParamGroup::Bias);
                break;
            case LayerKind::TtLstm: {
                const auto rm = factorize_modes(k, c.tt_dims);
                const auto cm_in = factorize_modes(in, c.tt_dims);
                const auto cm_k = factorize_modes(k, c.tt_dims);
                const auto ranks_w = tt_bounded_ranks(rm, cm_in, c.tt_ranks);
                const auto ranks_v = tt_bounded_ranks(rm, cm_k, c.tt_ranks);
                for (std::size_t g = 0; g < kNumGates; ++g) {
                    for (std::size_t d = 0; d < c.tt_dims; ++d) {
                        fn(Shape{rm[d] * cm_in[d], ranks_w[d], ranks_w[d + 1]}, ParamGroup::Recurrent);
                    }
                }
                for (std::size_t g = 0; g < kNumGates; ++g) {
                    for (std::size_t d = 0; d < c.tt_dims; ++d) {
                        fn(Shape{rm[d] * cm_k[d], ranks_v[d], ranks_v[d + 1]}, ParamGroup::Recurrent);
                    }
                }
                for (std::size_t g = 0; g < kNumGates; ++g) fn(Shape{k}, ParamGroup::Bias);
                break;
            }
        }
    }
    fn(Shape{c.n_vocab, c.kind == LayerKind::LowRankLstm ? c.rank : c.hidden}, ParamGroup::Output);
    fn(Shape{c.n_vocab}, ParamGroup::Bias);
}

std::size_t shape_size(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
}

std::size_t pad8(std::size_t n) { return (n + 7) & ~std::size_t{7}; }

// Header + payload bytes one tensor occupies in the store layout.
std::size_t tensor_bytes(const std::vector<std::size_t>& shape, ParamGroup group,
                         StoragePrecision precision) {
    const std::size_t header = 8 + 8 * shape.size();
    const std::size_t n = shape_size(shape);
    if (precision == StoragePrecision::Quant8 && group != ParamGroup::Bias) {
        return header + pad8(n + 8);
    }
    return header + pad8(4 * n);
}

}  // namespace

const char* layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::DenseRnn: return "dense-rnn";
        case LayerKind::DenseLstm: return "dense-lstm";
        case LayerKind::LowRankLstm: return "lowrank-lstm";
        case LayerKind::TtLstm: return "tt-lstm";
    }
    throw ArgumentError("unknown layer kind");
}

LayerKind layer_kind_from_name(const std::string& name) {
    if (name == "dense-rnn") return LayerKind::DenseRnn;
    if (name == "dense-lstm") return LayerKind::DenseLstm;
    if (name == "lowrank-lstm") return LayerKind::LowRankLstm;
    if (name == "tt-lstm") return LayerKind::TtLstm;
    throw ArgumentError("unknown layer kind: " + name);
}

void validate_config(const ModelConfig& config) {
    if (config.layers < 1) throw ArgumentError("layer count must be at least 1");
    if (config.hidden < 1) throw ArgumentError("hidden width must be at least 1");
    if (config.embed_dim < 1) throw ArgumentError("embedding width must be at least 1");
    if (config.unroll < 1) throw ArgumentError("unroll length must be at least 1");
    if (config.kind == LayerKind::LowRankLstm) {
        if (config.rank < 1 || config.rank > config.hidden) {
            throw RankError("low-rank width " + std::to_string(config.rank) +
                            " must lie in [1, " + std::to_string(config.hidden) + "]");
        }
    }
    if (config.kind == LayerKind::TtLstm) {
        if (config.tt_dims < 2) throw ArgumentError("TT dimension count must be at least 2");
    }
}

std::size_t LmModel::layer_input_width(std::size_t l) const { return input_width(config, l); }

std::size_t LmModel::top_width() const {
    return config.kind == LayerKind::LowRankLstm ? config.rank : config.hidden;
}

const DenseMatrix* LmModel::shared_input_projection(std::size_t l) const {
    if (config.kind != LayerKind::LowRankLstm || l == 0 || l >= config.layers) return nullptr;
    return &lowrank_layers[l - 1].ub;
}

LmModel make_model(const ModelConfig& config, Vocabulary vocab) {
    ModelConfig c = config;
    if (c.n_vocab == 0) c.n_vocab = vocab.size();
    validate_config(c);
    if (c.n_vocab != vocab.size()) {
        throw CompatibilityError("config expects vocabulary of " + std::to_string(c.n_vocab) +
                                 " tokens but the vocabulary holds " +
                                 std::to_string(vocab.size()));
    }
    if (c.kind == LayerKind::TtLstm && c.tt_ranks.empty()) {
        throw ArgumentError("tt-lstm construction needs rank caps in tt_ranks");
    }

    LmModel m{c, std::move(vocab)};
    m.embedding = DenseMatrix(c.n_vocab, embed_width(c));
    for (std::size_t l = 0; l < c.layers; ++l) {
        const std::size_t in = input_width(c, l);
        const std::size_t k = c.hidden;
        switch (c.kind) {
            case LayerKind::DenseRnn: {
                DenseRnnLayer layer;
                layer.w = DenseMatrix(k, in);
                layer.v = DenseMatrix(k, k);
                layer.b.assign(k, 0.0);
                m.rnn_layers.push_back(std::move(layer));
                break;
            }
            case LayerKind::DenseLstm: {
                DenseLstmLayer layer;
                for (std::size_t g = 0; g < kNumGates; ++g) {
                    layer.w[g] = DenseMatrix(k, in);
                    layer.v[g] = DenseMatrix(k, k);
                    layer.b[g].assign(k, 0.0);
                }
                m.lstm_layers.push_back(std::move(layer));
                break;
            }
            case LayerKind::LowRankLstm: {
                LowRankLstmLayer layer;
                for (std::size_t g = 0; g < kNumGates; ++g) {
                    layer.wa[g] = DenseMatrix(k, c.rank);
                    layer.ua[g] = DenseMatrix(k, c.rank);
                    layer.b[g].assign(k, 0.0);
                }
                layer.ub = DenseMatrix(c.rank, k);
                m.lowrank_layers.push_back(std::move(layer));
                break;
            }
            case LayerKind::TtLstm: {
                TtLstmLayer layer;
                const auto rm = factorize_modes(k, c.tt_dims);
                const auto cm_in = factorize_modes(in, c.tt_dims);
                const auto cm_k = factorize_modes(k, c.tt_dims);
                for (std::size_t g = 0; g < kNumGates; ++g) {
                    layer.w[g] = tt_zeros(rm, cm_in, tt_bounded_ranks(rm, cm_in, c.tt_ranks));
                    layer.v[g] = tt_zeros(rm, cm_k, tt_bounded_ranks(rm, cm_k, c.tt_ranks));
                    layer.b[g].assign(k, 0.0);
                }
                m.tt_layers.push_back(std::move(layer));
                break;
            }
        }
    }
    m.softmax_w = DenseMatrix(c.n_vocab, m.top_width());
    m.softmax_b.assign(c.n_vocab, 0.0);
    return m;
}

LmModel build_model(const ModelConfig& config, Vocabulary vocab, std::uint64_t seed) {
    LmModel m = make_model(config, std::move(vocab));
    UniformRng rng(seed);
    for (ParamRef& ref : param_refs(m)) {
        for (std::size_t i = 0; i < ref.size; ++i) ref.data[i] = rng.uniform(-0.08, 0.08);
    }
    return m;
}

std::vector<ParamRef> param_refs(LmModel& m) {
    std::vector<ParamRef> out;
    auto add_mat = [&](std::string name, DenseMatrix& mat, ParamGroup group) {
        out.push_back({std::move(name), mat.data.data(), mat.size(), {mat.rows, mat.cols}, group});
    };
    auto add_vec = [&](std::string name, std::vector<double>& v, ParamGroup group) {
        out.push_back({std::move(name), v.data(), v.size(), {v.size()}, group});
    };
    auto add_tt = [&](const std::string& base, TTMatrix& tt) {
        for (std::size_t d = 0; d < tt.dims(); ++d) {
            out.push_back({base + ".core" + std::to_string(d), tt.cores[d].data(),
                           tt.cores[d].size(),
                           {tt.row_modes[d] * tt.col_modes[d], tt.ranks[d], tt.ranks[d + 1]},
                           ParamGroup::Recurrent});
        }
    };

    add_mat("embedding", m.embedding, ParamGroup::Embedding);
    for (std::size_t l = 0; l < m.config.layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        switch (m.config.kind) {
            case LayerKind::DenseRnn:
                add_mat(p + "w", m.rnn_layers[l].w, ParamGroup::Recurrent);
                add_mat(p + "v", m.rnn_layers[l].v, ParamGroup::Recurrent);
                add_vec(p + "b", m.rnn_layers[l].b, ParamGroup::Bias);
                break;
            case LayerKind::DenseLstm:
                for (std::size_t g = 0; g < kNumGates; ++g) {
                    add_mat(p + "w_" + kGateNames[g], m.lstm_layers[l].w[g], ParamGroup::Recurrent);
                }
                for (std::size_t g = 0; g < kNumGates; ++g) {
                    add_mat(p + "v_" + kGateNames[g], m.lstm_layers[l].v[g], ParamGroup::Recurrent);
                }
                for (std::size_t g = 0; g < kNumGates; ++g) {
                    add_vec(p + "b_" + kGateNames[g], m.lstm_layers[l].b[g], ParamGroup::Bias);
                }
                break;
            case LayerKind::LowRankLstm:
                for (std::size_t g = 0; g < kNumGates; ++g) {
                    add_mat(p + "wa_" + kGateNames[g], m.lowrank_layers[l].wa[g],
                            ParamGroup::Recurrent);
                }
                for (std::size_t g = 0; g < kNumGates; ++g) {
                    add_mat(p + "ua_" + kGateNames[g], m.lowrank_layers[l].ua[g],
                            ParamGroup::Recurrent);
                }
                add_mat(p + "ub", m.lowrank_layers[l].ub, ParamGroup::Recurrent);
                for (std::size_t g = 0; g < kNumGates; ++g) {
                    add_vec(p + "b_" + kGateNames[g], m.lowrank_layers[l].b[g], ParamGroup::Bias);
                }
                break;
            case LayerKind::TtLstm:
                for (std::size_t g = 0; g < kNumGates; ++g) {
                    add_tt(p + "w_" + kGateNames[g], m.tt_layers[l].w[g]);
                }
                for (std::size_t g = 0; g < kNumGates; ++g) {
                    add_tt(p + "v_" + kGateNames[g], m.tt_layers[l].v[g]);
                }
                for (std::size_t g = 0; g < kNumGates; ++g) {
                    add_vec(p + "b_" + kGateNames[g], m.tt_layers[l].b[g], ParamGroup::Bias);
                }
                break;
        }
    }
    add_mat("softmax.w", m.softmax_w, ParamGroup::Output);
    add_vec("softmax.b", m.softmax_b, ParamGroup::Bias);
    return out;
}

std::vector<ParamRef> param_refs(const LmModel& m) {
    // Read-only use: callers receiving refs through this overload must not
    // write through them.
    return param_refs(const_cast<LmModel&>(m));
}

std::size_t count_params(const LmModel& model) {
    std::size_t total = 0;
    for (const ParamRef& ref : param_refs(model)) total += ref.size;
    return total;
}

std::size_t count_params(const ModelConfig& config) {
    validate_config(config);
    if (config.n_vocab == 0) throw ArgumentError("config arithmetic needs an explicit n_vocab");
    std::size_t total = 0;
    for_each_tensor_shape(config, [&](const std::vector<std::size_t>& shape, ParamGroup) {
        total += shape_size(shape);
    });
    return total;
}

std::size_t model_size_bytes(const LmModel& model, StoragePrecision precision) {
    std::size_t total = 0;
    for (const ParamRef& ref : param_refs(model)) {
        total += tensor_bytes(ref.shape, ref.group, precision);
    }
    return total;
}

std::size_t model_size_bytes(const ModelConfig& config, StoragePrecision precision) {
    validate_config(config);
    if (config.n_vocab == 0) throw ArgumentError("config arithmetic needs an explicit n_vocab");
    std::size_t total = 0;
    for_each_tensor_shape(config, [&](const std::vector<std::size_t>& shape, ParamGroup group) {
        total += tensor_bytes(shape, group, precision);
    });
    return total;
}

}  // namespace rnnc
