#include "rnnc/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "rnnc/errors.hpp"

namespace rnnc {

void validate_train_config(const TrainConfig& config) {
    if (!(config.lr >= 0.0)) throw ArgumentError("learning rate must not be negative");
    if (!(config.beta1 > 0.0 && config.beta1 < 1.0)) throw ArgumentError("beta1 must lie in (0,1)");
    if (!(config.beta2 > 0.0 && config.beta2 < 1.0)) throw ArgumentError("beta2 must lie in (0,1)");
    if (!(config.eps > 0.0)) throw ArgumentError("Adam epsilon must be positive");
    if (!(config.clip_norm > 0.0)) throw ArgumentError("clip norm must be positive");
    if (config.batch_size == 0) throw ArgumentError("batch size must be positive");
    if (config.unroll == 0) throw ArgumentError("unroll length must be positive");
    // epochs == 0 is legal: the loop body never runs, which saves a freshly
    // initialized (untrained) model.
}

void GradientSet::zero() {
    for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0);
}

GradientSet make_gradient_set(const std::vector<ParamRef>& refs) {
    GradientSet set;
    set.grads.reserve(refs.size());
    for (const ParamRef& ref : refs) set.grads.emplace_back(ref.size, 0.0);
    return set;
}

AdamState make_adam_state(const std::vector<ParamRef>& refs) {
    AdamState state;
    state.m.reserve(refs.size());
    state.v.reserve(refs.size());
    for (const ParamRef& ref : refs) {
        state.m.emplace_back(ref.size, 0.0);
        state.v.emplace_back(ref.size, 0.0);
    }
    return state;
}

double cross_entropy_loss(const DenseMatrix& logits, const IntMatrix& targets) {
    const std::size_t cells = targets.rows * targets.cols;
    if (logits.rows != cells) {
        throw ShapeError("logit rows " + std::to_string(logits.rows) + " do not match " +
                         std::to_string(cells) + " targets");
    }
    double total = 0.0;
    for (std::size_t t = 0; t < targets.rows; ++t) {
        for (std::size_t b = 0; b < targets.cols; ++b) {
            const std::size_t row = t * targets.cols + b;
            total -= log_softmax_at(logits.row(row), static_cast<std::size_t>(targets(t, b)));
        }
    }
    return total / static_cast<double>(cells);
}

namespace {

// out (a.cols x b.cols, flat) += a^T b
void accum_tn_into(double* out, const DenseMatrix& a, const DenseMatrix& b) {
    for (std::size_t r = 0; r < a.rows; ++r) {
        const double* arow = a.data.data() + r * a.cols;
        const double* brow = b.data.data() + r * b.cols;
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* orow = out + i * b.cols;
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
        }
    }
}

// out (length a.cols) += column sums of a
void accum_colsum_into(double* out, const DenseMatrix& a) {
    for (std::size_t r = 0; r < a.rows; ++r) {
        const double* arow = a.data.data() + r * a.cols;
        for (std::size_t j = 0; j < a.cols; ++j) out[j] += arow[j];
    }
}

// dst += a b
void accum_mm_into(DenseMatrix& dst, const DenseMatrix& a, const DenseMatrix& b) {
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + i * a.cols;
        double* drow = dst.data.data() + i * dst.cols;
        for (std::size_t p = 0; p < a.cols; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b.data.data() + p * b.cols;
            for (std::size_t j = 0; j < b.cols; ++j) drow[j] += av * brow[j];
        }
    }
}

struct GradIndex {
    std::map<std::string, std::size_t> by_name;

    std::size_t at(const std::string& name) const {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw ArgumentError("no gradient slot for parameter " + name);
        return it->second;
    }
};

// The four post-nonlinearity gate derivative products for one LSTM-family
// layer step. Produces dpre[g] and the upstream pieces.
struct LstmBackOut {
    std::array<DenseMatrix, kNumGates> dpre;
    DenseMatrix dc_prev;
};

LstmBackOut lstm_cell_backward_core(const LayerStepCache& sc, const DenseMatrix& dh,
                                    const DenseMatrix& dc_carry) {
    const std::size_t n = sc.h_new.data.size();
    LstmBackOut out;
    for (std::size_t g = 0; g < kNumGates; ++g) {
        out.dpre[g] = DenseMatrix(sc.h_new.rows, sc.h_new.cols);
    }
    out.dc_prev = DenseMatrix(sc.h_new.rows, sc.h_new.cols);
    for (std::size_t i = 0; i < n; ++i) {
        const double gi = sc.gate[0].data[i];
        const double gf = sc.gate[1].data[i];
        const double gc = sc.gate[2].data[i];
        const double go = sc.gate[3].data[i];
        const double tc = sc.tanh_c.data[i];
        const double dhv = dh.data[i];
        const double dc = dhv * go * (1.0 - tc * tc) + dc_carry.data[i];
        const double di = dc * gc;
        const double df = dc * sc.c_prev.data[i];
        const double dg = dc * gi;
        const double dov = dhv * tc;
        out.dpre[0].data[i] = di * gi * (1.0 - gi);
        out.dpre[1].data[i] = df * gf * (1.0 - gf);
        out.dpre[2].data[i] = dg * (1.0 - gc * gc);
        out.dpre[3].data[i] = dov * go * (1.0 - go);
        out.dc_prev.data[i] = dc * gf;
    }
    return out;
}

}  // namespace

BpttResult bptt_gradients(const LmModel& model, const Batch& batch, const LmState& init,
                          GradientSet& grads) {
    const ModelConfig& c = model.config;
    const std::size_t N = batch.inputs.rows;
    const std::size_t B = batch.inputs.cols;
    const std::size_t L = c.layers;
    const std::size_t V = c.n_vocab;

    const std::vector<ParamRef> refs = param_refs(model);
    if (grads.grads.size() != refs.size()) {
        throw ShapeError("gradient set does not match the parameter registry");
    }
    grads.zero();
    GradIndex index;
    for (std::size_t i = 0; i < refs.size(); ++i) index.by_name.emplace(refs[i].name, i);

    ForwardCache cache;
    ForwardResult fr = forward_cached(model, batch.inputs, init, cache);

    // Per-cell loss and logit gradients, one step at a time.
    const double inv = 1.0 / static_cast<double>(N * B);
    double total = 0.0;
    double* g_sw = grads.grads[index.at("softmax.w")].data();
    double* g_sb = grads.grads[index.at("softmax.b")].data();
    std::vector<DenseMatrix> dtop(N);
    for (std::size_t t = 0; t < N; ++t) {
        DenseMatrix dl(B, V);
        for (std::size_t lane = 0; lane < B; ++lane) {
            const auto row = fr.logits.row(t * B + lane);
            const std::size_t target = static_cast<std::size_t>(batch.targets(t, lane));
            const double lp = log_softmax_at(row, target);
            if (!std::isfinite(lp)) {
                throw NumericError("non-finite loss at step " + std::to_string(t));
            }
            total -= lp;
            auto drow = dl.row(lane);
            std::copy(row.begin(), row.end(), drow.begin());
            softmax_inplace(drow);
            drow[target] -= 1.0;
            for (double& gv : drow) gv *= inv;
        }
        accum_tn_into(g_sw, dl, cache.top[t]);
        accum_colsum_into(g_sb, dl);
        dtop[t] = matmul(dl, model.softmax_w);
    }
    const double loss = total * inv;

    double* g_emb = grads.grads[index.at("embedding")].data();
    const std::size_t ew = model.embedding.cols;

    // Recurrent carries per layer.
    const bool lowrank = c.kind == LayerKind::LowRankLstm;
    std::vector<DenseMatrix> dh(L, DenseMatrix(B, c.hidden));
    std::vector<DenseMatrix> dc(L, DenseMatrix(B, c.hidden));
    std::vector<DenseMatrix> dm;
    if (lowrank) dm.assign(L, DenseMatrix(B, c.rank));

    // TT core gradient views, gathered once.
    std::vector<std::array<std::vector<std::span<double>>, kNumGates>> tt_w_spans(L), tt_v_spans(L);
    if (c.kind == LayerKind::TtLstm) {
        for (std::size_t l = 0; l < L; ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            for (std::size_t g = 0; g < kNumGates; ++g) {
                for (std::size_t d = 0; d < c.tt_dims; ++d) {
                    const std::string suffix = std::string(".core") + std::to_string(d);
                    auto& wg = grads.grads[index.at(p + "w_" + kGateNames[g] + suffix)];
                    auto& vg = grads.grads[index.at(p + "v_" + kGateNames[g] + suffix)];
                    tt_w_spans[l][g].emplace_back(wg.data(), wg.size());
                    tt_v_spans[l][g].emplace_back(vg.data(), vg.size());
                }
            }
        }
    }

    for (std::size_t t = N; t-- > 0;) {
        if (lowrank) {
            for (std::size_t i = 0; i < dtop[t].data.size(); ++i) {
                dm[L - 1].data[i] += dtop[t].data[i];
            }
        } else {
            for (std::size_t i = 0; i < dtop[t].data.size(); ++i) {
                dh[L - 1].data[i] += dtop[t].data[i];
            }
        }
        for (std::size_t l = L; l-- > 0;) {
            const LayerStepCache& sc = cache.steps[t][l];
            const std::string p = "layer" + std::to_string(l) + ".";
            DenseMatrix dx(B, sc.x_in.cols);
            switch (c.kind) {
                case LayerKind::DenseRnn: {
                    const DenseRnnLayer& layer = model.rnn_layers[l];
                    DenseMatrix dpre(B, c.hidden);
                    for (std::size_t i = 0; i < dpre.data.size(); ++i) {
                        const double hv = sc.h_new.data[i];
                        dpre.data[i] = dh[l].data[i] * (1.0 - hv * hv);
                    }
                    accum_tn_into(grads.grads[index.at(p + "w")].data(), dpre, sc.x_in);
                    accum_tn_into(grads.grads[index.at(p + "v")].data(), dpre, sc.h_prev);
                    accum_colsum_into(grads.grads[index.at(p + "b")].data(), dpre);
                    accum_mm_into(dx, dpre, layer.w);
                    dh[l] = DenseMatrix(B, c.hidden);
                    accum_mm_into(dh[l], dpre, layer.v);
                    break;
                }
                case LayerKind::DenseLstm: {
                    const DenseLstmLayer& layer = model.lstm_layers[l];
                    LstmBackOut back = lstm_cell_backward_core(sc, dh[l], dc[l]);
                    dh[l] = DenseMatrix(B, c.hidden);
                    for (std::size_t g = 0; g < kNumGates; ++g) {
                        accum_tn_into(grads.grads[index.at(p + "w_" + kGateNames[g])].data(),
                                      back.dpre[g], sc.x_in);
                        accum_tn_into(grads.grads[index.at(p + "v_" + kGateNames[g])].data(),
                                      back.dpre[g], sc.h_prev);
                        accum_colsum_into(grads.grads[index.at(p + "b_" + kGateNames[g])].data(),
                                          back.dpre[g]);
                        accum_mm_into(dx, back.dpre[g], layer.w[g]);
                        accum_mm_into(dh[l], back.dpre[g], layer.v[g]);
                    }
                    dc[l] = std::move(back.dc_prev);
                    break;
                }
                case LayerKind::LowRankLstm: {
                    const LowRankLstmLayer& layer = model.lowrank_layers[l];
                    // h feeds the step only through m = h ub^T.
                    DenseMatrix dhh = matmul(dm[l], layer.ub);
                    accum_tn_into(grads.grads[index.at(p + "ub")].data(), dm[l], sc.h_new);
                    LstmBackOut back = lstm_cell_backward_core(sc, dhh, dc[l]);
                    dm[l] = DenseMatrix(B, c.rank);
                    for (std::size_t g = 0; g < kNumGates; ++g) {
                        accum_tn_into(grads.grads[index.at(p + "wa_" + kGateNames[g])].data(),
                                      back.dpre[g], sc.x_in);
                        accum_tn_into(grads.grads[index.at(p + "ua_" + kGateNames[g])].data(),
                                      back.dpre[g], sc.m_prev);
                        accum_colsum_into(grads.grads[index.at(p + "b_" + kGateNames[g])].data(),
                                          back.dpre[g]);
                        accum_mm_into(dx, back.dpre[g], layer.wa[g]);
                        accum_mm_into(dm[l], back.dpre[g], layer.ua[g]);
                    }
                    dc[l] = std::move(back.dc_prev);
                    break;
                }
                case LayerKind::TtLstm: {
                    const TtLstmLayer& layer = model.tt_layers[l];
                    LstmBackOut back = lstm_cell_backward_core(sc, dh[l], dc[l]);
                    dh[l] = DenseMatrix(B, c.hidden);
                    for (std::size_t g = 0; g < kNumGates; ++g) {
                        accum_colsum_into(grads.grads[index.at(p + "b_" + kGateNames[g])].data(),
                                          back.dpre[g]);
                        for (std::size_t lane = 0; lane < B; ++lane) {
                            const auto gy = back.dpre[g].row(lane);
                            const std::vector<double> dxi =
                                tt_matvec_backward(layer.w[g], sc.x_in.row(lane), gy,
                                                   tt_w_spans[l][g]);
                            for (std::size_t j = 0; j < dx.cols; ++j) dx(lane, j) += dxi[j];
                            const std::vector<double> dhi =
                                tt_matvec_backward(layer.v[g], sc.h_prev.row(lane), gy,
                                                   tt_v_spans[l][g]);
                            for (std::size_t j = 0; j < c.hidden; ++j) dh[l](lane, j) += dhi[j];
                        }
                    }
                    dc[l] = std::move(back.dc_prev);
                    break;
                }
            }
            if (l > 0) {
                if (lowrank) {
                    for (std::size_t i = 0; i < dx.data.size(); ++i) dm[l - 1].data[i] += dx.data[i];
                } else {
                    for (std::size_t i = 0; i < dx.data.size(); ++i) dh[l - 1].data[i] += dx.data[i];
                }
            } else {
                for (std::size_t lane = 0; lane < B; ++lane) {
                    const std::size_t id = static_cast<std::size_t>(batch.inputs(t, lane));
                    double* erow = g_emb + id * ew;
                    for (std::size_t j = 0; j < ew; ++j) erow[j] += dx(lane, j);
                }
            }
        }
    }

    BpttResult out;
    out.loss = loss;
    out.state = std::move(fr.state);
    return out;
}

void adam_step(std::vector<ParamRef>& params, const GradientSet& grads, AdamState& state,
               const TrainConfig& config) {
    if (params.size() != grads.grads.size() || params.size() != state.m.size()) {
        throw ShapeError("optimizer state does not match the parameter registry");
    }
    double sq = 0.0;
    for (const auto& g : grads.grads) {
        for (double v : g) sq += v * v;
    }
    const double norm = std::sqrt(sq);
    const double scale = norm > config.clip_norm ? config.clip_norm / norm : 1.0;

    state.t += 1;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        double* p = params[i].data;
        double* m = state.m[i].data();
        double* v = state.v[i].data();
        const double* g = grads.grads[i].data();
        for (std::size_t j = 0; j < params[i].size; ++j) {
            const double gj = g[j] * scale;
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * gj;
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * gj * gj;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
        }
    }
}

std::string format_report(const TrainReport& report) {
    std::ostringstream ss;
    char buf[160];
    for (const EpochRecord& rec : report.epochs) {
        std::snprintf(buf, sizeof(buf), "epoch=%zu train_pp=%.3f valid_pp=%.3f seconds=%.3f\n",
                      rec.epoch, rec.train_pp, rec.valid_pp, rec.seconds);
        ss << buf;
    }
    return std::move(ss).str();
}

TrainReport train(LmModel& model, const TokenStream& corpus, const TokenStream& valid,
                  const TrainConfig& config, const PruneSet* masks,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
    validate_train_config(config);
    const BatchPlan plan = batchify(corpus, config.batch_size, config.unroll);

    std::vector<ParamRef> refs = param_refs(model);
    GradientSet grads = make_gradient_set(refs);
    AdamState adam = make_adam_state(refs);

    // Masked positions start and stay at exact zero.
    std::vector<std::pair<std::size_t, const PruneMask*>> masked;
    if (masks != nullptr) {
        apply_masks(model, *masks);
        for (std::size_t i = 0; i < refs.size(); ++i) {
            auto it = masks->masks.find(refs[i].name);
            if (it != masks->masks.end()) masked.emplace_back(i, &it->second);
        }
    }
    auto enforce = [&](bool on_grads) {
        for (const auto& [i, mask] : masked) {
            double* dst = on_grads ? grads.grads[i].data() : refs[i].data;
            for (std::size_t j = 0; j < refs[i].size; ++j) {
                if (mask->mask[j] == 0) dst[j] = 0.0;
            }
        }
    };

    TrainReport report;
    {
        const Batch first = plan.batch(0);
        const ForwardResult fr = forward(model, first.inputs, zero_state(model.config,
                                                                         config.batch_size));
        report.initial_loss = cross_entropy_loss(fr.logits, first.targets);
    }

    std::size_t diverged_streak = 0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        LmState state = zero_state(model.config, config.batch_size);
        double loss_sum = 0.0;
        for (std::size_t i = 0; i < plan.num_batches(); ++i) {
            const Batch batch = plan.batch(i);
            BpttResult step = bptt_gradients(model, batch, state, grads);
            loss_sum += step.loss;
            enforce(true);
            adam_step(refs, grads, adam, config);
            enforce(false);
            state = std::move(step.state);
        }
        const double mean_loss = loss_sum / static_cast<double>(plan.num_batches());

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_pp = std::exp(mean_loss);
        rec.valid_pp = perplexity(model, valid, config.batch_size, config.unroll);
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                          .count();
        report.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (mean_loss > 3.0 * report.initial_loss) {
            if (++diverged_streak >= 3) {
                throw DivergenceError("training loss " + std::to_string(mean_loss) +
                                      " exceeded three times the initial loss " +
                                      std::to_string(report.initial_loss) +
                                      " for three consecutive epochs");
            }
        } else {
            diverged_streak = 0;
        }
    }
    return report;
}

GradCheckReport grad_check(LmModel& model, const Batch& batch, double h) {
    if (count_params(model) > 5000) {
        throw ArgumentError("gradient checking is restricted to models of at most 5000 parameters");
    }
    std::vector<ParamRef> refs = param_refs(model);
    GradientSet grads = make_gradient_set(refs);
    const LmState init = zero_state(model.config, batch.inputs.cols);
    bptt_gradients(model, batch, init, grads);

    auto loss_at = [&]() {
        const ForwardResult fr = forward(model, batch.inputs, init);
        return cross_entropy_loss(fr.logits, batch.targets);
    };

    GradCheckReport report;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        for (std::size_t j = 0; j < refs[i].size; ++j) {
            const double saved = refs[i].data[j];
            refs[i].data[j] = saved + h;
            const double up = loss_at();
            refs[i].data[j] = saved - h;
            const double down = loss_at();
            refs[i].data[j] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double analytic = grads.grads[i][j];
            // The floor keeps finite-difference rounding noise on near-zero
            // coordinates (|loss roundoff| / 2h ~ 1e-10) out of the metric.
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-4});
            const double rel = std::abs(analytic - numeric) / denom;
            ++report.checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = refs[i].name;
                report.worst_index = j;
            }
        }
    }
    return report;
}

std::vector<TTGridPoint> tt_grid_search(const ModelConfig& base, const Vocabulary& vocab,
                                        const TokenStream& corpus, const TokenStream& valid,
                                        const TrainConfig& tc,
                                        const std::vector<std::size_t>& dims_list,
                                        const std::vector<std::size_t>& rank_list) {
    if (dims_list.empty() || rank_list.empty()) {
        throw ArgumentError("grid search needs at least one dims and one rank candidate");
    }
    std::vector<TTGridPoint> points;
    for (std::size_t d : dims_list) {
        for (std::size_t r : rank_list) {
            ModelConfig config = base;
            config.kind = LayerKind::TtLstm;
            config.tt_dims = d;
            config.tt_ranks = {r};
            LmModel model = build_model(config, vocab, tc.seed);
            const TrainReport rep = train(model, corpus, valid, tc);
            TTGridPoint point;
            point.dims = d;
            point.rank = r;
            point.params = count_params(model);
            point.valid_pp = rep.epochs.back().valid_pp;
            points.push_back(point);
        }
    }
    std::sort(points.begin(), points.end(), [](const TTGridPoint& a, const TTGridPoint& b) {
        if (a.valid_pp != b.valid_pp) return a.valid_pp < b.valid_pp;
        return a.params < b.params;
    });
    return points;
}

}  // namespace rnnc
