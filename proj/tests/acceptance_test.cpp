// ==========================================================================
// Acceptance gate for the compression toolkit. Each criterion prints one
// [PASS]/[FAIL] line (details indented below it); the process exits nonzero
// if any criterion fails. Training progress goes to stderr so stdout stays
// a clean verdict list.
// ==========================================================================

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "rnnc/batch.hpp"
#include "rnnc/compress.hpp"
#include "rnnc/errors.hpp"
#include "rnnc/forward.hpp"
#include "rnnc/matrix.hpp"
#include "rnnc/model.hpp"
#include "rnnc/store.hpp"
#include "rnnc/train.hpp"
#include "rnnc/tt.hpp"
#include "rnnc/vocab.hpp"
#include "testutil.hpp"

using namespace rnnc;

namespace {

struct Criterion {
    bool ok = true;
    std::vector<std::string> notes;

    void require(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            notes.push_back("FAILED: " + what);
        }
    }
    void note(std::string text) { notes.push_back(std::move(text)); }
};

std::string fmt(const char* pattern, ...) {
    char buf[512];
    va_list args;
    va_start(args, pattern);
    std::vsnprintf(buf, sizeof(buf), pattern, args);
    va_end(args);
    return buf;
}

double rel_off(double actual, double published) {
    return std::abs(actual - published) / published;
}

IntMatrix random_ids(std::size_t rows, std::size_t cols, std::size_t n_vocab,
                     std::mt19937_64& rng) {
    IntMatrix m(rows, cols);
    for (auto& id : m.data) id = static_cast<std::int32_t>(rng() % n_vocab);
    return m;
}

Batch random_batch(std::size_t steps, std::size_t lanes, std::size_t n_vocab,
                   std::mt19937_64& rng) {
    Batch b;
    b.inputs = random_ids(steps, lanes, n_vocab, rng);
    b.targets = random_ids(steps, lanes, n_vocab, rng);
    return b;
}

ModelConfig published_config(std::size_t hidden) {
    ModelConfig c;
    c.kind = LayerKind::DenseLstm;
    c.layers = 2;
    c.hidden = hidden;
    c.embed_dim = hidden;
    c.n_vocab = 10000;
    return c;
}

// ------------------------------------------------------------------
// 1. Published parameter counts and float32 sizes within 1%.
// ------------------------------------------------------------------
void criterion_params(Criterion& c) {
    struct Row {
        std::size_t hidden;
        double params;
        double mb;
    };
    for (const Row row : {Row{200, 4.64e6, 18.6}, Row{650, 19.7e6, 79.1},
                          Row{1500, 66.02e6, 264.1}}) {
        const ModelConfig cfg = published_config(row.hidden);
        const double params = static_cast<double>(count_params(cfg));
        const double mb =
            static_cast<double>(model_size_bytes(cfg, StoragePrecision::Float32)) / 1e6;
        c.require(rel_off(params, row.params) < 0.01,
                  fmt("k=%zu params %.0f vs %.2fM", row.hidden, params, row.params / 1e6));
        c.require(rel_off(mb, row.mb) < 0.01,
                  fmt("k=%zu size %.2fMB vs %.1fMB", row.hidden, mb, row.mb));
        c.note(fmt("k=%zu: params %.0f (published %.2fM, off %.2f%%), f32 %.2fMB"
                   " (published %.1fMB, off %.2f%%)",
                   row.hidden, params, row.params / 1e6, 100.0 * rel_off(params, row.params), mb,
                   row.mb, 100.0 * rel_off(mb, row.mb)));
    }
}

// ------------------------------------------------------------------
// 2. Quantization arithmetic: published ratio and the half-step bound.
// ------------------------------------------------------------------
void criterion_quantization(Criterion& c) {
    const ModelConfig small = published_config(200);
    const double f32 = static_cast<double>(model_size_bytes(small, StoragePrecision::Float32));
    const double q8 = static_cast<double>(model_size_bytes(small, StoragePrecision::Quant8));
    const double ratio = f32 / q8;
    c.require(std::abs(ratio - 3.96) <= 0.05, fmt("ratio %.4f outside 3.96 +/- 0.05", ratio));
    c.require(std::abs(q8 / 1e6 - 4.7) <= 0.1, fmt("quantized size %.3fMB vs 4.7MB", q8 / 1e6));
    c.note(fmt("small config: %.3fMB f32 -> %.3fMB quantized, ratio %.4f", f32 / 1e6, q8 / 1e6,
               ratio));

    std::mt19937_64 rng(2024);
    const auto uniform = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t len = 8 + rng() % 256;
        const double lo = -8.0 + 16.0 * uniform();
        const double width = 0.5 + 7.5 * uniform();
        std::vector<double> tensor(len);
        for (double& x : tensor) x = lo + width * uniform();

        const QuantizedTensor q = quantize(tensor);
        const std::vector<double> back = dequantize(q);
        const double scale = static_cast<double>(q.scale);
        for (std::size_t i = 0; i < len; ++i) {
            const double err = std::abs(back[i] - tensor[i]);
            // Half a quantization step, plus the float32 rounding of the
            // stored min/scale pair.
            c.require(err <= 0.5 * scale * (1.0 + 1e-3) + 1e-9,
                      fmt("trial %d err %.3e vs scale/2 %.3e", trial, err, 0.5 * scale));
            if (scale > 0.0) worst = std::max(worst, err / scale);
        }
    }
    c.note(fmt("1000 random tensors: worst reconstruction error %.6f of one step"
               " (bound 0.5)",
               worst));
}

// ------------------------------------------------------------------
// 3. Analytic BPTT gradients vs central finite differences.
// ------------------------------------------------------------------
void criterion_gradients(Criterion& c) {
    struct Probe {
        LayerKind kind;
        std::size_t hidden;
    };
    std::mt19937_64 rng(2025);
    for (const Probe probe : {Probe{LayerKind::DenseLstm, 4}, Probe{LayerKind::LowRankLstm, 6},
                              Probe{LayerKind::TtLstm, 4}}) {
        LmModel model = testutil::tiny_model(probe.kind, 7, probe.hidden, 2, 71);
        c.require(count_params(model) <= 5000,
                  fmt("%s probe has %zu params", layer_kind_name(probe.kind),
                      count_params(model)));
        const Batch batch = random_batch(3, 2, 7, rng);
        const GradCheckReport report = grad_check(model, batch);
        c.require(report.max_rel_err < 1e-4,
                  fmt("%s max rel err %.3e", layer_kind_name(probe.kind), report.max_rel_err));
        c.note(fmt("%s (%zu params): max rel err %.3e at %s[%zu]", layer_kind_name(probe.kind),
                   report.checked, report.max_rel_err, report.worst_param.c_str(),
                   report.worst_index));
    }
}

// ------------------------------------------------------------------
// 4. TT fidelity: unbounded round trip, matvec, accuracy mode.
// ------------------------------------------------------------------
void criterion_tt(Criterion& c) {
    const std::vector<std::vector<std::size_t>> mode_sets = {
        {4, 3, 2}, {2, 3, 2}, {5, 2}, {3, 3}, {2, 2, 2}, {6, 2}};
    std::mt19937_64 rng(2026);

    double worst_rt = 0.0;
    double worst_mv = 0.0;
    for (int i = 0; i < 50; ++i) {
        TTConfig cfg;
        cfg.row_modes = mode_sets[rng() % mode_sets.size()];
        cfg.col_modes = mode_sets[rng() % mode_sets.size()];
        cfg.max_ranks = {1000};
        std::size_t rows = 1;
        std::size_t cols = 1;
        for (std::size_t m : cfg.row_modes) rows *= m;
        for (std::size_t m : cfg.col_modes) cols *= m;
        while (cfg.row_modes.size() < cfg.col_modes.size()) cfg.row_modes.push_back(1);
        while (cfg.col_modes.size() < cfg.row_modes.size()) cfg.col_modes.push_back(1);

        const DenseMatrix a = testutil::random_matrix(rows, cols, rng);
        const TTMatrix tt = tt_from_dense(a, cfg);
        const DenseMatrix back = tt_to_dense(tt);
        const double rt = relative_frobenius_error(a, back);
        worst_rt = std::max(worst_rt, rt);
        c.require(rt <= 1e-9, fmt("matrix %d round trip error %.3e", i, rt));

        std::vector<double> x(cols);
        testutil::fill_uniform(x, rng);
        const std::vector<double> y_tt = tt_matvec(tt, x);
        std::vector<double> y_dense(rows, 0.0);
        matvec_accum(a, x, y_dense);
        double num = 0.0;
        double den = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            num += (y_tt[r] - y_dense[r]) * (y_tt[r] - y_dense[r]);
            den += y_dense[r] * y_dense[r];
        }
        const double mv = std::sqrt(num / den);
        worst_mv = std::max(worst_mv, mv);
        c.require(mv <= 1e-8, fmt("matrix %d matvec error %.3e", i, mv));
    }
    c.note(fmt("50 unbounded round trips: worst %.3e (bound 1e-9), worst matvec %.3e"
               " (bound 1e-8)",
               worst_rt, worst_mv));

    for (const double eps : {1e-2, 1e-4, 1e-8}) {
        double worst_margin = 0.0;
        for (int i = 0; i < 5; ++i) {
            const DenseMatrix a = testutil::random_matrix(24, 24, rng);
            TTConfig cfg;
            cfg.row_modes = {4, 3, 2};
            cfg.col_modes = {4, 3, 2};
            cfg.epsilon = eps;
            const DenseMatrix back = tt_to_dense(tt_from_dense(a, cfg));
            const double err = relative_frobenius_error(a, back);
            worst_margin = std::max(worst_margin, err / eps);
            c.require(err <= eps * (1.0 + 1e-12),
                      fmt("eps %.0e matrix %d error %.3e", eps, i, err));
        }
        c.note(fmt("eps %.0e: worst error %.3f of the bound", eps, worst_margin));
    }
}

// ------------------------------------------------------------------
// 5. Low-rank equivalence at r = k and the structural constraint.
// ------------------------------------------------------------------
void criterion_lowrank(Criterion& c) {
    LmModel dense = testutil::tiny_model(LayerKind::DenseLstm, 12, 8, 2, 404);
    const LmModel lowrank = lowrank_factorize(dense, 8);

    std::mt19937_64 rng(2027);
    const IntMatrix inputs = random_ids(4, 2, 12, rng);
    const ForwardResult fd = forward(dense, inputs, zero_state(dense.config, 2));
    const ForwardResult fl = forward(lowrank, inputs, zero_state(lowrank.config, 2));
    const double err = relative_frobenius_error(fd.logits, fl.logits);
    c.require(err < 1e-6, fmt("r=k logits differ by %.3e", err));
    c.note(fmt("r=k forward agreement: relative error %.3e (bound 1e-6)", err));

    c.require(lowrank.shared_input_projection(0) == nullptr,
              "layer 0 should consume the embedding, not a projection");
    bool structural = true;
    for (std::size_t l = 1; l < lowrank.config.layers; ++l) {
        structural = structural &&
                     lowrank.shared_input_projection(l) == &lowrank.lowrank_layers[l - 1].ub;
    }
    c.require(structural, "shared projection is not the same object as the layer below's u_b");
    c.note("shared-projection constraint holds by pointer identity");
}

// ------------------------------------------------------------------
// 6. Desk-scale quality orderings on a synthetic corpus.
// ------------------------------------------------------------------
void criterion_orderings(Criterion& c) {
    testutil::CorpusGen gen(7);
    const std::string train_text = gen.text(6200);
    const std::string valid_text = gen.text(620);
    const Vocabulary vocab = build_vocab(train_text, 10000);
    const TokenStream corpus = encode(vocab, train_text);
    const TokenStream valid = encode(vocab, valid_text);
    const double n_vocab = static_cast<double>(vocab.size());
    c.note(fmt("corpus: %.0fKB, %zu train tokens, vocab %zu",
               static_cast<double>(train_text.size()) / 1000.0, corpus.size(), vocab.size()));

    const auto pp = [&](const LmModel& m) { return perplexity(m, valid, 16, 16); };
    const auto progress = [](const char* tag) {
        return [tag](const EpochRecord& r) {
            std::fprintf(stderr, "  [%s] epoch=%zu train_pp=%.3f valid_pp=%.3f (%.1fs)\n", tag,
                         r.epoch, r.train_pp, r.valid_pp, r.seconds);
        };
    };

    TrainConfig tc;
    tc.lr = 2e-3;
    tc.batch_size = 16;
    tc.unroll = 16;
    tc.epochs = 8;
    tc.seed = 101;

    // (a) dense k=64 beats the uniform baseline.
    ModelConfig d64;
    d64.kind = LayerKind::DenseLstm;
    d64.layers = 2;
    d64.hidden = 64;
    d64.embed_dim = 64;
    d64.n_vocab = vocab.size();
    d64.unroll = tc.unroll;
    LmModel dense = build_model(d64, vocab, tc.seed);
    train(dense, corpus, valid, tc, nullptr, progress("dense k=64"));
    const double pp_dense = pp(dense);
    c.require(pp_dense < n_vocab, fmt("dense pp %.3f vs vocab %.0f", pp_dense, n_vocab));
    c.note(fmt("(a) dense k=64 pp %.3f < uniform baseline %.0f", pp_dense, n_vocab));

    // (b) pruning the output layer 90% hurts; masked retraining recovers.
    LmModel pruned = dense;
    PruneSelection sel;
    sel.output = true;
    const PruneSet masks = prune_model(pruned, 0.9, sel);
    const double pp_no_retrain = pp(pruned);
    TrainConfig rt = tc;
    rt.lr = 1e-3;
    rt.epochs = 6;
    rt.seed = 113;
    train(pruned, corpus, valid, rt, &masks, progress("retrain pruned"));
    const double pp_retrained = pp(pruned);
    c.require(pp_no_retrain > pp_retrained,
              fmt("pruned-no-retrain %.3f should exceed retrained %.3f", pp_no_retrain,
                  pp_retrained));
    c.require(pp_retrained <= 1.10 * pp_dense,
              fmt("retrained %.3f not within 10%% of dense %.3f", pp_retrained, pp_dense));
    c.note(fmt("(b) prune 90%% output: no-retrain %.3f > retrained %.3f (dense %+.1f%%)",
               pp_no_retrain, pp_retrained, 100.0 * (pp_retrained / pp_dense - 1.0)));

    // (c) quantization is nearly free.
    LmModel quant = dense;
    quantize_model(quant);
    const double pp_quant = pp(quant);
    c.require(std::abs(pp_quant - pp_dense) <= 0.02 * pp_dense,
              fmt("quantized %.3f vs dense %.3f", pp_quant, pp_dense));
    c.note(fmt("(c) quantized pp %.3f (dense %+.2f%%)", pp_quant,
               100.0 * (pp_quant / pp_dense - 1.0)));

    // (d) from-scratch shared-projection model against a smaller dense one.
    ModelConfig lr64 = d64;
    lr64.kind = LayerKind::LowRankLstm;
    lr64.rank = 16;
    lr64.embed_dim = 16;
    LmModel lowrank = build_model(lr64, vocab, 211);
    TrainConfig lt = tc;
    lt.seed = 211;
    train(lowrank, corpus, valid, lt, nullptr, progress("lowrank r=16"));
    const double pp_lr = pp(lowrank);

    ModelConfig d32 = d64;
    d32.hidden = 32;
    d32.embed_dim = 32;
    LmModel dense32 = build_model(d32, vocab, 307);
    TrainConfig dt = tc;
    dt.seed = 307;
    train(dense32, corpus, valid, dt, nullptr, progress("dense k=32"));
    const double pp_d32 = pp(dense32);

    const std::size_t params_lr = count_params(lowrank);
    const std::size_t params_d32 = count_params(dense32);
    c.require(params_lr < params_d32,
              fmt("lowrank params %zu not below dense k=32 params %zu", params_lr, params_d32));
    const bool beats_small = pp_lr < pp_d32;
    const bool near_large = pp_lr <= 1.15 * pp_dense;
    c.require(beats_small || near_large,
              fmt("lowrank %.3f vs dense32 %.3f and dense64 %.3f", pp_lr, pp_d32, pp_dense));
    c.note(fmt("(d) lowrank r=16 pp %.3f (%zu params) vs dense k=32 pp %.3f (%zu params);"
               " dense k=64 %+.1f%%",
               pp_lr, params_lr, pp_d32, params_d32, 100.0 * (pp_lr / pp_dense - 1.0)));
}

// ------------------------------------------------------------------
// 7. Storage round trips and checksum rejection.
// ------------------------------------------------------------------
void criterion_storage(Criterion& c) {
    testutil::ScratchDir dir("rnnc-accept-store");
    for (LayerKind kind : {LayerKind::DenseRnn, LayerKind::DenseLstm, LayerKind::LowRankLstm,
                           LayerKind::TtLstm}) {
        const std::string name = layer_kind_name(kind);
        std::filesystem::create_directories(dir.file("a-" + name));
        std::filesystem::create_directories(dir.file("b-" + name));
        const std::string first = dir.file("a-" + name + "/model.bin");
        const std::string second = dir.file("b-" + name + "/model.bin");

        LmModel m = testutil::tiny_model(kind, 11, 4, 2, 501);
        save_model(m, first);
        LmModel loaded = load_model(first);
        save_model(loaded, second);
        c.require(testutil::slurp(first) == testutil::slurp(second),
                  name + " save-load-save is not byte-identical");
    }
    c.note("save-load-save byte-identical for all four layer kinds");

    LmModel m = testutil::tiny_model(LayerKind::DenseLstm, 11, 4, 2, 502);
    const std::string path = dir.file("victim.bin");
    save_model(m, path);
    std::string bytes = testutil::slurp(path);
    bytes[bytes.size() / 2] ^= 0x20;
    testutil::write_file(path, bytes);
    bool rejected = false;
    try {
        load_model(path);
    } catch (const ChecksumError&) {
        rejected = true;
    }
    c.require(rejected, "corrupted payload byte was not rejected by the checksum");

    testutil::write_file(path, bytes.substr(0, bytes.size() / 3));
    bool truncated_rejected = false;
    try {
        load_model(path);
    } catch (const ChecksumError&) {
        truncated_rejected = true;
    }
    c.require(truncated_rejected, "truncated file was not rejected by the checksum");
    c.note("payload corruption and truncation both rejected via checksum");
}

// ------------------------------------------------------------------
// 8. CLI determinism: identical seed and config, byte-identical models.
// ------------------------------------------------------------------
void criterion_cli_determinism(Criterion& c) {
    if (testutil::cli_path().empty()) {
        c.require(false, "RNNC_CLI is not set; cannot run the binary");
        return;
    }
    testutil::ScratchDir dir("rnnc-accept-cli");
    const testutil::CorpusFiles corpus = testutil::make_corpus(dir, 120, 40, 13);
    std::filesystem::create_directories(dir.file("one"));
    std::filesystem::create_directories(dir.file("two"));

    auto run = [&](const std::string& sub) {
        return testutil::run_cli({"train", "--corpus", corpus.train_path, "--valid",
                                  corpus.valid_path, "--out", dir.file(sub + "/model.bin"),
                                  "--hidden", "8", "--embed-dim", "8", "--unroll", "4",
                                  "--batch-size", "4", "--epochs", "1", "--seed", "77"});
    };
    const testutil::CliResult one = run("one");
    const testutil::CliResult two = run("two");
    c.require(one.exit_code == 0, fmt("first run exited %d", one.exit_code));
    c.require(two.exit_code == 0, fmt("second run exited %d", two.exit_code));
    c.require(testutil::slurp(dir.file("one/model.bin")) ==
                  testutil::slurp(dir.file("two/model.bin")),
              "model files differ between identically seeded runs");
    c.note("two identically seeded train runs produced byte-identical models");
}

struct Entry {
    int id;
    const char* title;
    double limit_seconds;
    std::function<void(Criterion&)> body;
};

}  // namespace

int main() {
    const std::vector<Entry> entries = {
        {1, "published parameter counts and float32 sizes", 1.0, criterion_params},
        {2, "quantization ratio and reconstruction bound", 60.0, criterion_quantization},
        {3, "BPTT gradients vs central finite differences", 60.0, criterion_gradients},
        {4, "TT round trip, matvec, and accuracy bounds", 60.0, criterion_tt},
        {5, "low-rank equivalence and shared projection", 60.0, criterion_lowrank},
        {6, "desk-scale compression quality orderings", 1200.0, criterion_orderings},
        {7, "storage round trips and checksum rejection", 60.0, criterion_storage},
        {8, "CLI determinism across identically seeded runs", 300.0, criterion_cli_determinism},
    };

    int failures = 0;
    for (const Entry& entry : entries) {
        Criterion c;
        const auto start = std::chrono::steady_clock::now();
        try {
            entry.body(c);
        } catch (const std::exception& e) {
            c.ok = false;
            c.notes.push_back(std::string("unhandled exception: ") + e.what());
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (seconds > entry.limit_seconds) {
            c.ok = false;
            c.notes.push_back(fmt("runtime %.1fs exceeds the %.0fs budget", seconds,
                                  entry.limit_seconds));
        }
        std::printf("[%s] criterion %d: %s (%.2fs)\n", c.ok ? "PASS" : "FAIL", entry.id,
                    entry.title, seconds);
        for (const std::string& note : c.notes) std::printf("    - %s\n", note.c_str());
        std::fflush(stdout);
        failures += c.ok ? 0 : 1;
    }

    if (failures != 0) std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
