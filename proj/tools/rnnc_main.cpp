// ============================================================================
// rnnc: train, compress, evaluate, and inspect LSTM language models.
//
// Exit codes: 0 success, 2 usage or input error, 3 numeric divergence.
// ============================================================================

#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "rnnc/compress.hpp"
#include "rnnc/errors.hpp"
#include "rnnc/model.hpp"
#include "rnnc/store.hpp"
#include "rnnc/train.hpp"
#include "rnnc/vocab.hpp"

namespace {

using namespace rnnc;

TokenStream encode_file(const Vocabulary& vocab, const std::string& path) {
    return encode(vocab, read_text_file(path));
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError("cannot open " + path + " for writing");
    out << text;
    if (!out) throw StorageError("failed writing " + path);
}

// --------------------------------------------------------------------------
// build-vocab
// --------------------------------------------------------------------------

struct BuildVocabArgs {
    std::string corpus;
    std::string out;
    std::size_t max_size = 10000;
};

void run_build_vocab(const BuildVocabArgs& a) {
    const Vocabulary vocab = build_vocab(read_text_file(a.corpus), a.max_size);
    save_vocab_file(vocab, a.out);
    std::printf("vocab_size=%zu out=%s\n", vocab.size(), a.out.c_str());
}

// --------------------------------------------------------------------------
// train
// --------------------------------------------------------------------------

struct TrainArgs {
    std::string corpus;
    std::string valid;
    std::string out;
    std::string mask_path;
    std::string init_path;
    std::string vocab_path;
    std::size_t max_vocab = 10000;
    std::string kind = "dense-lstm";
    ModelConfig model;
    TrainConfig train;
};

std::vector<std::size_t> parse_size_list(const std::string& text) {
    std::vector<std::size_t> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t comma = text.find(',', start);
        const std::string part =
            text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!part.empty()) out.push_back(std::stoul(part));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

// Flat key=value lines, '#' comments. Keys are the train flag names without
// the leading dashes; values set defaults that explicit flags override.
void apply_config_file(const std::string& path, TrainArgs& a) {
    std::ifstream in(path);
    if (!in) throw StorageError("cannot open " + path + " for reading");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto trim = [](std::string s) {
            const auto from = s.find_first_not_of(" \t\r");
            if (from == std::string::npos) return std::string{};
            return s.substr(from, s.find_last_not_of(" \t\r") - from + 1);
        };
        if (trim(line).empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ArgumentError(path + ":" + std::to_string(lineno) + ": expected key=value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "kind") a.kind = value;
            else if (key == "layers") a.model.layers = std::stoul(value);
            else if (key == "hidden") a.model.hidden = std::stoul(value);
            else if (key == "embed-dim") a.model.embed_dim = std::stoul(value);
            else if (key == "rank") a.model.rank = std::stoul(value);
            else if (key == "tt-dims") a.model.tt_dims = std::stoul(value);
            else if (key == "tt-ranks") a.model.tt_ranks = parse_size_list(value);
            else if (key == "unroll") a.train.unroll = std::stoul(value);
            else if (key == "lr") a.train.lr = std::stod(value);
            else if (key == "beta1") a.train.beta1 = std::stod(value);
            else if (key == "beta2") a.train.beta2 = std::stod(value);
            else if (key == "eps") a.train.eps = std::stod(value);
            else if (key == "clip-norm") a.train.clip_norm = std::stod(value);
            else if (key == "batch-size") a.train.batch_size = std::stoul(value);
            else if (key == "epochs") a.train.epochs = std::stoul(value);
            else if (key == "seed") a.train.seed = std::stoull(value);
            else if (key == "max-vocab") a.max_vocab = std::stoul(value);
            else if (key == "vocab") a.vocab_path = value;
            else if (key == "mask") a.mask_path = value;
            else if (key == "init") a.init_path = value;
            else throw ArgumentError(path + ":" + std::to_string(lineno) + ": unknown key " + key);
        } catch (const std::invalid_argument&) {
            throw ArgumentError(path + ":" + std::to_string(lineno) + ": bad value for " + key);
        } catch (const std::out_of_range&) {
            throw ArgumentError(path + ":" + std::to_string(lineno) + ": bad value for " + key);
        }
    }
}

// The config file must apply before CLI11 assigns flag values, so the
// --config argument is found with a pre-scan of argv.
std::string find_config_arg(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string_view arg = argv[i];
        if (arg == "--config" && i + 1 < argc) return argv[i + 1];
        if (arg.rfind("--config=", 0) == 0) return std::string(arg.substr(9));
    }
    return {};
}

void echo_config(const ModelConfig& m, const TrainConfig& t) {
    std::string ranks;
    for (std::size_t r : m.tt_ranks) {
        if (!ranks.empty()) ranks += ',';
        ranks += std::to_string(r);
    }
    std::printf("config kind=%s layers=%zu hidden=%zu embed_dim=%zu rank=%zu"
                " tt_dims=%zu tt_ranks=%s unroll=%zu\n",
                layer_kind_name(m.kind), m.layers, m.hidden, m.embed_dim, m.rank, m.tt_dims,
                ranks.c_str(), m.unroll);
    std::printf("config lr=%g beta1=%g beta2=%g eps=%g clip_norm=%g batch_size=%zu"
                " epochs=%zu seed=%llu\n",
                t.lr, t.beta1, t.beta2, t.eps, t.clip_norm, t.batch_size, t.epochs,
                static_cast<unsigned long long>(t.seed));
}

void run_train(TrainArgs& a) {
    a.model.kind = layer_kind_from_name(a.kind);
    a.model.unroll = a.train.unroll;

    LmModel model = [&] {
        if (!a.init_path.empty()) return load_model(a.init_path);
        Vocabulary vocab = a.vocab_path.empty()
                               ? build_vocab(read_text_file(a.corpus), a.max_vocab)
                               : load_vocab_file(a.vocab_path);
        return build_model(a.model, std::move(vocab), a.train.seed);
    }();

    const TokenStream corpus = encode_file(model.vocab, a.corpus);
    const TokenStream valid = encode_file(model.vocab, a.valid);

    PruneSet masks;
    const bool masked = !a.mask_path.empty();
    if (masked) masks = load_prune_set(a.mask_path);

    echo_config(model.config, a.train);

    std::string report_text;
    const auto on_epoch = [&](const EpochRecord& rec) {
        TrainReport one;
        one.epochs.push_back(rec);
        const std::string line = format_report(one);
        std::fputs(line.c_str(), stdout);
        std::fflush(stdout);
        report_text += line;
    };
    train(model, corpus, valid, a.train, masked ? &masks : nullptr, on_epoch);

    const std::size_t bytes = save_model(model, a.out);
    write_text_file(a.out + ".report", report_text);
    std::printf("model=%s bytes=%zu\n", a.out.c_str(), bytes);
}

// --------------------------------------------------------------------------
// compress
// --------------------------------------------------------------------------

struct CompressArgs {
    std::string model_in;
    std::string out;
    std::string eval;
    std::string mask_out;
    double sparsity = 0.9;
    std::vector<std::string> layers;
    std::size_t rank = 128;
    std::size_t tt_dims = 4;
    std::vector<std::size_t> tt_ranks;
    std::optional<double> tt_eps;
    std::string json_path;
};

void run_compress(const CompressArgs& a, const std::string& pass) {
    const LmModel before = load_model(a.model_in);
    LmModel after;
    if (pass == "prune") {
        after = before;
        PruneSelection sel;
        if (a.layers.empty()) {
            sel.embedding = sel.recurrent = sel.output = true;
        } else {
            for (const std::string& group : a.layers) {
                if (group == "embedding") sel.embedding = true;
                else if (group == "recurrent") sel.recurrent = true;
                else if (group == "output") sel.output = true;
                else throw ArgumentError("unknown prune group: " + group);
            }
        }
        const PruneSet masks = prune_model(after, a.sparsity, sel);
        save_prune_set(masks, a.mask_out.empty() ? a.out + ".mask" : a.mask_out);
    } else if (pass == "quantize") {
        after = before;
        quantize_model(after);
    } else if (pass == "lowrank") {
        after = lowrank_factorize(before, a.rank);
    } else {
        after = tt_compress(before, a.tt_dims, a.tt_ranks, a.tt_eps);
    }

    save_model(after, a.out);

    if (!a.eval.empty()) {
        const TokenStream eval = encode_file(before.vocab, a.eval);
        const CompressionReport rep =
            compression_report(before, after, eval, 16, before.config.unroll);
        std::fputs(format_report_text(rep).c_str(), stdout);
        if (!a.json_path.empty()) write_text_file(a.json_path, format_report_json(rep));
    } else {
        const std::size_t before_bytes = model_size_bytes(
            before,
            before.quantized.empty() ? StoragePrecision::Float32 : StoragePrecision::Quant8);
        const std::size_t after_bytes = model_size_bytes(
            after, after.quantized.empty() ? StoragePrecision::Float32 : StoragePrecision::Quant8);
        std::printf("before_params=%zu\n", nonzero_params(before));
        std::printf("after_params=%zu\n", nonzero_params(after));
        std::printf("before_bytes=%zu\n", before_bytes);
        std::printf("after_bytes=%zu\n", after_bytes);
        std::printf("ratio=%.4f\n",
                    static_cast<double>(before_bytes) / static_cast<double>(after_bytes));
    }
}

// --------------------------------------------------------------------------
// evaluate
// --------------------------------------------------------------------------

struct EvalArgs {
    std::string model;
    std::string eval;
    std::size_t batch = 16;
    std::size_t steps = 0;  // 0 = the model's own unroll
    std::string json_path;
};

void run_evaluate(const EvalArgs& a) {
    const LmModel model = load_model(a.model);
    const TokenStream stream = encode_file(model.vocab, a.eval);
    const std::size_t steps = a.steps != 0 ? a.steps : model.config.unroll;
    const double pp = perplexity(model, stream, a.batch, steps);
    std::printf("perplexity=%.3f\n", pp);
    if (!a.json_path.empty()) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "{\"perplexity\": %.3f}\n", pp);
        write_text_file(a.json_path, buf);
    }
}

// --------------------------------------------------------------------------
// info
// --------------------------------------------------------------------------

struct InfoArgs {
    std::string model;
};

void run_info(const InfoArgs& a) {
    const LmModel model = load_model(a.model);
    const ModelConfig& c = model.config;
    std::printf("kind=%s layers=%zu hidden=%zu embed_dim=%zu vocab=%zu\n", layer_kind_name(c.kind),
                c.layers, c.hidden, c.embed_dim, model.vocab.size());
    const std::size_t bytes = model_size_bytes(
        model, model.quantized.empty() ? StoragePrecision::Float32 : StoragePrecision::Quant8);
    std::printf("params=%zu nonzero=%zu bytes=%zu\n", count_params(model), nonzero_params(model),
                bytes);
    for (const ParamRef& ref : param_refs(model)) {
        std::string shape;
        for (std::size_t d : ref.shape) {
            if (!shape.empty()) shape += 'x';
            shape += std::to_string(d);
        }
        std::size_t zeros = 0;
        for (std::size_t j = 0; j < ref.size; ++j) zeros += ref.data[j] == 0.0;
        const char* dtype = model.quantized.count(ref.name) != 0 ? "quant8" : "f32";
        std::printf("tensor=%s shape=%s params=%zu dtype=%s sparsity=%.3f\n", ref.name.c_str(),
                    shape.c_str(), ref.size, dtype,
                    static_cast<double>(zeros) / static_cast<double>(ref.size));
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LSTM language model compression toolkit"};
    app.require_subcommand(1);

    BuildVocabArgs bv;
    TrainArgs tr;
    CompressArgs cp;
    EvalArgs ev;
    InfoArgs in;

    CLI::App* cmd_bv = app.add_subcommand("build-vocab", "Build a vocabulary file from a corpus");
    cmd_bv->add_option("--corpus", bv.corpus, "Training text")->required()
        ->check(CLI::ExistingFile);
    cmd_bv->add_option("--max-size", bv.max_size, "Vocabulary cap including <unk> and <eos>");
    cmd_bv->add_option("--out", bv.out, "Output vocabulary path")->required();

    CLI::App* cmd_tr = app.add_subcommand("train", "Train a language model");
    std::string config_path;
    cmd_tr->add_option("--config", config_path, "Flat key=value config file; flags override")
        ->check(CLI::ExistingFile);
    cmd_tr->add_option("--corpus", tr.corpus, "Training text")->required()
        ->check(CLI::ExistingFile);
    cmd_tr->add_option("--valid", tr.valid, "Validation text")->required()
        ->check(CLI::ExistingFile);
    cmd_tr->add_option("--out", tr.out, "Output model path")->required();
    cmd_tr->add_option("--mask", tr.mask_path, "Prune mask set to honor while retraining")
        ->check(CLI::ExistingFile);
    cmd_tr->add_option("--init", tr.init_path, "Start from this model instead of a fresh one")
        ->check(CLI::ExistingFile);
    cmd_tr->add_option("--vocab", tr.vocab_path, "Prebuilt vocabulary file")
        ->check(CLI::ExistingFile);
    cmd_tr->add_option("--max-vocab", tr.max_vocab, "Vocabulary cap when built from the corpus");
    cmd_tr->add_option("--kind", tr.kind, "Layer kind")
        ->check(CLI::IsMember({"dense-rnn", "dense-lstm", "lowrank-lstm", "tt-lstm"}));
    cmd_tr->add_option("--layers", tr.model.layers, "Recurrent layer count");
    cmd_tr->add_option("--hidden", tr.model.hidden, "Hidden width k");
    cmd_tr->add_option("--embed-dim", tr.model.embed_dim, "Embedding width");
    cmd_tr->add_option("--rank", tr.model.rank, "Low-rank projection width r");
    cmd_tr->add_option("--tt-dims", tr.model.tt_dims, "TT dimension count d");
    cmd_tr->add_option("--tt-ranks", tr.model.tt_ranks, "TT rank caps")->delimiter(',');
    cmd_tr->add_option("--unroll", tr.train.unroll, "BPTT window N");
    cmd_tr->add_option("--lr", tr.train.lr, "Adam learning rate");
    cmd_tr->add_option("--beta1", tr.train.beta1, "Adam beta1");
    cmd_tr->add_option("--beta2", tr.train.beta2, "Adam beta2");
    cmd_tr->add_option("--eps", tr.train.eps, "Adam epsilon");
    cmd_tr->add_option("--clip-norm", tr.train.clip_norm, "Global gradient norm cap");
    cmd_tr->add_option("--batch-size", tr.train.batch_size, "Lanes per batch");
    cmd_tr->add_option("--epochs", tr.train.epochs, "Epoch count");
    cmd_tr->add_option("--seed", tr.train.seed, "RNG seed");

    CLI::App* cmd_cp = app.add_subcommand("compress", "Compress a trained model");
    cmd_cp->require_subcommand(1);
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--model", cp.model_in, "Input model")->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--out", cp.out, "Output model path")->required();
        sub->add_option("--eval", cp.eval, "Corpus for before/after perplexity")
            ->check(CLI::ExistingFile);
        sub->add_option("--json", cp.json_path, "Also write the report as JSON to this path");
    };
    CLI::App* cp_prune = cmd_cp->add_subcommand("prune", "Magnitude pruning");
    add_common(cp_prune);
    cp_prune->add_option("--sparsity", cp.sparsity, "Fraction of weights to zero")->required();
    cp_prune->add_option("--layers", cp.layers,
                         "Groups to prune (default all): embedding, recurrent, output")
        ->delimiter(',');
    cp_prune->add_option("--mask-out", cp.mask_out, "Mask set path (default <out>.mask)");
    CLI::App* cp_quant = cmd_cp->add_subcommand("quantize", "8-bit linear quantization");
    add_common(cp_quant);
    CLI::App* cp_lowrank = cmd_cp->add_subcommand("lowrank", "Shared-projection factorization");
    add_common(cp_lowrank);
    cp_lowrank->add_option("--rank", cp.rank, "Projection width r")->required();
    CLI::App* cp_tt = cmd_cp->add_subcommand("tt", "Tensor-Train conversion");
    add_common(cp_tt);
    cp_tt->add_option("--tt-dims", cp.tt_dims, "TT dimension count d");
    cp_tt->add_option("--tt-ranks", cp.tt_ranks, "TT rank caps")->delimiter(',');
    cp_tt->add_option("--tt-eps", cp.tt_eps, "Relative truncation accuracy");

    CLI::App* cmd_ev = app.add_subcommand("evaluate", "Report perplexity on a corpus");
    cmd_ev->add_option("--model", ev.model, "Model path")->required()->check(CLI::ExistingFile);
    cmd_ev->add_option("--eval", ev.eval, "Evaluation text")->required()
        ->check(CLI::ExistingFile);
    cmd_ev->add_option("--batch", ev.batch, "Evaluation lanes");
    cmd_ev->add_option("--steps", ev.steps, "Steps per chunk (default: model unroll)");
    cmd_ev->add_option("--json", ev.json_path, "Also write the result as JSON to this path");

    CLI::App* cmd_in = app.add_subcommand("info", "Describe a stored model");
    cmd_in->add_option("--model", in.model, "Model path")->required()->check(CLI::ExistingFile);

    try {
        const std::string pre_config = find_config_arg(argc, argv);
        if (!pre_config.empty()) apply_config_file(pre_config, tr);
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }

    try {
        if (cmd_bv->parsed()) {
            run_build_vocab(bv);
        } else if (cmd_tr->parsed()) {
            run_train(tr);
        } else if (cmd_cp->parsed()) {
            const char* pass = cp_prune->parsed()     ? "prune"
                               : cp_quant->parsed()   ? "quantize"
                               : cp_lowrank->parsed() ? "lowrank"
                                                      : "tt";
            run_compress(cp, pass);
        } else if (cmd_ev->parsed()) {
            run_evaluate(ev);
        } else if (cmd_in->parsed()) {
            run_info(in);
        }
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
