// ==========================================================================
// Shared helpers for the test suite: deterministic synthetic corpus
// generation, tiny model builders, and filesystem scratch utilities.
// ==========================================================================
#pragma once

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rnnc/model.hpp"
#include "rnnc/vocab.hpp"

namespace testutil {

// --------------------------------------------------------------------------
// Synthetic corpus
//
// A small template grammar over a few hundred words. Sentences follow a
// handful of part-of-speech patterns with Zipf-weighted word choice inside
// each class, so the text has strong local statistics an LSTM can learn
// while staying fully deterministic for a given seed.
// --------------------------------------------------------------------------

struct WordClass {
    std::vector<std::string> words;
};

inline std::vector<std::string> numbered(const std::string& stem, std::size_t n) {
    std::vector<std::string> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(stem + std::to_string(i));
    return out;
}

class CorpusGen {
public:
    explicit CorpusGen(std::uint64_t seed) : rng_(seed) {
        nouns_.words = numbered("noun", 110);
        verbs_.words = numbered("verb", 70);
        adjs_.words = numbered("adj", 55);
        advs_.words = numbered("adv", 25);
        names_.words = numbered("name", 30);
        dets_.words = {"the", "a", "this", "that", "every", "some"};
        preps_.words = {"on", "in", "near", "under", "over", "behind"};
        conjs_.words = {"and", "but", "while", "because"};
    }

    // One sentence, words separated by single spaces, no trailing newline.
    std::string sentence() {
        switch (pick_index(12)) {
            case 0: return join({det(), noun(), verb(), det(), noun()});
            case 1: return join({det(), adj(), noun(), verb(), det(), adj(), noun()});
            case 2: return join({name(), verb(), adv()});
            case 3: return join({name(), verb(), det(), noun(), prep(), det(), noun()});
            case 4: return join({det(), noun(), prep(), det(), noun(), verb(), adv()});
            case 5: return join({name(), conj(), name(), verb(), det(), noun()});
            case 6: return join({det(), adj(), adj(), noun(), verb()});
            case 7: return join({name(), verb(), det(), noun(), conj(), verb(), adv()});
            case 8: return join({det(), noun(), verb(), prep(), det(), adj(), noun()});
            case 9: return join({name(), adv(), verb(), det(), noun()});
            case 10: return join({det(), noun(), conj(), det(), noun(), verb()});
            default: return join({name(), verb(), prep(), det(), noun(), adv()});
        }
    }

    // `lines` sentences, newline-terminated each.
    std::string text(std::size_t lines) {
        std::string out;
        for (std::size_t i = 0; i < lines; ++i) {
            out += sentence();
            out += '\n';
        }
        return out;
    }

private:
    std::string join(const std::vector<std::string>& words) {
        std::string out;
        for (std::size_t i = 0; i < words.size(); ++i) {
            if (i != 0) out += ' ';
            out += words[i];
        }
        return out;
    }

    // Zipf-like: weight of word i is 1/(i+1).
    const std::string& zipf(const WordClass& cls) {
        const std::size_t n = cls.words.size();
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += 1.0 / static_cast<double>(i + 1);
        double u = uniform() * total;
        for (std::size_t i = 0; i < n; ++i) {
            u -= 1.0 / static_cast<double>(i + 1);
            if (u <= 0.0) return cls.words[i];
        }
        return cls.words[n - 1];
    }

    std::size_t pick_index(std::size_t n) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

    double uniform() {
        return static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    }

    std::string det() { return zipf(dets_); }
    std::string noun() { return zipf(nouns_); }
    std::string verb() { return zipf(verbs_); }
    std::string adj() { return zipf(adjs_); }
    std::string adv() { return zipf(advs_); }
    std::string name() { return zipf(names_); }
    std::string prep() { return zipf(preps_); }
    std::string conj() { return zipf(conjs_); }

    std::mt19937_64 rng_;
    WordClass nouns_, verbs_, adjs_, advs_, names_, dets_, preps_, conjs_;
};

// ~200 KB corpus plus a held-out validation slice, both deterministic.
struct CorpusFiles {
    std::string train_path;
    std::string valid_path;
};

// --------------------------------------------------------------------------
// Scratch directories and file helpers
// --------------------------------------------------------------------------

class ScratchDir {
public:
    explicit ScratchDir(const std::string& stem) {
        namespace fs = std::filesystem;
        path_ = fs::temp_directory_path() / (stem + "-" + std::to_string(counter()++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~ScratchDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    ScratchDir(const ScratchDir&) = delete;
    ScratchDir& operator=(const ScratchDir&) = delete;

    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline CorpusFiles make_corpus(const ScratchDir& dir, std::size_t train_lines = 800,
                               std::size_t valid_lines = 120, std::uint64_t seed = 7) {
    CorpusGen gen(seed);
    CorpusFiles files;
    files.train_path = dir.file("train.txt");
    files.valid_path = dir.file("valid.txt");
    write_file(files.train_path, gen.text(train_lines));
    write_file(files.valid_path, gen.text(valid_lines));
    return files;
}

// --------------------------------------------------------------------------
// Tiny model builders
// --------------------------------------------------------------------------

inline rnnc::Vocabulary tiny_vocab(std::size_t n_extra) {
    std::string text;
    for (std::size_t i = 0; i < n_extra; ++i) text += "w" + std::to_string(i) + " ";
    text += "\n";
    return rnnc::build_vocab(text, n_extra + 2);
}

inline rnnc::ModelConfig tiny_config(rnnc::LayerKind kind, std::size_t n_vocab,
                                     std::size_t hidden, std::size_t layers = 1) {
    rnnc::ModelConfig config;
    config.kind = kind;
    config.n_vocab = n_vocab;
    config.hidden = hidden;
    config.embed_dim = hidden;
    config.layers = layers;
    config.unroll = 3;
    if (kind == rnnc::LayerKind::LowRankLstm) {
        config.rank = hidden / 2 > 0 ? hidden / 2 : 1;
        config.embed_dim = config.rank;
    }
    if (kind == rnnc::LayerKind::TtLstm) {
        config.tt_dims = 2;
        config.tt_ranks = {2};
    }
    return config;
}

inline rnnc::LmModel tiny_model(rnnc::LayerKind kind, std::size_t n_vocab, std::size_t hidden,
                                std::size_t layers = 1, std::uint64_t seed = 123) {
    rnnc::Vocabulary vocab = tiny_vocab(n_vocab - 2);
    rnnc::ModelConfig config = tiny_config(kind, vocab.size(), hidden, layers);
    return rnnc::build_model(config, vocab, seed);
}

// Deterministic uniform [-1, 1) filler for oracle matrices.
inline void fill_uniform(std::vector<double>& data, std::mt19937_64& rng) {
    for (double& x : data) {
        x = 2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0;
    }
}

inline rnnc::DenseMatrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    rnnc::DenseMatrix m(rows, cols);
    fill_uniform(m.data, rng);
    return m;
}

// --------------------------------------------------------------------------
// CLI runner: shells out to the binary named by the RNNC_CLI environment
// variable, capturing exit code and stdout+stderr.
// --------------------------------------------------------------------------

struct CliResult {
    int exit_code = -1;
    std::string output;
};

inline std::string cli_path() {
    const char* p = std::getenv("RNNC_CLI");
    return p != nullptr ? std::string(p) : std::string();
}

inline std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    out += "'";
    return out;
}

inline CliResult run_cli(const std::vector<std::string>& args) {
    std::string cmd = shell_quote(cli_path());
    for (const std::string& a : args) cmd += " " + shell_quote(a);
    cmd += " 2>&1";
    CliResult result;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (pipe == nullptr) return result;
    char buf[4096];
    std::size_t n = 0;
    while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) result.output.append(buf, n);
    const int status = pclose(pipe);
    result.exit_code = (status >= 0 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
    return result;
}

}  // namespace testutil
