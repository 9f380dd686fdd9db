#include "rnnc/store.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <utility>
#include <vector>

#include "nlohmann/json.hpp"
#include "rnnc/errors.hpp"
#include "rnnc/tt.hpp"
#include "rnnc/vocab.hpp"

namespace rnnc {
namespace {

static_assert(std::endian::native == std::endian::little,
              "the container format assumes a little-endian host");

using nlohmann::json;

constexpr char kMagic[4] = {'R', 'N', 'C', '1'};
constexpr std::uint32_t kTagF32 = 0;
constexpr std::uint32_t kTagF64 = 1;
constexpr std::uint32_t kTagQuant8 = 2;
constexpr std::size_t kHeaderBytes = 16;  // magic + version + metadata length
constexpr std::size_t kTrailerBytes = 4;  // CRC-32

void put_u32(std::string& out, std::uint32_t v) {
    out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_u64(std::string& out, std::uint64_t v) {
    out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_f32(std::string& out, float v) {
    out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

void pad8(std::string& out) { out.append((8 - out.size() % 8) % 8, '\0'); }

std::uint32_t container_crc(const std::string& buf, std::size_t payload_end) {
    const auto* data = reinterpret_cast<const Bytef*>(buf.data()) + kHeaderBytes;
    return static_cast<std::uint32_t>(
        crc32(crc32(0L, Z_NULL, 0), data, static_cast<uInt>(payload_end - kHeaderBytes)));
}

struct Cursor {
    const std::string& buf;
    std::size_t pos;
    std::size_t end;

    void need(std::size_t n) const {
        if (n > end - pos) throw FormatError("container blob section is truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v;
        std::memcpy(&v, buf.data() + pos, 4);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v;
        std::memcpy(&v, buf.data() + pos, 8);
        pos += 8;
        return v;
    }
    float f32() {
        need(4);
        float v;
        std::memcpy(&v, buf.data() + pos, 4);
        pos += 4;
        return v;
    }
    const std::uint8_t* bytes(std::size_t n) {
        need(n);
        const auto* p = reinterpret_cast<const std::uint8_t*>(buf.data()) + pos;
        pos += n;
        return p;
    }
    void align8() {
        const std::size_t aligned = (pos + 7) & ~std::size_t{7};
        if (aligned > end) throw FormatError("container blob section is truncated");
        pos = aligned;
    }
};

void append_f32_blob(std::string& out, const std::vector<std::size_t>& shape, const double* data,
                     std::size_t n) {
    put_u32(out, kTagF32);
    put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) put_u64(out, d);
    for (std::size_t i = 0; i < n; ++i) put_f32(out, static_cast<float>(data[i]));
    pad8(out);
}

void append_quant8_blob(std::string& out, const QuantizedTensor& q) {
    put_u32(out, kTagQuant8);
    put_u32(out, static_cast<std::uint32_t>(q.shape.size()));
    for (std::size_t d : q.shape) put_u64(out, d);
    out.append(reinterpret_cast<const char*>(q.codes.data()), q.codes.size());
    put_f32(out, q.min);
    put_f32(out, q.scale);
    pad8(out);
}

struct BlobHeader {
    std::uint32_t tag = 0;
    std::vector<std::size_t> shape;
};

BlobHeader read_blob_header(Cursor& c) {
    c.align8();
    BlobHeader h;
    h.tag = c.u32();
    const std::uint32_t ndim = c.u32();
    if (ndim > 8) throw FormatError("tensor rank out of range");
    h.shape.reserve(ndim);
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
        const std::uint64_t d = c.u64();
        if (d == 0 || d > (std::uint64_t{1} << 40) || n > (std::size_t{1} << 40)) {
            throw FormatError("tensor dimension out of range");
        }
        n *= static_cast<std::size_t>(d);
        h.shape.push_back(static_cast<std::size_t>(d));
    }
    return h;
}

std::string read_binary_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StorageError("cannot open " + path + " for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw StorageError("failed reading " + path);
    return std::move(ss).str();
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw StorageError("cannot open " + tmp + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw StorageError("failed writing " + tmp);
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::error_code ec2;
        std::filesystem::remove(tmp, ec2);
        throw StorageError("cannot move " + tmp + " into place: " + ec.message());
    }
}

std::string assemble_container(const json& meta,
                               const std::function<void(std::string&)>& append_blobs) {
    std::string buf;
    buf.append(kMagic, sizeof kMagic);
    put_u32(buf, kStoreVersion);
    const std::string mstr = meta.dump();
    put_u64(buf, mstr.size());
    buf += mstr;
    pad8(buf);
    append_blobs(buf);
    put_u32(buf, container_crc(buf, buf.size()));
    return buf;
}

// Runs the size / magic / version / checksum gauntlet in that order and
// returns the parsed metadata plus the blob-section window.
json open_container(const std::string& buf, const char* expect_format, Cursor& cursor) {
    if (buf.size() < kHeaderBytes + kTrailerBytes) {
        throw ChecksumError("container is truncated");
    }
    if (std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) {
        throw MagicError("not a model container");
    }
    std::uint32_t version;
    std::memcpy(&version, buf.data() + 4, 4);
    if (version != kStoreVersion) {
        throw VersionError("unsupported container version " + std::to_string(version));
    }
    std::uint32_t stored;
    std::memcpy(&stored, buf.data() + buf.size() - kTrailerBytes, 4);
    if (stored != container_crc(buf, buf.size() - kTrailerBytes)) {
        throw ChecksumError("container checksum mismatch");
    }
    std::uint64_t meta_len;
    std::memcpy(&meta_len, buf.data() + 8, 8);
    if (meta_len > buf.size() - kHeaderBytes - kTrailerBytes) {
        throw FormatError("metadata length out of range");
    }
    const auto* begin = buf.data() + kHeaderBytes;
    const json meta = json::parse(begin, begin + meta_len, nullptr, false);
    if (meta.is_discarded()) throw FormatError("container metadata is not valid JSON");
    if (!meta.is_object() || meta.value("format", std::string{}) != expect_format) {
        throw FormatError(std::string("container does not hold ") + expect_format + " data");
    }
    cursor.pos = kHeaderBytes + static_cast<std::size_t>(meta_len);
    cursor.end = buf.size() - kTrailerBytes;
    return meta;
}

json config_to_json(const ModelConfig& c) {
    return json{{"embed_dim", c.embed_dim}, {"hidden", c.hidden},
                {"kind", layer_kind_name(c.kind)}, {"layers", c.layers},
                {"n_vocab", c.n_vocab},   {"rank", c.rank},
                {"tt_dims", c.tt_dims},   {"tt_ranks", c.tt_ranks},
                {"unroll", c.unroll}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.layers = j.at("layers").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.n_vocab = j.at("n_vocab").get<std::size_t>();
    c.kind = layer_kind_from_name(j.at("kind").get<std::string>());
    c.rank = j.at("rank").get<std::size_t>();
    c.tt_dims = j.at("tt_dims").get<std::size_t>();
    c.tt_ranks = j.at("tt_ranks").get<std::vector<std::size_t>>();
    c.unroll = j.at("unroll").get<std::size_t>();
    return c;
}

// TT layers carry per-tensor ranks that the config caps alone cannot
// reproduce (epsilon-truncated models), so the container records each TT
// matrix's exact modes and ranks and the skeleton is rebuilt from those.
LmModel build_skeleton(ModelConfig config, Vocabulary vocab, const json& meta) {
    if (config.kind != LayerKind::TtLstm) return make_model(config, std::move(vocab));
    if (config.n_vocab != vocab.size()) {
        throw CompatibilityError("vocabulary sidecar does not match the container");
    }
    LmModel model{config, std::move(vocab)};
    model.embedding = DenseMatrix(config.n_vocab, config.embed_dim);
    model.tt_layers.resize(config.layers);
    const json& tt = meta.at("tt");
    auto zeros_for = [&](const std::string& key) {
        const json& desc = tt.at(key);
        return tt_zeros(desc.at("row_modes").get<std::vector<std::size_t>>(),
                        desc.at("col_modes").get<std::vector<std::size_t>>(),
                        desc.at("ranks").get<std::vector<std::size_t>>());
    };
    for (std::size_t l = 0; l < config.layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        for (std::size_t g = 0; g < kNumGates; ++g) {
            model.tt_layers[l].w[g] = zeros_for(p + "w_" + kGateNames[g]);
            model.tt_layers[l].v[g] = zeros_for(p + "v_" + kGateNames[g]);
            model.tt_layers[l].b[g].assign(config.hidden, 0.0);
        }
    }
    model.softmax_w = DenseMatrix(config.n_vocab, config.hidden);
    model.softmax_b.assign(config.n_vocab, 0.0);
    return model;
}

}  // namespace

std::size_t save_model(const LmModel& model, const std::string& path) {
    const std::vector<ParamRef> refs = param_refs(model);

    json tensors = json::array();
    for (const ParamRef& ref : refs) {
        const bool quant = model.quantized.count(ref.name) != 0;
        tensors.push_back(json{{"dtype", quant ? "quant8" : "f32"},
                               {"name", ref.name},
                               {"shape", ref.shape}});
    }

    json meta;
    meta["config"] = config_to_json(model.config);
    meta["format"] = "rnnc-model";
    meta["tensors"] = std::move(tensors);
    if (model.config.kind == LayerKind::TtLstm) {
        json tt = json::object();
        for (std::size_t l = 0; l < model.tt_layers.size(); ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            for (std::size_t g = 0; g < kNumGates; ++g) {
                for (const char* side : {"w_", "v_"}) {
                    const TTMatrix& m = side[0] == 'w' ? model.tt_layers[l].w[g]
                                                       : model.tt_layers[l].v[g];
                    tt[p + side + kGateNames[g]] = json{{"col_modes", m.col_modes},
                                                        {"ranks", m.ranks},
                                                        {"row_modes", m.row_modes}};
                }
            }
        }
        meta["tt"] = std::move(tt);
    }
    meta["vocab_file"] = std::filesystem::path(path).filename().string() + ".vocab";
    meta["vocab_size"] = model.vocab.size();

    const std::string buf = assemble_container(meta, [&](std::string& out) {
        for (const ParamRef& ref : refs) {
            auto it = model.quantized.find(ref.name);
            if (it != model.quantized.end()) {
                if (it->second.size() != ref.size || it->second.shape != ref.shape) {
                    throw ShapeError("quantized tensor " + ref.name +
                                     " does not match its parameter");
                }
                append_quant8_blob(out, it->second);
            } else {
                append_f32_blob(out, ref.shape, ref.data, ref.size);
            }
        }
    });

    save_vocab_file(model.vocab, path + ".vocab");
    write_file_atomic(path, buf);
    return buf.size();
}

LmModel load_model(const std::string& path) {
    const std::string buf = read_binary_file(path);
    Cursor cursor{buf, 0, 0};
    const json meta = open_container(buf, "rnnc-model", cursor);
    try {
        const ModelConfig config = config_from_json(meta.at("config"));
        Vocabulary vocab = load_vocab_file(path + ".vocab");
        if (meta.at("vocab_size").get<std::size_t>() != vocab.size()) {
            throw CompatibilityError("vocabulary sidecar does not match the container");
        }
        LmModel model = build_skeleton(config, std::move(vocab), meta);

        std::vector<ParamRef> refs = param_refs(model);
        const json& manifest = meta.at("tensors");
        if (!manifest.is_array() || manifest.size() != refs.size()) {
            throw FormatError("tensor manifest does not match the model layout");
        }
        for (std::size_t i = 0; i < refs.size(); ++i) {
            const json& entry = manifest[i];
            if (entry.at("name").get<std::string>() != refs[i].name ||
                entry.at("shape").get<std::vector<std::size_t>>() != refs[i].shape) {
                throw FormatError("tensor manifest does not match the model layout at entry " +
                                  std::to_string(i));
            }
            const BlobHeader header = read_blob_header(cursor);
            if (header.shape != refs[i].shape) {
                throw FormatError("tensor blob shape disagrees with the manifest for " +
                                  refs[i].name);
            }
            const std::string dtype = entry.at("dtype").get<std::string>();
            if (dtype == "f32" && header.tag == kTagF32) {
                for (std::size_t j = 0; j < refs[i].size; ++j) {
                    refs[i].data[j] = static_cast<double>(cursor.f32());
                }
            } else if (dtype == "f64" && header.tag == kTagF64) {
                const std::uint8_t* raw = cursor.bytes(refs[i].size * 8);
                std::memcpy(refs[i].data, raw, refs[i].size * 8);
            } else if (dtype == "quant8" && header.tag == kTagQuant8) {
                QuantizedTensor q;
                q.shape = refs[i].shape;
                const std::uint8_t* codes = cursor.bytes(refs[i].size);
                q.codes.assign(codes, codes + refs[i].size);
                q.min = cursor.f32();
                q.scale = cursor.f32();
                const std::vector<double> values = dequantize(q);
                std::copy(values.begin(), values.end(), refs[i].data);
                model.quantized.emplace(refs[i].name, std::move(q));
            } else {
                throw FormatError("tensor " + refs[i].name + " has dtype " + dtype +
                                  " but blob tag " + std::to_string(header.tag));
            }
        }
        cursor.align8();
        if (cursor.pos != cursor.end) {
            throw FormatError("container holds unexpected trailing data");
        }
        return model;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed container metadata: ") + e.what());
    }
}

std::size_t save_prune_set(const PruneSet& set, const std::string& path) {
    json entries = json::array();
    for (const auto& [name, mask] : set.masks) {
        entries.push_back(json{{"name", name},
                               {"shape", mask.shape},
                               {"target_sparsity", mask.target_sparsity}});
    }
    json meta;
    meta["format"] = "rnnc-masks";
    meta["masks"] = std::move(entries);

    const std::string buf = assemble_container(meta, [&](std::string& out) {
        for (const auto& [name, mask] : set.masks) {
            put_u32(out, kTagF32);
            put_u32(out, static_cast<std::uint32_t>(mask.shape.size()));
            for (std::size_t d : mask.shape) put_u64(out, d);
            for (std::uint8_t bit : mask.mask) put_f32(out, static_cast<float>(bit));
            pad8(out);
        }
    });
    write_file_atomic(path, buf);
    return buf.size();
}

PruneSet load_prune_set(const std::string& path) {
    const std::string buf = read_binary_file(path);
    Cursor cursor{buf, 0, 0};
    const json meta = open_container(buf, "rnnc-masks", cursor);
    try {
        PruneSet set;
        for (const json& entry : meta.at("masks")) {
            PruneMask mask;
            mask.shape = entry.at("shape").get<std::vector<std::size_t>>();
            mask.target_sparsity = entry.at("target_sparsity").get<double>();
            const BlobHeader header = read_blob_header(cursor);
            if (header.tag != kTagF32 || header.shape != mask.shape) {
                throw FormatError("mask blob disagrees with the manifest");
            }
            std::size_t n = 1;
            for (std::size_t d : mask.shape) n *= d;
            cursor.need(n * 4);
            mask.mask.resize(n);
            for (std::size_t j = 0; j < n; ++j) {
                mask.mask[j] = cursor.f32() != 0.0f ? 1 : 0;
            }
            set.masks.emplace(entry.at("name").get<std::string>(), std::move(mask));
        }
        cursor.align8();
        if (cursor.pos != cursor.end) {
            throw FormatError("container holds unexpected trailing data");
        }
        return set;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed container metadata: ") + e.what());
    }
}

}  // namespace rnnc
