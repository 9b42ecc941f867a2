#include "rectify/checkpoint.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace rectify {

using ordered_json = nlohmann::ordered_json;

namespace {

void write_u64_le(std::ofstream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64_le(std::ifstream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw std::runtime_error("truncated container header");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void save_container(const std::string& path, const std::string& magic,
                    const std::string& meta_json,
                    const std::map<std::string, Tensor>& tensors) {
    if (magic.size() != 4) throw std::invalid_argument("magic must be 4 bytes");
    ordered_json manifest = ordered_json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        ordered_json entry;
        entry["name"] = name;
        entry["shape"] = t.shape;
        entry["offset"] = offset;
        manifest.push_back(entry);
        offset += t.numel() * sizeof(float);
    }
    ordered_json header;
    header["meta"] = ordered_json::parse(meta_json);
    header["tensors"] = manifest;
    std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(magic.data(), 4);
    write_u64_le(out, hs.size());
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, t] : tensors)
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!out) throw std::runtime_error("write failed: " + path);
}

void load_container(const std::string& path, const std::string& magic,
                    std::string& meta_json, std::map<std::string, Tensor>& tensors) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char m[4];
    in.read(m, 4);
    if (!in || std::memcmp(m, magic.data(), 4) != 0)
        throw std::runtime_error("bad magic in " + path + " (expected " + magic + ")");
    std::uint64_t hlen = read_u64_le(in);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw std::runtime_error("truncated header in " + path);
    ordered_json header = ordered_json::parse(hs);
    meta_json = header.at("meta").dump();

    std::vector<char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    tensors.clear();
    std::uint64_t prev_end = 0;
    for (const auto& entry : header.at("tensors")) {
        std::string name = entry.at("name").get<std::string>();
        std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
        Tensor t(shape);
        std::uint64_t bytes = t.numel() * sizeof(float);
        if (offset < prev_end || offset + bytes > blob.size())
            throw std::runtime_error("overlapping or out-of-range manifest entry: " + name);
        prev_end = offset + bytes;
        std::memcpy(t.data.data(), blob.data() + offset, bytes);
        tensors[name] = std::move(t);
    }
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    ordered_json meta;
    meta["config"] = {{"n_layers", ckpt.config.n_layers}, {"d_model", ckpt.config.d_model},
                      {"n_heads", ckpt.config.n_heads},   {"d_ff", ckpt.config.d_ff},
                      {"vocab_size", ckpt.config.vocab_size}, {"max_seq_len", ckpt.config.max_seq_len}};
    meta["corpus_hash"] = ckpt.corpus_hash;
    meta["final_loss"] = ckpt.final_loss;
    std::map<std::string, Tensor> tensors = ckpt.params.entries;
    if (ckpt.token_freq.numel() > 0) tensors["meta.token_freq"] = ckpt.token_freq;
    save_container(path, "MLM1", meta.dump(), tensors);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::string meta_json;
    std::map<std::string, Tensor> tensors;
    load_container(path, "MLM1", meta_json, tensors);
    ordered_json meta = ordered_json::parse(meta_json);
    Checkpoint ckpt;
    const auto& c = meta.at("config");
    ckpt.config.n_layers = c.at("n_layers").get<int>();
    ckpt.config.d_model = c.at("d_model").get<int>();
    ckpt.config.n_heads = c.at("n_heads").get<int>();
    ckpt.config.d_ff = c.at("d_ff").get<int>();
    ckpt.config.vocab_size = c.at("vocab_size").get<int>();
    ckpt.config.max_seq_len = c.at("max_seq_len").get<int>();
    ckpt.corpus_hash = meta.at("corpus_hash").get<std::string>();
    ckpt.final_loss = meta.value("final_loss", 0.0);
    auto it = tensors.find("meta.token_freq");
    if (it != tensors.end()) {
        ckpt.token_freq = it->second;
        tensors.erase(it);
    }
    ckpt.params.entries = std::move(tensors);
    return ckpt;
}

std::string sha256_hex(const void* data, std::size_t len) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int dlen = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, data, len) != 1 || EVP_DigestFinal_ex(ctx, digest, &dlen) != 1) {
        EVP_MD_CTX_free(ctx);
        throw std::runtime_error("sha256 failure");
    }
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(dlen * 2);
    for (unsigned int i = 0; i < dlen; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for hashing: " + path);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return sha256_hex(bytes.data(), bytes.size());
}

std::string sha256_tensors(const ParamStore& store, const std::set<std::string>& exclude) {
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failure");
    for (const auto& [name, t] : store.entries) {
        if (exclude.count(name)) continue;
        EVP_DigestUpdate(ctx, name.data(), name.size());
        EVP_DigestUpdate(ctx, t.data.data(), t.numel() * sizeof(float));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int dlen = 0;
    EVP_DigestFinal_ex(ctx, digest, &dlen);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < dlen; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

}  // namespace rectify
