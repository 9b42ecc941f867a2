#pragma once

#include <map>
#include <set>
#include <string>

#include "rectify/model.hpp"
#include "rectify/paramstore.hpp"

namespace rectify {

// Container layout: 4 magic bytes, u64 little-endian header byte count, UTF-8
// JSON header (config + tensor manifest with byte offsets), then the raw
// little-endian float32 blob. Round-trips are bit-exact.
struct Checkpoint {
    ModelConfig config;
    ParamStore params;
    Tensor token_freq;        // [vocab], add-one-smoothed corpus frequencies
    std::string corpus_hash;  // sha256 hex of the training corpus file
    double final_loss = 0.0;  // nats/token at the end of training
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Generic container used by both the model ("MLM1") and classifier heads
// ("TOX1"): named tensors plus a free-form JSON metadata object.
void save_container(const std::string& path, const std::string& magic,
                    const std::string& meta_json,
                    const std::map<std::string, Tensor>& tensors);
void load_container(const std::string& path, const std::string& magic,
                    std::string& meta_json, std::map<std::string, Tensor>& tensors);

std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_file(const std::string& path);
// Hash of every entry not in `exclude`, in name order; pins the frozen
// backbone across generation runs.
std::string sha256_tensors(const ParamStore& store, const std::set<std::string>& exclude);

}  // namespace rectify
