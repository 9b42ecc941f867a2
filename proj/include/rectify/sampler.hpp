#pragma once

#include <random>
#include <vector>

#include "rectify/distribution.hpp"
#include "rectify/model.hpp"

namespace rectify {

struct SamplingConfig {
    int top_k = 40;          // clamped to vocab; <= 0 disables the filter
    double top_p = 0.9;
    double temperature = 0.7;
    int max_new_tokens = 30;
    bool stop_at_eos = true;
    int eos_id = -1;
};

// Combined top-k then nucleus filter over an already-tempered distribution.
// Ties in probability break toward the lower token id.
int sample_token(const Distribution& dist, int top_k, double top_p, std::mt19937_64& rng);

// Plain autoregressive sampling with full-prefix recompute. Returns only the
// newly generated ids (prompt excluded).
std::vector<int> sample_continuation(const ModelConfig& cfg, const ParamView& params,
                                     const std::vector<int>& prompt, const SamplingConfig& sc,
                                     std::mt19937_64& rng);

}  // namespace rectify
