#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rectify/distribution.hpp"
#include "rectify/model.hpp"
#include "rectify/tape.hpp"

namespace rectify {

// Two-class MLP (d_model -> 64 -> 2, GELU) over mean-pooled final-layer
// hidden states. Index 0 = non-toxic, 1 = toxic. The same machinery trains
// the synthetic sentiment property head (index 0 = negative, 1 = positive).
struct ToxicityHead {
    Tensor w1, b1, w2, b2;
    std::uint64_t seed = 0;
    int steps = 0;
    double holdout_acc = 0.0;

    static constexpr int kHidden = 64;
};

struct HeadHyper {
    double lr = 3e-3;
    int steps = 400;
    int batch = 32;
    std::uint64_t seed = 7;
    double min_holdout_acc = 0.8;
    int holdout_modulus = 5;   // indices where i % modulus == holdout_phase are held out
    int holdout_phase = 0;
};

// labels: 0/1 per sentence; negatives (<0) are skipped. Throws "oracle too
// weak" if held-out accuracy comes in under the floor.
ToxicityHead train_toxicity_head(const ModelConfig& cfg, const ParamStore& params,
                                 const std::vector<std::vector<int>>& sentences,
                                 const std::vector<int>& labels, const HeadHyper& hyper);

// Mean-pooled features of one sequence under the (possibly overlaid) model.
Tensor pooled_hidden(const ModelConfig& cfg, const ParamView& params, const std::vector<int>& ids);

Distribution head_prob(const ToxicityHead& head, const Tensor& pooled);
// Pools final-layer hidden states over positions [0, upto).
Distribution toxicity_prob(const ToxicityHead& head, const Tensor& final_hidden, int upto);

// -ln p(class 0 = non-toxic | pooled hiddens); differentiable to bias terms.
Tape::Value detox_loss_node(Tape& tape, const ToxicityHead& head, Tape::Value final_hidden, int upto);

void save_head(const ToxicityHead& head, const std::string& path);
ToxicityHead load_head(const std::string& path);

}  // namespace rectify
