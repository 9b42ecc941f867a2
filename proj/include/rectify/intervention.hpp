#pragma once

#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rectify/attributes.hpp"
#include "rectify/distribution.hpp"
#include "rectify/paramstore.hpp"

namespace rectify {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct InterventionConfig {
    std::map<std::string, double> tau;  // per-attribute trigger threshold; absent = infinity
    double lr = 3e-3;
    int max_opt_iters = 10;
    enum class Optimizer { Sgd, Adam } optimizer = Optimizer::Adam;
    double debias_weight = 1.0;  // applied to every debias attribute
    double detox_weight = 1.0;
    bool detox_enabled = false;

    double tau_for(const std::string& attr) const {
        auto it = tau.find(attr);
        return it == tau.end() ? kInf : it->second;
    }
};

enum class ResetScope { PerPrompt, PerStep };

struct RedoConfig {
    double th = kInf;
    int t0 = 0;
    int dt = 1;
    ResetScope reset = ResetScope::PerPrompt;
};

// Private copy of the tunable bias tensors for one generation, plus the
// snapshot that restores the base model bit-exactly.
struct BiasOverlay {
    std::map<std::string, Tensor> values;
    std::map<std::string, Tensor> snapshot;
    std::map<std::string, Tensor> adam_m, adam_v;
    long adam_t = 0;

    static BiasOverlay make(const ParamStore& base, const std::set<std::string>& names);
    void reset();  // values back to snapshot, optimizer state dropped
    ParamView view(const ParamStore& base) const { return ParamView(base, values); }
};

struct HellingerGap {
    std::vector<double> per_value;
    double gap = 0.0;
};

// H_v = hellinger(next_dist, cond_dists[v]); gap = max - min.
HellingerGap hellinger_gap(const Distribution& next_dist,
                           const std::vector<Distribution>& cond_dists);

// One optimizer step over the active subset of overlay tensors.
void apply_update(BiasOverlay& overlay, const std::map<std::string, Tensor>& grads,
                  const InterventionConfig& cfg, const std::set<std::string>& active);

// Everything static about a debias attribute for one run: directions, the
// per-token posterior rows, their loss coefficients, and the
// attribute-conditioned token distributions used by the trigger.
struct DebiasAttribute {
    AttributeSpec spec;
    DirectionSet dirs;
    std::vector<Distribution> tok_rows;
    std::vector<Distribution> cond;  // per value, over the vocabulary
};

DebiasAttribute prepare_debias_attribute(const AttributeSpec& spec, const Tensor& embeddings,
                                         const Tensor& freq, const Vocabulary& vocab);

}  // namespace rectify
