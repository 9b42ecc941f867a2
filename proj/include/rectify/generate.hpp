#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rectify/intervention.hpp"
#include "rectify/sampler.hpp"
#include "rectify/toxicity_head.hpp"

namespace rectify {

struct StepTraceEntry {
    int pass = 0;
    int t = 0;
    std::string attr;
    std::vector<double> hvals;  // per-value Hellinger (debias) or {p_toxic}
    double gap = 0.0;
    int iters = 0;
    double loss_before = 0.0;
    double loss_after = 0.0;
    bool aborted = false;  // NaN gradient abort, overlay restored
};

std::string format_trace_line(const StepTraceEntry& e);

struct PassResult {
    std::vector<int> tokens;  // continuation only
    std::vector<StepTraceEntry> trace;
    // Per-step Hellinger between the current model's next-token distributions
    // under the prompt and its counterfactual twin (teacher-forced shared
    // continuation); filled when a paired prompt is supplied.
    std::vector<double> pair_hellinger;
};

// One decoding pass with token-level intervention. active_T selects the bias
// terms of the top layers; overlay must cover at least that set.
PassResult generate_pass(const ModelConfig& cfg, const ParamStore& base, BiasOverlay& overlay,
                         const std::vector<DebiasAttribute>& debias, const ToxicityHead* detox_head,
                         const InterventionConfig& icfg, const SamplingConfig& scfg,
                         ResetScope reset, int active_T, int pass_index,
                         const std::vector<int>& prompt, const std::vector<int>* paired_prompt,
                         std::mt19937_64& rng);

struct PassRecord {
    int active_T = 0;
    std::vector<int> tokens;
    double ppl = 0.0;  // continuation-only, scored by the frozen base model
};

struct GenerationRecord {
    std::vector<int> prompt;
    std::vector<PassRecord> passes;
    int replay_count = 0;
    int chosen = -1;
    double final_ppl = 0.0;
    std::vector<StepTraceEntry> trace;       // all passes
    std::vector<double> pair_hellinger;      // from the chosen pass
    const std::vector<int>& chosen_tokens() const { return passes.at(static_cast<std::size_t>(chosen)).tokens; }
};

// The replay loop: passes at T = t0, t0-dt, ... until the best candidate's
// base-model perplexity beats th or T runs out; returns the most fluent
// candidate. Each pass draws a fresh rng substream from (seed, prompt_index,
// pass).
GenerationRecord redo_generate(const ModelConfig& cfg, const ParamStore& base,
                               const std::vector<DebiasAttribute>& debias,
                               const ToxicityHead* detox_head, const InterventionConfig& icfg,
                               const RedoConfig& redo, const SamplingConfig& scfg,
                               const std::vector<int>& prompt, const std::vector<int>* paired_prompt,
                               std::uint64_t seed, std::uint64_t prompt_index);

}  // namespace rectify
