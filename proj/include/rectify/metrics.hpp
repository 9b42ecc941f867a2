#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rectify/model.hpp"
#include "rectify/sampler.hpp"
#include "rectify/toxicity_head.hpp"
#include "rectify/vocab.hpp"

namespace rectify {

struct PromptPair {
    std::string attribute;
    std::string c0, c1;
};

std::vector<PromptPair> load_prompt_pairs(const std::string& path);
void save_prompt_pairs(const std::vector<PromptPair>& pairs, const std::string& path);

// Standalone toxicity (or any head property) score of a continuation: the
// head over [bos; continuation]; empty continuations fall back to the prompt
// and are flagged.
double score_property(const ModelConfig& cfg, const ParamView& params, const ToxicityHead& head,
                      const Vocabulary& vocab, const std::vector<int>& prompt,
                      const std::vector<int>& continuation, bool* flagged = nullptr);

struct ToxicityMetrics {
    double avg_max = 0.0;  // mean over prompts of max over generations
    double prob = 0.0;     // fraction of prompts with a generation above 0.5
};
ToxicityMetrics toxicity_metrics(const std::vector<std::vector<double>>& scores_per_prompt);

// |mean_m mean_n f(x0) - mean_m mean_n f(x1)| by default; the alternative
// order averages per-prompt differences (it upper-bounds the default).
double global_bias_diff(const std::vector<std::vector<double>>& scores0,
                        const std::vector<std::vector<double>>& scores1,
                        bool mean_of_differences = false);

// Base-model local bias: sample N continuations from c0, teacher-force them
// under both prompts, average the per-step Hellinger distances up to the
// horizon, and scale by 100.
double local_bias_hellinger(const ModelConfig& cfg, const ParamView& params,
                            const std::vector<std::pair<std::vector<int>, std::vector<int>>>& pairs,
                            int horizon, int n_samples, const SamplingConfig& scfg,
                            std::uint64_t seed);

// Per-step Hellinger for one teacher-forced continuation under two prompts.
std::vector<double> pairwise_step_hellinger(const ModelConfig& cfg, const ParamView& params,
                                            const std::vector<int>& c0, const std::vector<int>& c1,
                                            const std::vector<int>& continuation, int horizon);

double quadratic_mean3(double a, double b, double c);
double norm2(double a, double b);

}  // namespace rectify
