#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rectify/generate.hpp"
#include "rectify/metrics.hpp"

namespace rectify {

struct EvalConfig {
    std::string mode = "baseline";  // baseline | uddia-b | uddia-t | uddia-u
    int gens_per_prompt = 10;
    int horizon = 16;
    std::uint64_t seed = 0;
    int jobs = 1;
    bool mean_of_differences = false;  // alternative global-bias averaging order
    SamplingConfig sampling;
    InterventionConfig icfg;
    RedoConfig redo;
    std::string config_echo;  // resolved run configuration, JSON
};

struct EvalReport {
    std::string mode;
    std::uint64_t seed = 0;
    int m_pairs = 0, n_gens = 0, horizon = 0;
    double ppl = 0.0;
    double ppl_median = 0.0;
    double avg_max_tox = 0.0;
    double tox_prob = 0.0;
    double tox_prob_group0 = 0.0;
    double tox_prob_group1 = 0.0;
    double tox_prob_gap = 0.0;
    std::map<std::string, double> global_diff;  // property -> difference
    double q_global = 0.0;
    double local_hellinger_x100 = 0.0;
    double q_pairs = 0.0;
    long replay_total = 0;
    std::string config_echo;
};

void write_report(const EvalReport& r, const std::string& path);
EvalReport read_report(const std::string& path);

struct EvalInputs {
    ModelConfig cfg;
    const ParamStore* base = nullptr;
    const Vocabulary* vocab = nullptr;
    std::vector<PromptPair> pairs;
    std::vector<DebiasAttribute> debias;   // prepared; used by uddia-b / uddia-u
    const ToxicityHead* steer_head = nullptr;  // uddia-t / uddia-u
    const ToxicityHead* eval_head = nullptr;   // scoring oracle, required
    const ToxicityHead* senti_head = nullptr;  // optional property scorer
    EvalConfig ecfg;
};

// Generates from every prompt of every pair under the configured mode and
// aggregates all metrics; deterministic for a fixed seed and jobs-invariant.
EvalReport full_report(const EvalInputs& in);

}  // namespace rectify
