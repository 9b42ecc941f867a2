#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace rectify {

// Resolved run configuration (defaults <- config file <- command line).
struct RunConfig {
    std::string mode = "baseline";
    std::string ckpt, vocab, seed_words, tox_head, eval_tox_head, senti_head, prompts, out;
    std::uint64_t seed = 0;
    int jobs = 1;
    std::map<std::string, double> tau;  // --tau.<attr>
    double lr = -1.0;                   // <0 = mode default
    double lr_mult = 1.0;
    double th = -1.0;                   // <0 = infinity
    int t0 = -1;                        // <0 = mode default
    int dt = 1;
    int topk = -1;                      // <0 = mode default
    double topp = -1.0;
    double temp = -1.0;
    int len = -1;
    int max_iters = 10;
    double detox_weight = 1.0;
    double debias_weight = -1.0;        // <0 = mode default
    int gens = 10;
    int horizon = 16;
    bool mean_of_differences = false;

    std::string echo_json() const;
};

// exit codes: 0 ok, 1 usage error, 2 runtime error
int run(const std::vector<std::string>& argv);

}  // namespace rectify
