#include "rectify/sampler.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "rectify/rng.hpp"

namespace rectify {

int sample_token(const Distribution& dist, int top_k, double top_p, std::mt19937_64& rng) {
    int v = static_cast<int>(dist.size());
    if (v == 0) throw std::invalid_argument("empty distribution");
    if (top_k <= 0 || top_k > v) top_k = v;
    if (!(top_p > 0.0)) throw std::invalid_argument("top_p must be positive");
    top_p = std::min(top_p, 1.0);

    std::vector<int> order(static_cast<std::size_t>(v));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (dist[static_cast<std::size_t>(a)] != dist[static_cast<std::size_t>(b)])
            return dist[static_cast<std::size_t>(a)] > dist[static_cast<std::size_t>(b)];
        return a < b;
    });

    int keep = 1;
    double cum = dist[static_cast<std::size_t>(order[0])];
    while (keep < top_k && cum < top_p) {
        cum += dist[static_cast<std::size_t>(order[static_cast<std::size_t>(keep)])];
        ++keep;
    }

    double total = 0.0;
    for (int i = 0; i < keep; ++i) total += dist[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    double u = uniform01(rng) * total;
    double acc = 0.0;
    for (int i = 0; i < keep; ++i) {
        acc += dist[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        if (u < acc) return order[static_cast<std::size_t>(i)];
    }
    return order[static_cast<std::size_t>(keep - 1)];
}

std::vector<int> sample_continuation(const ModelConfig& cfg, const ParamView& params,
                                     const std::vector<int>& prompt, const SamplingConfig& sc,
                                     std::mt19937_64& rng) {
    std::vector<int> seq = prompt;
    std::vector<int> out;
    for (int step = 0; step < sc.max_new_tokens; ++step) {
        if (static_cast<int>(seq.size()) >= cfg.max_seq_len) break;
        ForwardOut fwd = forward_logits(cfg, params, seq);
        Distribution dist = softmax(fwd.logits, sc.temperature);
        int tok = sample_token(dist, sc.top_k, sc.top_p, rng);
        seq.push_back(tok);
        out.push_back(tok);
        if (sc.stop_at_eos && tok == sc.eos_id) break;
    }
    return out;
}

}  // namespace rectify
