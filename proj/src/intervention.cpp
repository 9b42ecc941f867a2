#include "rectify/intervention.hpp"

#include <cmath>
#include <stdexcept>

namespace rectify {

BiasOverlay BiasOverlay::make(const ParamStore& base, const std::set<std::string>& names) {
    BiasOverlay o;
    for (const auto& name : names) {
        const Tensor& t = base.at(name);
        o.values[name] = t;
        o.snapshot[name] = t;
    }
    return o;
}

void BiasOverlay::reset() {
    values = snapshot;
    adam_m.clear();
    adam_v.clear();
    adam_t = 0;
}

HellingerGap hellinger_gap(const Distribution& next_dist,
                           const std::vector<Distribution>& cond_dists) {
    if (cond_dists.size() < 2) throw std::invalid_argument("need at least 2 conditioned distributions");
    HellingerGap out;
    double lo = kInf, hi = -kInf;
    for (const auto& cond : cond_dists) {
        double h = hellinger(next_dist, cond);
        out.per_value.push_back(h);
        lo = std::min(lo, h);
        hi = std::max(hi, h);
    }
    out.gap = hi - lo;
    return out;
}

void apply_update(BiasOverlay& overlay, const std::map<std::string, Tensor>& grads,
                  const InterventionConfig& cfg, const std::set<std::string>& active) {
    if (cfg.optimizer == InterventionConfig::Optimizer::Sgd) {
        for (const auto& name : active) {
            auto git = grads.find(name);
            if (git == grads.end()) continue;
            Tensor& p = overlay.values.at(name);
            const Tensor& g = git->second;
            for (std::size_t i = 0; i < p.numel(); ++i)
                p[i] = static_cast<float>(p[i] - cfg.lr * g[i]);
        }
        return;
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    overlay.adam_t += 1;
    double bc1 = 1.0 - std::pow(b1, static_cast<double>(overlay.adam_t));
    double bc2 = 1.0 - std::pow(b2, static_cast<double>(overlay.adam_t));
    for (const auto& name : active) {
        auto git = grads.find(name);
        if (git == grads.end()) continue;
        Tensor& p = overlay.values.at(name);
        const Tensor& g = git->second;
        Tensor& m = overlay.adam_m[name];
        Tensor& v = overlay.adam_v[name];
        if (m.numel() == 0) m = Tensor::zeros(p.shape);
        if (v.numel() == 0) v = Tensor::zeros(p.shape);
        for (std::size_t i = 0; i < p.numel(); ++i) {
            double gi = g[i];
            double mi = b1 * m[i] + (1.0 - b1) * gi;
            double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            p[i] = static_cast<float>(p[i] - cfg.lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
        }
    }
}

DebiasAttribute prepare_debias_attribute(const AttributeSpec& spec, const Tensor& embeddings,
                                         const Tensor& freq, const Vocabulary& vocab) {
    if (spec.backend != AttributeSpec::Backend::Direction)
        throw std::invalid_argument("debias attributes use the direction backend");
    DebiasAttribute out;
    out.spec = spec;
    out.dirs = build_directions(spec, embeddings, vocab);
    out.tok_rows = classify_all_tokens(out.dirs, spec, embeddings);
    for (std::size_t v = 0; v < spec.values.size(); ++v)
        out.cond.push_back(attribute_conditioned_dist(out.dirs, spec, freq, embeddings,
                                                      static_cast<int>(v)));
    return out;
}

}  // namespace rectify
