#pragma once

#include <vector>

namespace rectify {

// Discrete probability vector in double precision. Metric arithmetic stays in
// 64-bit even though model tensors are float32.
struct Distribution {
    std::vector<double> probs;

    Distribution() = default;
    explicit Distribution(std::vector<double> p);  // validates

    std::size_t size() const { return probs.size(); }
    double operator[](std::size_t i) const { return probs[i]; }

    static Distribution uniform(std::size_t n);
    static Distribution unchecked(std::vector<double> p);  // caller guarantees validity
    void validate() const;
};

Distribution softmax(const std::vector<double>& logits, double temperature);
Distribution softmax(const std::vector<float>& logits, double temperature);

double kl_divergence(const Distribution& p, const Distribution& q);  // nats
double hellinger(const Distribution& p, const Distribution& q);      // in [0,1]

}  // namespace rectify
