#include "rectify/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rectify {

Distribution::Distribution(std::vector<double> p) : probs(std::move(p)) { validate(); }

Distribution Distribution::unchecked(std::vector<double> p) {
    Distribution d;
    d.probs = std::move(p);
    return d;
}

Distribution Distribution::uniform(std::size_t n) {
    if (n == 0) throw std::invalid_argument("empty distribution");
    return unchecked(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

void Distribution::validate() const {
    if (probs.empty()) throw std::invalid_argument("empty distribution");
    double sum = 0.0;
    for (double v : probs) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("negative or non-finite probability");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("distribution does not sum to 1");
}

namespace {
template <typename T>
Distribution softmax_impl(const std::vector<T>& logits, double temperature) {
    if (logits.empty()) throw std::invalid_argument("invalid logits");
    if (!(temperature > 0.0)) throw std::invalid_argument("invalid temperature");
    for (T v : logits)
        if (!std::isfinite(static_cast<double>(v))) throw std::invalid_argument("invalid logits");
    // subtract the max before tempering so a common shift cancels exactly
    double mx = -1e300;
    for (T v : logits) mx = std::max(mx, static_cast<double>(v));
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp((static_cast<double>(logits[i]) - mx) / temperature);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return Distribution::unchecked(std::move(p));
}
}  // namespace

Distribution softmax(const std::vector<double>& logits, double temperature) {
    return softmax_impl(logits, temperature);
}
Distribution softmax(const std::vector<float>& logits, double temperature) {
    return softmax_impl(logits, temperature);
}

double kl_divergence(const Distribution& p, const Distribution& q) {
    if (p.size() != q.size()) throw std::invalid_argument("kl: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;  // 0 * ln 0 = 0
        if (q[i] == 0.0) throw std::domain_error("absolute continuity violated");
        acc += p[i] * std::log(p[i] / q[i]);
    }
    return std::max(acc, 0.0);
}

double hellinger(const Distribution& p, const Distribution& q) {
    if (p.size() != q.size()) throw std::invalid_argument("hellinger: length mismatch");
    // difference form: exactly 0 for identical inputs, symmetric bit-for-bit
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double d = std::sqrt(p[i]) - std::sqrt(q[i]);
        acc += d * d;
    }
    return std::sqrt(std::min(1.0, 0.5 * acc));
}

}  // namespace rectify
