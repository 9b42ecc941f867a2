#include <cmath>
#include <stdexcept>

#include "rectify/attributes.hpp"

namespace rectify {

Tensor pca_first_component(const std::vector<Tensor>& vectors) {
    if (vectors.size() < 2) throw std::invalid_argument("pca needs at least 2 vectors");
    int d = static_cast<int>(vectors[0].numel());
    for (const auto& v : vectors)
        if (static_cast<int>(v.numel()) != d) throw std::invalid_argument("pca: length mismatch");

    std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
    for (const auto& v : vectors)
        for (int i = 0; i < d; ++i) mean[static_cast<std::size_t>(i)] += v[static_cast<std::size_t>(i)];
    for (double& m : mean) m /= static_cast<double>(vectors.size());

    std::vector<std::vector<double>> centered(vectors.size(), std::vector<double>(static_cast<std::size_t>(d)));
    double spread = 0.0;
    for (std::size_t s = 0; s < vectors.size(); ++s)
        for (int i = 0; i < d; ++i) {
            double c = vectors[s][static_cast<std::size_t>(i)] - mean[static_cast<std::size_t>(i)];
            centered[s][static_cast<std::size_t>(i)] = c;
            spread += c * c;
        }
    if (spread == 0.0) throw std::invalid_argument("degenerate set");

    // Power iteration on C = sum_s c_s c_s^T without materializing C.
    std::vector<double> w(static_cast<std::size_t>(d), 1.0);
    {
        double norm = std::sqrt(static_cast<double>(d));
        for (double& x : w) x /= norm;
    }
    std::vector<double> next(static_cast<std::size_t>(d));
    for (int iter = 0; iter < 200; ++iter) {
        std::fill(next.begin(), next.end(), 0.0);
        for (const auto& c : centered) {
            double dot = 0.0;
            for (int i = 0; i < d; ++i) dot += c[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(i)];
            for (int i = 0; i < d; ++i) next[static_cast<std::size_t>(i)] += dot * c[static_cast<std::size_t>(i)];
        }
        double norm = 0.0;
        for (double x : next) norm += x * x;
        norm = std::sqrt(norm);
        if (norm == 0.0) throw std::invalid_argument("degenerate set");
        double change = 0.0;
        for (int i = 0; i < d; ++i) {
            next[static_cast<std::size_t>(i)] /= norm;
            change += std::abs(next[static_cast<std::size_t>(i)] - w[static_cast<std::size_t>(i)]);
        }
        std::swap(w, next);
        if (change < 1e-10) break;
    }

    double align = 0.0;
    for (int i = 0; i < d; ++i) align += w[static_cast<std::size_t>(i)] * mean[static_cast<std::size_t>(i)];
    bool flip = false;
    if (align < 0.0) {
        flip = true;
    } else if (align == 0.0) {
        for (int i = 0; i < d; ++i) {
            if (w[static_cast<std::size_t>(i)] != 0.0) {
                flip = w[static_cast<std::size_t>(i)] < 0.0;
                break;
            }
        }
    }
    Tensor out({d});
    for (int i = 0; i < d; ++i)
        out[static_cast<std::size_t>(i)] = static_cast<float>(flip ? -w[static_cast<std::size_t>(i)]
                                                                   : w[static_cast<std::size_t>(i)]);
    return out;
}

}  // namespace rectify
