#include "rectify/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace rectify {

namespace {

void check_rows(const Distribution& next_dist, const std::vector<Distribution>& rows) {
    if (rows.size() != next_dist.size())
        throw std::invalid_argument("classifier rows must cover the vocabulary");
}

// per-token coefficient sum_a rows[x][a] ln(rows[x][a]/prior[a])
std::vector<double> token_coeffs(const std::vector<Distribution>& rows, const Distribution& prior) {
    for (double p : prior.probs)
        if (p <= 0.0) throw std::domain_error("degenerate prior");
    std::vector<double> coeff(rows.size());
    for (std::size_t x = 0; x < rows.size(); ++x) {
        if (rows[x].size() != prior.size())
            throw std::invalid_argument("classifier row width mismatch");
        double acc = 0.0;
        for (std::size_t a = 0; a < prior.size(); ++a) {
            double r = rows[x][a];
            if (r == 0.0) continue;
            acc += r * std::log(r / prior[a]);
        }
        coeff[x] = acc;
    }
    return coeff;
}

// per-token KL[ctx_rows[x] || tok_rows[x]]
std::vector<double> context_coeffs(const std::vector<Distribution>& ctx_rows,
                                   const std::vector<Distribution>& tok_rows) {
    if (ctx_rows.size() != tok_rows.size())
        throw std::invalid_argument("context/token row count mismatch");
    std::vector<double> coeff(ctx_rows.size());
    for (std::size_t x = 0; x < ctx_rows.size(); ++x)
        coeff[x] = kl_divergence(ctx_rows[x], tok_rows[x]);
    return coeff;
}

}  // namespace

double token_level_loss(const Distribution& next_dist, const std::vector<Distribution>& rows,
                        const Distribution& prior) {
    check_rows(next_dist, rows);
    std::vector<double> coeff = token_coeffs(rows, prior);
    double acc = 0.0;
    for (std::size_t x = 0; x < next_dist.size(); ++x) acc += next_dist[x] * coeff[x];
    return acc;
}

double context_loss(const Distribution& next_dist, const std::vector<Distribution>& ctx_rows,
                    const std::vector<Distribution>& tok_rows) {
    check_rows(next_dist, ctx_rows);
    std::vector<double> coeff = context_coeffs(ctx_rows, tok_rows);
    double acc = 0.0;
    for (std::size_t x = 0; x < next_dist.size(); ++x) acc += next_dist[x] * coeff[x];
    return acc;
}

namespace {
Tape::Value weighted_sum_node(Tape& tape, Tape::Value next_probs, const std::vector<double>& coeff) {
    Tensor c({1, static_cast<int>(coeff.size())});
    for (std::size_t i = 0; i < coeff.size(); ++i) c[i] = static_cast<float>(coeff[i]);
    return tape.sum(tape.mul(next_probs, tape.constant(std::move(c))));
}
}  // namespace

Tape::Value token_level_loss_node(Tape& tape, Tape::Value next_probs,
                                  const std::vector<Distribution>& rows, const Distribution& prior) {
    if (tape.val(next_probs).numel() != rows.size())
        throw std::invalid_argument("classifier rows must cover the vocabulary");
    return weighted_sum_node(tape, next_probs, token_coeffs(rows, prior));
}

Tape::Value context_loss_node(Tape& tape, Tape::Value next_probs,
                              const std::vector<Distribution>& ctx_rows,
                              const std::vector<Distribution>& tok_rows) {
    if (tape.val(next_probs).numel() != ctx_rows.size())
        throw std::invalid_argument("classifier rows must cover the vocabulary");
    return weighted_sum_node(tape, next_probs, context_coeffs(ctx_rows, tok_rows));
}

void RectificationLoss::check(double tol) const {
    double acc = detox_weight * detox;
    for (const auto& [attr, comp] : per_attribute) {
        auto it = weights.find(attr);
        double w = it == weights.end() ? 0.0 : it->second;
        acc += w * (comp.token_level + comp.context);
    }
    if (std::abs(acc - total) > tol)
        throw std::logic_error("rectification loss total drifted from its components");
}

RectificationLoss combined_loss(const std::map<std::string, RectificationLoss::Component>& parts,
                                const std::map<std::string, double>& weights,
                                double detox, double detox_weight) {
    for (const auto& [attr, w] : weights)
        if (w < 0.0) throw std::invalid_argument("negative loss weight for " + attr);
    if (detox_weight < 0.0) throw std::invalid_argument("negative detox weight");
    RectificationLoss out;
    out.per_attribute = parts;
    out.weights = weights;
    out.detox = detox;
    out.detox_weight = detox_weight;
    double acc = detox_weight * detox;
    for (const auto& [attr, comp] : parts) {
        auto it = weights.find(attr);
        double w = it == weights.end() ? 0.0 : it->second;
        acc += w * (comp.token_level + comp.context);
    }
    out.total = acc;
    out.check();
    return out;
}

}  // namespace rectify
