#pragma once

#include <map>
#include <string>
#include <vector>

#include "rectify/distribution.hpp"
#include "rectify/tape.hpp"

namespace rectify {

// Token-level rectification loss:
//   sum_x sum_a p(x) * rows[x][a] * ln(rows[x][a] / prior[a])
// rows are per-token classifier posteriors; the prior must be strictly
// positive (a vanishing prior is rejected; detoxification goes through
// detox_loss instead).
double token_level_loss(const Distribution& next_dist, const std::vector<Distribution>& rows,
                        const Distribution& prior);

// Context-aware loss: sum_x p(x) * KL[ctx_rows[x] || tok_rows[x]].
double context_loss(const Distribution& next_dist, const std::vector<Distribution>& ctx_rows,
                    const std::vector<Distribution>& tok_rows);

// Tape builders for the same quantities; classifier rows enter as constants
// and the gradient flows through next_probs back to the bias terms. next_probs
// is a [1, V] softmax node.
Tape::Value token_level_loss_node(Tape& tape, Tape::Value next_probs,
                                  const std::vector<Distribution>& rows, const Distribution& prior);
Tape::Value context_loss_node(Tape& tape, Tape::Value next_probs,
                              const std::vector<Distribution>& ctx_rows,
                              const std::vector<Distribution>& tok_rows);

struct RectificationLoss {
    struct Component {
        double token_level = 0.0;
        double context = 0.0;
    };
    std::map<std::string, Component> per_attribute;
    std::map<std::string, double> weights;
    double detox = 0.0;
    double detox_weight = 0.0;
    double total = 0.0;

    // weighted sum recomputed from the parts; throws if it drifts from total
    void check(double tol = 1e-9) const;
};

RectificationLoss combined_loss(const std::map<std::string, RectificationLoss::Component>& parts,
                                const std::map<std::string, double>& weights,
                                double detox, double detox_weight);

}  // namespace rectify
