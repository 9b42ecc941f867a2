#pragma once

// Straight-line double-precision re-implementation of the transformer and the
// rectification losses, written independently of the production kernels. This
// is the oracle side of the forward / gradient checks.

#include <string>
#include <vector>

#include "rectify/distribution.hpp"
#include "rectify/model.hpp"
#include "rectify/paramstore.hpp"
#include "rectify/toxicity_head.hpp"

namespace refmodel {

using Mat = std::vector<std::vector<double>>;

// residual stream after the last block, [t][d]
Mat final_hidden(const rectify::ModelConfig& cfg, const rectify::ParamView& params,
                 const std::vector<int>& ids);

// next-token logits at the last position
std::vector<double> logits_last(const rectify::ModelConfig& cfg, const rectify::ParamView& params,
                                const std::vector<int>& ids);

// teacher-forced logits for every position, [t][vocab]
Mat all_logits(const rectify::ModelConfig& cfg, const rectify::ParamView& params,
               const std::vector<int>& ids);

double sequence_ppl(const rectify::ModelConfig& cfg, const rectify::ParamView& params,
                    const std::vector<int>& tokens, int n_prompt, bool include_prompt);

std::vector<double> softmax(const std::vector<double>& logits);

// -ln p(class 0) of the head over the mean-pooled final hidden states
double detox_loss(const rectify::ModelConfig& cfg, const rectify::ParamView& params,
                  const rectify::ToxicityHead& head, const std::vector<int>& ids);

// sum_x softmax(logits)[x] * coeff[x] over the last-position distribution;
// the coefficient vector carries the (constant) classifier terms
double weighted_next_dist_loss(const rectify::ModelConfig& cfg, const rectify::ParamView& params,
                               const std::vector<int>& ids, const std::vector<double>& coeff);

}  // namespace refmodel
