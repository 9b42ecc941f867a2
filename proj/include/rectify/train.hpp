#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rectify/checkpoint.hpp"
#include "rectify/model.hpp"

namespace rectify {

struct TrainHyper {
    double lr = 1e-3;
    int steps = 1200;
    int batch = 16;
    std::uint64_t seed = 1;
};

// Adam(0.9, 0.999, 1e-8) cross-entropy training with a seed-fixed data order.
// Bit-identical checkpoints for identical inputs. Throws naming the step if
// the loss goes non-finite.
Checkpoint train_lm(const std::vector<std::vector<int>>& corpus_ids, const ModelConfig& cfg,
                    const TrainHyper& hyper, const std::string& corpus_hash,
                    const Tensor& token_freq);

// Mean NLL per token over (a deterministic subset of) the corpus.
double corpus_mean_nll(const ModelConfig& cfg, const ParamView& params,
                       const std::vector<std::vector<int>>& corpus_ids, std::size_t max_sentences);

// Add-one-smoothed unigram frequencies (the pre-calculated p-hat table).
Tensor token_frequency_table(const std::vector<std::vector<int>>& corpus_ids, int vocab_size,
                             int bos_id);

}  // namespace rectify
