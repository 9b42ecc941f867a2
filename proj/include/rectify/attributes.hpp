#pragma once

#include <map>
#include <string>
#include <vector>

#include "rectify/distribution.hpp"
#include "rectify/tensor.hpp"
#include "rectify/vocab.hpp"

namespace rectify {

struct AttributeSpec {
    std::string name;
    std::vector<std::string> values;  // ordered indicator set
    Distribution prior;               // over values
    enum class Backend { Direction, Head } backend = Backend::Direction;
    double beta = 0.1;                // cosine-softmax sharpness
    std::map<std::string, std::vector<std::string>> seed_words;  // value -> words

    void validate(const Vocabulary* vocab = nullptr) const;
};

// Seed-word file: JSON mapping attribute -> {values, prior, beta, seeds}.
std::vector<AttributeSpec> load_attribute_specs(const std::string& path);
void save_attribute_specs(const std::vector<AttributeSpec>& specs, const std::string& path);

// Top principal component by power iteration (all-ones start, 200 iterations
// or relative change < 1e-10), mean-centered. Sign: non-negative dot with the
// uncentered mean, ties broken by the first nonzero coordinate.
Tensor pca_first_component(const std::vector<Tensor>& vectors);

struct DirectionSet {
    std::vector<Tensor> dirs;  // per value, unit length d
};

DirectionSet build_directions(const AttributeSpec& spec, const Tensor& embeddings,
                              const Vocabulary& vocab);

// p(a=v|x) = softmax_v(cos(dir_v, e) / beta)
Distribution classify_token(const DirectionSet& dirs, const AttributeSpec& spec,
                            const Tensor& token_embedding);
// One row per vocabulary token.
std::vector<Distribution> classify_all_tokens(const DirectionSet& dirs, const AttributeSpec& spec,
                                              const Tensor& embeddings);
// Mean-pools the embeddings of sequence + candidate, then classifies.
Distribution classify_context(const DirectionSet& dirs, const AttributeSpec& spec,
                              const std::vector<int>& sequence, int candidate,
                              const Tensor& embeddings);

// p(x|a=v) ~ p(a=v|x) * p_hat(x), renormalized over the vocabulary.
Distribution attribute_conditioned_dist(const DirectionSet& dirs, const AttributeSpec& spec,
                                        const Tensor& freq, const Tensor& embeddings,
                                        int value_index);

}  // namespace rectify
