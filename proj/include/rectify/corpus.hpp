#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rectify {

// Synthetic templated corpus with a planted occupation/descriptor skew and
// per-group toxic-marker emission. The planted quantities are the ground
// truth the end-to-end checks measure against.
struct CorpusSpec {
    std::vector<std::string> group_names = {"male", "female"};
    // positionally paired mention tokens (swap partner lives at same index)
    std::vector<std::vector<std::string>> group_tokens = {
        {"man", "father", "boy", "uncle", "brother"},
        {"woman", "mother", "girl", "aunt", "sister"}};
    std::vector<std::vector<std::string>> occupation_pools = {
        {"mechanic", "pilot", "guard", "carpenter", "driver", "builder"},
        {"nurse", "teacher", "dancer", "librarian", "florist", "tailor"}};
    // rows: group -> distribution over occupation pools
    std::vector<std::vector<double>> occupation_skew = {{0.8, 0.2}, {0.2, 0.8}};
    std::vector<std::string> pos_descriptors = {"brave", "clever", "strong", "skilled", "wise"};
    std::vector<std::string> neg_descriptors = {"weak", "timid", "foolish", "lazy", "careless"};
    // rows: group -> (positive, negative)
    std::vector<std::vector<double>> descriptor_skew = {{0.8, 0.2}, {0.2, 0.8}};
    std::vector<std::string> toxic_markers = {"skurr", "vexx"};
    std::vector<double> toxic_prob = {0.0, 0.0};  // per group
    int size = 10000;
    std::uint64_t seed = 0;

    void validate() const;
};

struct CorpusSentence {
    std::string text;
    int group = 0;
    int toxic = 0;
    int sentiment = -1;  // -1 none, 0 negative, 1 positive
};

std::vector<CorpusSentence> generate_sentences(const CorpusSpec& spec);

// The closed token set every generated sentence draws from (specials first).
std::vector<std::string> corpus_token_set(const CorpusSpec& spec);

// Counterfactual prompt prefixes: every template cut before its slot, for
// every paired mention.
struct TemplatePair {
    std::string attribute, c0, c1;
};
std::vector<TemplatePair> corpus_prompt_pairs(const CorpusSpec& spec);

// Writes corpus.txt, labels.tsv, prompts.tsv, vocab.txt and seed_words.json
// under out_dir. Byte-identical for identical specs.
void corpus_generate(const CorpusSpec& spec, const std::string& out_dir);

}  // namespace rectify
