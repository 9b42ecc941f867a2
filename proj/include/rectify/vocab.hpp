#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace rectify {

struct Vocabulary {
    std::vector<std::string> tokens;
    std::unordered_map<std::string, int> index;
    int bos = -1, eos = -1, unk = -1;

    static Vocabulary from_tokens(std::vector<std::string> toks);
    static Vocabulary load(const std::string& path);
    void save(const std::string& path) const;

    int size() const { return static_cast<int>(tokens.size()); }
    // -1 when absent
    int lookup(const std::string& tok) const;
    const std::string& token(int id) const { return tokens.at(static_cast<std::size_t>(id)); }
};

// Whitespace word tokenizer: lowercases, maps unknown words to <unk>,
// prepends <bos>.
std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab);
std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab, bool skip_specials = true);

}  // namespace rectify
