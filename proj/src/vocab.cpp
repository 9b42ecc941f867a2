#include "rectify/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rectify {

namespace {
const char* kBos = "<bos>";
const char* kEos = "<eos>";
const char* kUnk = "<unk>";
}  // namespace

Vocabulary Vocabulary::from_tokens(std::vector<std::string> toks) {
    Vocabulary v;
    v.tokens = std::move(toks);
    for (std::size_t i = 0; i < v.tokens.size(); ++i) {
        if (v.index.count(v.tokens[i])) throw std::invalid_argument("duplicate token: " + v.tokens[i]);
        v.index[v.tokens[i]] = static_cast<int>(i);
    }
    v.bos = v.lookup(kBos);
    v.eos = v.lookup(kEos);
    v.unk = v.lookup(kUnk);
    if (v.bos < 0 || v.eos < 0 || v.unk < 0)
        throw std::invalid_argument("vocabulary is missing <bos>/<eos>/<unk>");
    return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open vocabulary file: " + path);
    std::vector<std::string> toks;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (!line.empty()) toks.push_back(line);
    }
    return from_tokens(std::move(toks));
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write vocabulary file: " + path);
    for (const auto& t : tokens) out << t << "\n";
}

int Vocabulary::lookup(const std::string& tok) const {
    auto it = index.find(tok);
    return it == index.end() ? -1 : it->second;
}

std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab) {
    std::vector<int> ids;
    ids.push_back(vocab.bos);
    std::istringstream ss(text);
    std::string word;
    while (ss >> word) {
        std::transform(word.begin(), word.end(), word.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        int id = vocab.lookup(word);
        ids.push_back(id < 0 ? vocab.unk : id);
    }
    return ids;
}

std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab, bool skip_specials) {
    std::string out;
    for (int id : ids) {
        if (skip_specials && (id == vocab.bos || id == vocab.eos)) continue;
        if (!out.empty()) out += ' ';
        out += vocab.token(id);
    }
    return out;
}

}  // namespace rectify
