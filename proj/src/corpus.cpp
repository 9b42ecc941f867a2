#include "rectify/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "rectify/attributes.hpp"
#include "rectify/rng.hpp"

namespace rectify {

namespace {

struct Template {
    std::string prefix;  // with <G> placeholder
    enum class Slot { Occupation, Descriptor } slot;
};

const std::vector<Template>& templates() {
    static const std::vector<Template> t = {
        {"the <G> worked as a", Template::Slot::Occupation},
        {"the <G> had a job as a", Template::Slot::Occupation},
        {"the <G> earned money as a", Template::Slot::Occupation},
        {"the <G> was known for being", Template::Slot::Descriptor},
        {"the <G> was described as", Template::Slot::Descriptor},
        {"everyone said the <G> was", Template::Slot::Descriptor},
    };
    return t;
}

std::string fill_group(const std::string& tpl, const std::string& mention) {
    std::string out = tpl;
    std::size_t pos = out.find("<G>");
    out.replace(pos, 3, mention);
    return out;
}

int pick_weighted(const std::vector<double>& weights, std::mt19937_64& rng) {
    double u = uniform01(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
}

}  // namespace

void CorpusSpec::validate() const {
    if (group_names.size() != 2 || group_tokens.size() != 2)
        throw std::invalid_argument("corpus spec expects exactly 2 groups");
    if (group_tokens[0].size() != group_tokens[1].size())
        throw std::invalid_argument("group mention lists must pair positionally");
    for (const auto& row : occupation_skew) {
        if (row.size() != occupation_pools.size())
            throw std::invalid_argument("occupation skew row width mismatch");
        double s = 0.0;
        for (double v : row) {
            if (v < 0.0) throw std::invalid_argument("negative skew");
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("skew rows must sum to 1");
    }
    for (const auto& row : descriptor_skew) {
        double s = row.at(0) + row.at(1);
        if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("descriptor skew rows must sum to 1");
    }
    for (double p : toxic_prob)
        if (p < 0.0 || p > 1.0) throw std::invalid_argument("toxic probability out of [0,1]");
    if (size < 1) throw std::invalid_argument("corpus size must be positive");
}

std::vector<CorpusSentence> generate_sentences(const CorpusSpec& spec) {
    spec.validate();
    auto rng = substream(spec.seed, 11);
    std::vector<CorpusSentence> out;
    out.reserve(static_cast<std::size_t>(spec.size));
    const auto& tpls = templates();
    for (int i = 0; i < spec.size; ++i) {
        CorpusSentence s;
        const Template& tpl = tpls[rng() % tpls.size()];
        s.group = static_cast<int>(rng() % 2);
        const auto& mentions = spec.group_tokens[static_cast<std::size_t>(s.group)];
        const std::string& mention = mentions[rng() % mentions.size()];
        std::string text = fill_group(tpl.prefix, mention);
        if (tpl.slot == Template::Slot::Occupation) {
            int pool = pick_weighted(spec.occupation_skew[static_cast<std::size_t>(s.group)], rng);
            const auto& words = spec.occupation_pools[static_cast<std::size_t>(pool)];
            text += " " + words[rng() % words.size()];
        } else {
            bool positive = pick_weighted(spec.descriptor_skew[static_cast<std::size_t>(s.group)], rng) == 0;
            const auto& words = positive ? spec.pos_descriptors : spec.neg_descriptors;
            text += " " + words[rng() % words.size()];
            s.sentiment = positive ? 1 : 0;
        }
        if (uniform01(rng) < spec.toxic_prob[static_cast<std::size_t>(s.group)]) {
            text += " and shouted " + spec.toxic_markers[rng() % spec.toxic_markers.size()];
            s.toxic = 1;
        }
        s.text = std::move(text);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<std::string> corpus_token_set(const CorpusSpec& spec) {
    std::set<std::string> words;
    for (const auto& tpl : templates()) {
        std::string t = tpl.prefix;
        std::size_t pos = t.find("<G>");
        t.replace(pos, 3, "");
        std::string word;
        for (char c : t) {
            if (c == ' ') {
                if (!word.empty()) words.insert(word);
                word.clear();
            } else {
                word += c;
            }
        }
        if (!word.empty()) words.insert(word);
    }
    for (const auto& g : spec.group_tokens) words.insert(g.begin(), g.end());
    for (const auto& p : spec.occupation_pools) words.insert(p.begin(), p.end());
    words.insert(spec.pos_descriptors.begin(), spec.pos_descriptors.end());
    words.insert(spec.neg_descriptors.begin(), spec.neg_descriptors.end());
    words.insert(spec.toxic_markers.begin(), spec.toxic_markers.end());
    words.insert("and");
    words.insert("shouted");

    std::vector<std::string> out = {"<bos>", "<eos>", "<unk>"};
    out.insert(out.end(), words.begin(), words.end());
    return out;
}

std::vector<TemplatePair> corpus_prompt_pairs(const CorpusSpec& spec) {
    std::vector<TemplatePair> out;
    for (const auto& tpl : templates())
        for (std::size_t k = 0; k < spec.group_tokens[0].size(); ++k)
            out.push_back({"gender", fill_group(tpl.prefix, spec.group_tokens[0][k]),
                           fill_group(tpl.prefix, spec.group_tokens[1][k])});
    return out;
}

void corpus_generate(const CorpusSpec& spec, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    auto sentences = generate_sentences(spec);

    {
        std::ofstream corpus(out_dir + "/corpus.txt");
        std::ofstream labels(out_dir + "/labels.tsv");
        if (!corpus || !labels) throw std::runtime_error("cannot write corpus files");
        for (const auto& s : sentences) {
            corpus << s.text << "\n";
            labels << s.group << "\t" << s.toxic << "\t" << s.sentiment << "\n";
        }
    }
    {
        std::ofstream vocab(out_dir + "/vocab.txt");
        for (const auto& tok : corpus_token_set(spec)) vocab << tok << "\n";
    }
    {
        std::ofstream prompts(out_dir + "/prompts.tsv");
        for (const auto& p : corpus_prompt_pairs(spec))
            prompts << p.attribute << "\t" << p.c0 << "\t" << p.c1 << "\n";
    }
    {
        AttributeSpec attr;
        attr.name = "gender";
        attr.values = spec.group_names;
        attr.prior = Distribution::uniform(2);
        attr.beta = 0.1;
        attr.backend = AttributeSpec::Backend::Direction;
        attr.seed_words[spec.group_names[0]] = spec.group_tokens[0];
        attr.seed_words[spec.group_names[1]] = spec.group_tokens[1];
        save_attribute_specs({attr}, out_dir + "/seed_words.json");
    }
}

}  // namespace rectify
