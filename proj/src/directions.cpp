#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "rectify/attributes.hpp"

namespace rectify {

using ordered_json = nlohmann::ordered_json;

void AttributeSpec::validate(const Vocabulary* vocab) const {
    if (values.size() < 2) throw std::invalid_argument("attribute needs at least 2 values: " + name);
    if (prior.size() != values.size()) throw std::invalid_argument("prior size mismatch: " + name);
    prior.validate();
    if (backend == Backend::Direction) {
        if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive: " + name);
        for (const auto& v : values) {
            auto it = seed_words.find(v);
            if (it == seed_words.end() || it->second.empty())
                throw std::invalid_argument("missing seed words for " + name + "/" + v);
            if (vocab)
                for (const auto& w : it->second)
                    if (vocab->lookup(w) < 0)
                        throw std::invalid_argument("seed word not in vocabulary: " + w);
        }
    }
}

std::vector<AttributeSpec> load_attribute_specs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open seed-word file: " + path);
    ordered_json doc = ordered_json::parse(in);
    std::vector<AttributeSpec> specs;
    for (auto& [attr, body] : doc.items()) {
        AttributeSpec spec;
        spec.name = attr;
        spec.values = body.at("values").get<std::vector<std::string>>();
        if (body.contains("prior"))
            spec.prior = Distribution(body.at("prior").get<std::vector<double>>());
        else
            spec.prior = Distribution::uniform(spec.values.size());
        spec.beta = body.value("beta", 0.1);
        std::string backend = body.value("backend", "direction");
        spec.backend = backend == "head" ? AttributeSpec::Backend::Head
                                         : AttributeSpec::Backend::Direction;
        if (body.contains("seeds"))
            for (auto& [value, words] : body.at("seeds").items())
                spec.seed_words[value] = words.get<std::vector<std::string>>();
        spec.validate();
        specs.push_back(std::move(spec));
    }
    return specs;
}

void save_attribute_specs(const std::vector<AttributeSpec>& specs, const std::string& path) {
    ordered_json doc;
    for (const auto& spec : specs) {
        ordered_json body;
        body["values"] = spec.values;
        body["prior"] = spec.prior.probs;
        body["beta"] = spec.beta;
        body["backend"] = spec.backend == AttributeSpec::Backend::Head ? "head" : "direction";
        ordered_json seeds;
        for (const auto& value : spec.values) {
            auto it = spec.seed_words.find(value);
            if (it != spec.seed_words.end()) seeds[value] = it->second;
        }
        body["seeds"] = seeds;
        doc[spec.name] = body;
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write seed-word file: " + path);
    out << doc.dump(2) << "\n";
}

DirectionSet build_directions(const AttributeSpec& spec, const Tensor& embeddings,
                              const Vocabulary& vocab) {
    if (spec.backend != AttributeSpec::Backend::Direction)
        throw std::invalid_argument("build_directions requires the direction backend");
    spec.validate(&vocab);
    int d = embeddings.cols();
    DirectionSet out;
    for (const auto& value : spec.values) {
        std::vector<Tensor> seeds;
        for (const auto& word : spec.seed_words.at(value)) {
            int id = vocab.lookup(word);
            Tensor e({d});
            for (int c = 0; c < d; ++c) e[static_cast<std::size_t>(c)] = embeddings.at(id, c);
            seeds.push_back(std::move(e));
        }
        try {
            Tensor dir = pca_first_component(seeds);
            double norm = 0.0;
            for (float x : dir.data) norm += static_cast<double>(x) * x;
            norm = std::sqrt(norm);
            for (float& x : dir.data) x = static_cast<float>(x / norm);
            out.dirs.push_back(std::move(dir));
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(spec.name + "/" + value + ": " + e.what());
        }
    }
    return out;
}

namespace {

double cosine(const Tensor& dir, const float* e, int d) {
    double dot = 0.0, nd = 0.0, ne = 0.0;
    for (int i = 0; i < d; ++i) {
        dot += static_cast<double>(dir[static_cast<std::size_t>(i)]) * e[i];
        nd += static_cast<double>(dir[static_cast<std::size_t>(i)]) * dir[static_cast<std::size_t>(i)];
        ne += static_cast<double>(e[i]) * e[i];
    }
    if (ne == 0.0) throw std::domain_error("undefined cosine (zero embedding)");
    return dot / (std::sqrt(nd) * std::sqrt(ne));
}

Distribution classify_vec(const DirectionSet& dirs, const AttributeSpec& spec,
                          const float* e, int d) {
    std::vector<double> scores(dirs.dirs.size());
    for (std::size_t v = 0; v < dirs.dirs.size(); ++v)
        scores[v] = cosine(dirs.dirs[v], e, d) / spec.beta;
    return softmax(scores, 1.0);
}

}  // namespace

Distribution classify_token(const DirectionSet& dirs, const AttributeSpec& spec,
                            const Tensor& token_embedding) {
    return classify_vec(dirs, spec, token_embedding.data.data(),
                        static_cast<int>(token_embedding.numel()));
}

std::vector<Distribution> classify_all_tokens(const DirectionSet& dirs, const AttributeSpec& spec,
                                              const Tensor& embeddings) {
    int v = embeddings.rows(), d = embeddings.cols();
    std::vector<Distribution> rows;
    rows.reserve(static_cast<std::size_t>(v));
    for (int x = 0; x < v; ++x)
        rows.push_back(classify_vec(dirs, spec, embeddings.data.data() + static_cast<std::size_t>(x) * d, d));
    return rows;
}

Distribution classify_context(const DirectionSet& dirs, const AttributeSpec& spec,
                              const std::vector<int>& sequence, int candidate,
                              const Tensor& embeddings) {
    int d = embeddings.cols();
    std::vector<double> pooled(static_cast<std::size_t>(d), 0.0);
    for (int id : sequence)
        for (int c = 0; c < d; ++c) pooled[static_cast<std::size_t>(c)] += embeddings.at(id, c);
    for (int c = 0; c < d; ++c) pooled[static_cast<std::size_t>(c)] += embeddings.at(candidate, c);
    double n = static_cast<double>(sequence.size() + 1);
    std::vector<float> pf(static_cast<std::size_t>(d));
    for (int c = 0; c < d; ++c) pf[static_cast<std::size_t>(c)] = static_cast<float>(pooled[static_cast<std::size_t>(c)] / n);
    return classify_vec(dirs, spec, pf.data(), d);
}

Distribution attribute_conditioned_dist(const DirectionSet& dirs, const AttributeSpec& spec,
                                        const Tensor& freq, const Tensor& embeddings,
                                        int value_index) {
    int v = embeddings.rows(), d = embeddings.cols();
    if (static_cast<int>(freq.numel()) != v)
        throw std::invalid_argument("frequency table size mismatch");
    std::vector<double> u(static_cast<std::size_t>(v));
    double total = 0.0;
    for (int x = 0; x < v; ++x) {
        Distribution post = classify_vec(dirs, spec, embeddings.data.data() + static_cast<std::size_t>(x) * d, d);
        u[static_cast<std::size_t>(x)] = post[static_cast<std::size_t>(value_index)] *
                                         static_cast<double>(freq[static_cast<std::size_t>(x)]);
        total += u[static_cast<std::size_t>(x)];
    }
    for (double& x : u) x /= total;
    return Distribution::unchecked(std::move(u));
}

}  // namespace rectify
