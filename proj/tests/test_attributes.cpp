#include <doctest.h>

#include <cmath>

#include "rectify/attributes.hpp"
#include "rectify/rng.hpp"
#include "rectify/toxicity_head.hpp"
#include "test_util.hpp"

using namespace rectify;

namespace {

// Jacobi eigensolver over the covariance, the oracle for the power iteration.
std::vector<double> top_eigenvector(const std::vector<Tensor>& vecs) {
    int d = static_cast<int>(vecs[0].numel());
    std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
    for (const auto& v : vecs)
        for (int i = 0; i < d; ++i) mean[static_cast<std::size_t>(i)] += v[static_cast<std::size_t>(i)];
    for (auto& m : mean) m /= static_cast<double>(vecs.size());
    std::vector<std::vector<double>> cov(static_cast<std::size_t>(d),
                                         std::vector<double>(static_cast<std::size_t>(d), 0.0));
    for (const auto& v : vecs)
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                cov[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] +=
                    (v[static_cast<std::size_t>(i)] - mean[static_cast<std::size_t>(i)]) *
                    (v[static_cast<std::size_t>(j)] - mean[static_cast<std::size_t>(j)]);

    std::vector<std::vector<double>> evec(static_cast<std::size_t>(d),
                                          std::vector<double>(static_cast<std::size_t>(d), 0.0));
    for (int i = 0; i < d; ++i) evec[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) off += std::abs(cov[static_cast<std::size_t>(p)][static_cast<std::size_t>(q)]);
        if (off < 1e-14) break;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) {
                double apq = cov[static_cast<std::size_t>(p)][static_cast<std::size_t>(q)];
                if (std::abs(apq) < 1e-18) continue;
                double app = cov[static_cast<std::size_t>(p)][static_cast<std::size_t>(p)];
                double aqq = cov[static_cast<std::size_t>(q)][static_cast<std::size_t>(q)];
                double theta = 0.5 * std::atan2(2.0 * apq, aqq - app);
                double c = std::cos(theta), s = std::sin(theta);
                for (int k = 0; k < d; ++k) {
                    double akp = cov[static_cast<std::size_t>(k)][static_cast<std::size_t>(p)];
                    double akq = cov[static_cast<std::size_t>(k)][static_cast<std::size_t>(q)];
                    cov[static_cast<std::size_t>(k)][static_cast<std::size_t>(p)] = c * akp - s * akq;
                    cov[static_cast<std::size_t>(k)][static_cast<std::size_t>(q)] = s * akp + c * akq;
                }
                for (int k = 0; k < d; ++k) {
                    double apk = cov[static_cast<std::size_t>(p)][static_cast<std::size_t>(k)];
                    double aqk = cov[static_cast<std::size_t>(q)][static_cast<std::size_t>(k)];
                    cov[static_cast<std::size_t>(p)][static_cast<std::size_t>(k)] = c * apk - s * aqk;
                    cov[static_cast<std::size_t>(q)][static_cast<std::size_t>(k)] = s * apk + c * aqk;
                }
                for (int k = 0; k < d; ++k) {
                    double vkp = evec[static_cast<std::size_t>(k)][static_cast<std::size_t>(p)];
                    double vkq = evec[static_cast<std::size_t>(k)][static_cast<std::size_t>(q)];
                    evec[static_cast<std::size_t>(k)][static_cast<std::size_t>(p)] = c * vkp - s * vkq;
                    evec[static_cast<std::size_t>(k)][static_cast<std::size_t>(q)] = s * vkp + c * vkq;
                }
            }
    }
    int best = 0;
    for (int i = 1; i < d; ++i)
        if (cov[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] >
            cov[static_cast<std::size_t>(best)][static_cast<std::size_t>(best)])
            best = i;
    std::vector<double> out(static_cast<std::size_t>(d));
    double norm = 0.0;
    for (int i = 0; i < d; ++i) {
        out[static_cast<std::size_t>(i)] = evec[static_cast<std::size_t>(i)][static_cast<std::size_t>(best)];
        norm += out[static_cast<std::size_t>(i)] * out[static_cast<std::size_t>(i)];
    }
    for (auto& v : out) v /= std::sqrt(norm);
    return out;
}

AttributeSpec demo_spec() {
    AttributeSpec spec;
    spec.name = "gender";
    spec.values = {"male", "female"};
    spec.prior = Distribution::uniform(2);
    spec.beta = 0.1;
    spec.seed_words["male"] = {"man", "he"};
    spec.seed_words["female"] = {"woman", "she"};
    return spec;
}

Vocabulary demo_vocab() {
    return Vocabulary::from_tokens({"<bos>", "<eos>", "<unk>", "man", "he", "woman", "she", "x", "y"});
}

}  // namespace

TEST_CASE("pca axis selection and sign rule") {
    Tensor a = Tensor::vec({1, 0}), b = Tensor::vec({-1, 0});
    Tensor dir = pca_first_component({a, b});
    CHECK(dir[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(dir[1] == doctest::Approx(0.0).epsilon(1e-9));

    Tensor c = pca_first_component({Tensor::vec({2, 1}), Tensor::vec({4, 2}), Tensor::vec({6, 3})});
    CHECK(c[0] == doctest::Approx(2.0 / std::sqrt(5.0)).epsilon(1e-6));
    CHECK(c[1] == doctest::Approx(1.0 / std::sqrt(5.0)).epsilon(1e-6));

    CHECK_THROWS_WITH_AS(pca_first_component({a, a, a}), "degenerate set", std::invalid_argument);
    CHECK_THROWS_AS(pca_first_component({a}), std::invalid_argument);
}

TEST_CASE("pca matches a dense eigensolver on random clouds") {
    auto rng = substream(31);
    for (int iter = 0; iter < 5; ++iter) {
        int d = 6 + static_cast<int>(rng() % 6);
        int n = 16 + static_cast<int>(rng() % 8);
        std::vector<Tensor> cloud;
        for (int s = 0; s < n; ++s) {
            Tensor v({d});
            for (int i = 0; i < d; ++i) v[static_cast<std::size_t>(i)] = static_cast<float>(normal01(rng));
            // stretch one direction so the eigengap is wide
            v[0] = static_cast<float>(v[0] * 8.0);
            cloud.push_back(std::move(v));
        }
        Tensor got = pca_first_component(cloud);
        std::vector<double> want = top_eigenvector(cloud);
        double dot = 0.0, norm = 0.0;
        for (int i = 0; i < d; ++i) {
            dot += static_cast<double>(got[static_cast<std::size_t>(i)]) * want[static_cast<std::size_t>(i)];
            norm += static_cast<double>(got[static_cast<std::size_t>(i)]) * got[static_cast<std::size_t>(i)];
        }
        CHECK(std::abs(dot) / std::sqrt(norm) >= 1.0 - 1e-8);
    }
}

TEST_CASE("build_directions is deterministic and separates orthogonal clusters") {
    Vocabulary v = demo_vocab();
    AttributeSpec spec = demo_spec();
    int d = 8;
    Tensor emb({v.size(), d});
    auto rng = substream(32);
    for (auto& x : emb.data) x = static_cast<float>(normal01(rng) * 0.01);
    // male seeds spread along axis 0, female seeds along axis 4
    emb.at(v.lookup("man"), 0) = 1.0f;
    emb.at(v.lookup("he"), 0) = -1.2f;
    emb.at(v.lookup("woman"), 4) = 1.0f;
    emb.at(v.lookup("she"), 4) = -0.8f;

    DirectionSet d1 = build_directions(spec, emb, v);
    DirectionSet d2 = build_directions(spec, emb, v);
    CHECK(d1.dirs[0].data == d2.dirs[0].data);
    CHECK(d1.dirs[1].data == d2.dirs[1].data);
    for (const auto& dir : d1.dirs) {
        double norm = 0.0;
        for (float x : dir.data) norm += static_cast<double>(x) * x;
        CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-6));
    }
    double cos01 = 0.0;
    for (int i = 0; i < d; ++i)
        cos01 += static_cast<double>(d1.dirs[0][static_cast<std::size_t>(i)]) * d1.dirs[1][static_cast<std::size_t>(i)];
    CHECK(std::abs(cos01) <= 0.1);
}

TEST_CASE("classify_token examples") {
    AttributeSpec spec = demo_spec();
    DirectionSet dirs;
    dirs.dirs = {Tensor::vec({1, 0, 0}), Tensor::vec({0, 1, 0})};

    // equal cosine to both directions -> uniform
    Distribution eq = classify_token(dirs, spec, Tensor::vec({1, 1, 0}));
    CHECK(eq[0] == doctest::Approx(0.5).epsilon(1e-12));

    // cosines (1, 0) with beta 0.1 -> softmax(10, 0)
    Distribution sharp = classify_token(dirs, spec, Tensor::vec({1, 0, 0}));
    CHECK(sharp[0] == doctest::Approx(0.9999546).epsilon(1e-6));
    CHECK(sharp[1] == doctest::Approx(0.0000454).epsilon(1e-2));

    // huge beta flattens to uniform
    AttributeSpec flat = spec;
    flat.beta = 1e6;
    Distribution f = classify_token(dirs, flat, Tensor::vec({1, 0, 0}));
    CHECK(f[0] == doctest::Approx(0.5).epsilon(1e-6));

    // positive rescaling leaves the cosine unchanged (power-of-two: bit-exact)
    Distribution s1 = classify_token(dirs, spec, Tensor::vec({0.3f, 0.2f, 0.1f}));
    Distribution s2 = classify_token(dirs, spec, Tensor::vec({0.3f * 4, 0.2f * 4, 0.1f * 4}));
    CHECK(s1[0] == s2[0]);
    Distribution s3 = classify_token(dirs, spec, Tensor::vec({3.0f, 2.0f, 1.0f}));
    CHECK(s1[0] == doctest::Approx(s3[0]).epsilon(1e-6));

    CHECK_THROWS_WITH_AS(classify_token(dirs, spec, Tensor::vec({0, 0, 0})),
                         "undefined cosine (zero embedding)", std::domain_error);

    double total = s1[0] + s1[1];
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("classify_context pooling properties") {
    Vocabulary v = demo_vocab();
    AttributeSpec spec = demo_spec();
    int d = 6;
    Tensor emb({v.size(), d});
    auto rng = substream(33);
    for (auto& x : emb.data) x = static_cast<float>(normal01(rng));
    DirectionSet dirs;
    dirs.dirs = {Tensor::vec({1, 0, 0, 0, 0, 0}), Tensor::vec({0, 1, 0, 0, 0, 0})};

    // single-token pooling equals classify_token of that candidate
    int cand = v.lookup("x");
    Tensor e({d});
    for (int c = 0; c < d; ++c) e[static_cast<std::size_t>(c)] = emb.at(cand, c);
    Distribution via_ctx = classify_context(dirs, spec, {}, cand, emb);
    Distribution via_tok = classify_token(dirs, spec, e);
    CHECK(via_ctx[0] == doctest::Approx(via_tok[0]).epsilon(1e-12));

    // pooling is order invariant
    std::vector<int> seq = {3, 5, 7, 4};
    std::vector<int> perm = {7, 4, 3, 5};
    Distribution a = classify_context(dirs, spec, seq, cand, emb);
    Distribution b = classify_context(dirs, spec, perm, cand, emb);
    CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-12));

    // hand pooling agrees
    std::vector<double> pooled(static_cast<std::size_t>(d), 0.0);
    for (int id : seq)
        for (int c = 0; c < d; ++c) pooled[static_cast<std::size_t>(c)] += emb.at(id, c);
    for (int c = 0; c < d; ++c) pooled[static_cast<std::size_t>(c)] += emb.at(cand, c);
    Tensor pf({d});
    for (int c = 0; c < d; ++c)
        pf[static_cast<std::size_t>(c)] = static_cast<float>(pooled[static_cast<std::size_t>(c)] / 5.0);
    Distribution hand = classify_token(dirs, spec, pf);
    CHECK(a[0] == doctest::Approx(hand[0]).epsilon(1e-6));
}

TEST_CASE("attribute_conditioned_dist tilts the frequency table") {
    AttributeSpec spec = demo_spec();
    DirectionSet dirs;
    dirs.dirs = {Tensor::vec({1, 0}), Tensor::vec({0, 1})};

    // uniform classifier -> returns the frequency table unchanged
    Tensor emb_uniform({3, 2});
    for (int r = 0; r < 3; ++r) {
        emb_uniform.at(r, 0) = 1.0f;
        emb_uniform.at(r, 1) = 1.0f;
    }
    Tensor freq({3});
    freq[0] = 0.5f;
    freq[1] = 0.3f;
    freq[2] = 0.2f;
    Distribution same = attribute_conditioned_dist(dirs, spec, freq, emb_uniform, 0);
    CHECK(same[0] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(same[1] == doctest::Approx(0.3).epsilon(1e-6));

    // hand-computed tilt on two tokens
    Tensor emb2({2, 2});
    emb2.at(0, 0) = 1.0f;  // aligned with value 0
    emb2.at(1, 1) = 1.0f;  // aligned with value 1
    AttributeSpec wide = spec;
    wide.beta = 1.0;
    Tensor freq2({2});
    freq2[0] = 0.5f;
    freq2[1] = 0.5f;
    Distribution tilt = attribute_conditioned_dist(dirs, wide, freq2, emb2, 0);
    // p(a=0|token0) = e/(e + e^-... ) hand arithmetic: cos = (1,0) vs (0,1)
    double p0 = std::exp(1.0) / (std::exp(1.0) + 1.0);
    double p1 = 1.0 / (std::exp(1.0) + 1.0);
    double expect0 = p0 * 0.5 / (p0 * 0.5 + p1 * 0.5);
    CHECK(tilt[0] == doctest::Approx(expect0).epsilon(1e-9));
    double sum = tilt[0] + tilt[1];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("toxicity head trains to a separable oracle and is deterministic") {
    // synthetic marker corpus on a random frozen backbone
    ModelConfig cfg = testutil::tiny_config(9);
    ParamStore store = testutil::random_params(cfg, 41);
    auto rng = substream(42);
    std::vector<std::vector<int>> sents;
    std::vector<int> labels;
    for (int i = 0; i < 240; ++i) {
        std::vector<int> s = {0};
        int len = 3 + static_cast<int>(rng() % 3);
        for (int t = 0; t < len; ++t) s.push_back(3 + static_cast<int>(rng() % 4));  // ids 3..6
        bool toxic = (rng() % 2) == 0;
        if (toxic) s[1 + static_cast<int>(rng() % len)] = 7;  // planted marker id
        s.push_back(1);
        sents.push_back(std::move(s));
        labels.push_back(toxic ? 1 : 0);
    }
    HeadHyper hyper;
    hyper.steps = 700;
    hyper.lr = 5e-3;
    hyper.seed = 9;
    ToxicityHead head = train_toxicity_head(cfg, store, sents, labels, hyper);
    CHECK(head.holdout_acc >= 0.9);

    ToxicityHead again = train_toxicity_head(cfg, store, sents, labels, hyper);
    CHECK(head.w1.data == again.w1.data);
    CHECK(head.b2.data == again.b2.data);

    std::vector<int> ones(labels.size(), 1);
    CHECK_THROWS_AS(train_toxicity_head(cfg, store, sents, ones, hyper), std::invalid_argument);

    // zero-weight head is maximally uncertain
    ToxicityHead zero;
    zero.w1 = Tensor::zeros({cfg.d_model, ToxicityHead::kHidden});
    zero.b1 = Tensor::zeros({ToxicityHead::kHidden});
    zero.w2 = Tensor::zeros({ToxicityHead::kHidden, 2});
    zero.b2 = Tensor::zeros({2});
    Tensor hidden({4, cfg.d_model});
    for (auto& x : hidden.data) x = 0.5f;
    Distribution p = toxicity_prob(zero, hidden, 4);
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-9));

    // a sentence with the planted marker scores toxic under the trained head
    std::vector<int> toxic_sent = {0, 4, 7, 5, 1};
    Tensor pooled = pooled_hidden(cfg, ParamView(store), toxic_sent);
    CHECK(head_prob(head, pooled)[1] > 0.5);
}
