#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "rectify/checkpoint.hpp"
#include "rectify/report.hpp"
#include "rectify/rng.hpp"
#include "rectify/train.hpp"
#include "test_util.hpp"

using namespace rectify;

TEST_CASE("toxicity metric aggregation") {
    CHECK(toxicity_metrics({{0.0, 0.0}, {0.0}}).avg_max == 0.0);
    CHECK(toxicity_metrics({{0.0, 0.0}, {0.0}}).prob == 0.0);

    ToxicityMetrics one = toxicity_metrics({{0.2, 0.7, 0.4}});
    CHECK(one.avg_max == doctest::Approx(0.7));
    CHECK(one.prob == 1.0);

    // adding generations never lowers a prompt's max
    std::vector<std::vector<double>> base = {{0.3, 0.2}, {0.1, 0.4}};
    ToxicityMetrics m1 = toxicity_metrics(base);
    base[0].push_back(0.9);
    base[1].push_back(0.55);
    ToxicityMetrics m2 = toxicity_metrics(base);
    CHECK(m2.prob >= m1.prob);
    CHECK(m2.avg_max >= m1.avg_max);

    CHECK_THROWS_AS(toxicity_metrics({}), std::invalid_argument);
}

TEST_CASE("global bias difference") {
    std::vector<std::vector<double>> a = {{0.5, 0.7}, {0.2}};
    CHECK(global_bias_diff(a, a) == 0.0);

    std::vector<std::vector<double>> ones = {{1.0}, {1.0}};
    std::vector<std::vector<double>> zeros = {{0.0}, {0.0}};
    CHECK(global_bias_diff(ones, zeros) == doctest::Approx(1.0));

    CHECK_THROWS_AS(global_bias_diff(ones, {{0.0}}), std::invalid_argument);

    // the per-pair alternative upper-bounds the difference of means
    auto rng = substream(71);
    for (int iter = 0; iter < 20; ++iter) {
        std::vector<std::vector<double>> s0(4), s1(4);
        for (int m = 0; m < 4; ++m)
            for (int n = 0; n < 3; ++n) {
                s0[static_cast<std::size_t>(m)].push_back(uniform01(rng));
                s1[static_cast<std::size_t>(m)].push_back(uniform01(rng));
            }
        CHECK(global_bias_diff(s0, s1, true) >= global_bias_diff(s0, s1, false) - 1e-12);
    }
}

TEST_CASE("quadratic mean aggregates match the published cells") {
    CHECK(quadratic_mean3(3.74, 2.84, 1.02) == doctest::Approx(2.77).epsilon(0.004));
    CHECK(quadratic_mean3(2.28, 1.45, 0.89) == doctest::Approx(1.64).epsilon(0.004));
    CHECK(norm2(15.24, 18.21) == doctest::Approx(23.75).epsilon(0.001));
    CHECK(norm2(12.66, 28.25) == doctest::Approx(30.96).epsilon(0.001));
    CHECK(norm2(10.89, 8.64) == doctest::Approx(13.90).epsilon(0.001));
    CHECK(quadratic_mean3(0, 0, 0) == 0.0);
}

TEST_CASE("teacher-forced hellinger is zero for identical prompts") {
    ModelConfig cfg = testutil::tiny_config(9);
    ParamStore store = testutil::random_params(cfg, 81);
    std::vector<int> c0 = {0, 3, 5};
    std::vector<int> cont = {2, 6, 4};
    std::vector<double> hs = pairwise_step_hellinger(cfg, ParamView(store), c0, c0, cont, 8);
    for (double h : hs) CHECK(h == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("zeroing the demographic embeddings removes local bias") {
    ModelConfig cfg = testutil::tiny_config(9);
    ParamStore store = testutil::random_params(cfg, 82);
    // prompts differ at position 1 (ids 3 vs 4); zero both embeddings
    Tensor& emb = store.at_mut("tok_emb");
    for (int c = 0; c < cfg.d_model; ++c) {
        emb.at(3, c) = 0.0f;
        emb.at(4, c) = 0.0f;
    }
    std::vector<int> c0 = {0, 3, 5}, c1 = {0, 4, 5};
    std::vector<int> cont = {2, 6};
    std::vector<double> hs = pairwise_step_hellinger(cfg, ParamView(store), c0, c1, cont, 8);
    for (double h : hs) CHECK(h <= 1e-6);

    SamplingConfig sc;
    sc.top_k = cfg.vocab_size;
    sc.top_p = 1.0;
    sc.temperature = 1.0;
    sc.max_new_tokens = 4;
    sc.eos_id = 1;
    double local = local_bias_hellinger(cfg, ParamView(store), {{c0, c1}}, 8, 3, sc, 4);
    CHECK(local <= 1e-4);  // x100 scale
}

TEST_CASE("prompt pair file round trip") {
    std::string path = (std::filesystem::temp_directory_path() / "pairs_rt.tsv").string();
    std::vector<PromptPair> pairs = {{"gender", "the man was", "the woman was"},
                                     {"gender", "he worked as", "she worked as"}};
    save_prompt_pairs(pairs, path);
    auto loaded = load_prompt_pairs(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].attribute == "gender");
    CHECK(loaded[0].c0 == "the man was");
    CHECK(loaded[1].c1 == "she worked as");
}

TEST_CASE("report write/read round trip keeps every key") {
    EvalReport r;
    r.mode = "uddia-b";
    r.seed = 42;
    r.m_pairs = 3;
    r.n_gens = 5;
    r.horizon = 16;
    r.ppl = 12.3456;
    r.ppl_median = 11.5;
    r.avg_max_tox = 0.25;
    r.tox_prob = 0.5;
    r.tox_prob_group0 = 0.6;
    r.tox_prob_group1 = 0.4;
    r.tox_prob_gap = 0.2;
    r.global_diff["toxicity"] = 0.05;
    r.global_diff["sentiment"] = 0.15;
    r.q_global = std::sqrt((0.05 * 0.05 + 0.15 * 0.15) / 2);
    r.local_hellinger_x100 = 9.5;
    r.q_pairs = norm2(9.5, 12.3456);
    r.config_echo = "{}";
    std::string path = (std::filesystem::temp_directory_path() / "report_rt.txt").string();
    write_report(r, path);
    EvalReport q = read_report(path);
    CHECK(q.mode == r.mode);
    CHECK(q.seed == r.seed);
    CHECK(q.ppl == doctest::Approx(r.ppl).epsilon(1e-5));
    CHECK(q.global_diff.at("sentiment") == doctest::Approx(0.15));
    // Q fields recompute from their own components
    double qg = 0.0;
    for (const auto& [k, v] : q.global_diff) qg += v * v;
    CHECK(std::sqrt(qg / static_cast<double>(q.global_diff.size())) ==
          doctest::Approx(q.q_global).epsilon(1e-5));
    CHECK(norm2(q.local_hellinger_x100, q.ppl) == doctest::Approx(q.q_pairs).epsilon(1e-5));
}

TEST_CASE("full_report is deterministic and internally consistent") {
    // tiny end-to-end: random backbone, trivial heads
    ModelConfig cfg = testutil::tiny_config(11);
    ParamStore store = testutil::random_params(cfg, 83);
    Vocabulary vocab = Vocabulary::from_tokens(
        {"<bos>", "<eos>", "<unk>", "the", "man", "woman", "was", "a", "b", "c", "d"});

    auto rng = substream(84);
    ToxicityHead head;
    head.w1 = Tensor({cfg.d_model, ToxicityHead::kHidden});
    head.b1 = Tensor({ToxicityHead::kHidden});
    head.w2 = Tensor({ToxicityHead::kHidden, 2});
    head.b2 = Tensor({2});
    for (auto& x : head.w1.data) x = static_cast<float>(normal01(rng) * 0.1);
    for (auto& x : head.w2.data) x = static_cast<float>(normal01(rng) * 0.1);

    EvalInputs in;
    in.cfg = cfg;
    in.base = &store;
    in.vocab = &vocab;
    in.pairs = {{"gender", "the man was", "the woman was"},
                {"gender", "the man was a", "the woman was a"}};
    in.eval_head = &head;
    in.ecfg.mode = "baseline";
    in.ecfg.gens_per_prompt = 2;
    in.ecfg.horizon = 6;
    in.ecfg.seed = 7;
    in.ecfg.jobs = 2;
    in.ecfg.sampling.top_k = cfg.vocab_size;
    in.ecfg.sampling.top_p = 0.9;
    in.ecfg.sampling.temperature = 1.0;
    in.ecfg.sampling.max_new_tokens = 5;
    in.ecfg.sampling.eos_id = vocab.eos;
    in.ecfg.redo.th = kInf;
    in.ecfg.redo.t0 = cfg.n_layers;
    in.ecfg.config_echo = "{}";

    EvalReport a = full_report(in);
    in.ecfg.jobs = 1;  // jobs must not change results
    EvalReport b = full_report(in);
    CHECK(a.ppl == b.ppl);
    CHECK(a.tox_prob == b.tox_prob);
    CHECK(a.local_hellinger_x100 == b.local_hellinger_x100);
    CHECK(a.q_pairs == doctest::Approx(norm2(a.local_hellinger_x100, a.ppl)).epsilon(1e-12));
    CHECK(a.tox_prob_gap == doctest::Approx(std::abs(a.tox_prob_group0 - a.tox_prob_group1)).epsilon(1e-12));
    CHECK(a.avg_max_tox >= 0.0);
    CHECK(a.avg_max_tox <= 1.0);
}
