#include <doctest.h>

#include <cmath>

#include "rectify/checkpoint.hpp"
#include "rectify/generate.hpp"
#include "rectify/rng.hpp"
#include "rectify/train.hpp"
#include "test_util.hpp"

using namespace rectify;

namespace {

// Small trained fixture shared across the controller tests: a 2-layer model
// on a three-sentence toy corpus, trained once per binary run.
struct Fixture {
    Vocabulary vocab;
    ModelConfig cfg;
    Checkpoint ckpt;
    std::vector<DebiasAttribute> debias;

    Fixture()
        : vocab(Vocabulary::from_tokens({"<bos>", "<eos>", "<unk>", "the", "man", "woman", "worked",
                                         "as", "a", "pilot", "nurse", "was", "brave", "timid"})) {
        cfg = testutil::tiny_config(vocab.size());
        std::vector<std::vector<int>> corpus;
        auto add = [&](const std::string& s) {
            std::vector<int> ids = tokenize(s, vocab);
            ids.push_back(vocab.eos);
            corpus.push_back(std::move(ids));
        };
        for (int i = 0; i < 8; ++i) {
            add("the man worked as a pilot");
            add("the woman worked as a nurse");
            add("the man was brave");
            add("the woman was timid");
            add("the man worked as a nurse");  // some crossover mass
            add("the woman worked as a pilot");
        }
        TrainHyper hyper;
        hyper.steps = 260;
        hyper.batch = 8;
        hyper.lr = 3e-3;
        hyper.seed = 3;
        Tensor freq = token_frequency_table(corpus, cfg.vocab_size, vocab.bos);
        ckpt = train_lm(corpus, cfg, hyper, "fixture", freq);

        AttributeSpec spec;
        spec.name = "gender";
        spec.values = {"male", "female"};
        spec.prior = Distribution::uniform(2);
        spec.beta = 0.1;
        spec.seed_words["male"] = {"man", "he"};
        spec.seed_words["female"] = {"woman", "she"};
        // "he"/"she" are absent from this tiny vocab; restrict to present words
        spec.seed_words["male"] = {"man", "pilot"};
        spec.seed_words["female"] = {"woman", "nurse"};
        debias.push_back(prepare_debias_attribute(spec, ckpt.params.at("tok_emb"),
                                                  ckpt.token_freq, vocab));
    }
};

const Fixture& fixture() {
    static Fixture f;
    return f;
}

SamplingConfig sampling_for(const Fixture& f, int len = 8) {
    SamplingConfig sc;
    sc.top_k = f.cfg.vocab_size;
    sc.top_p = 0.9;
    sc.temperature = 0.8;
    sc.max_new_tokens = len;
    sc.eos_id = f.vocab.eos;
    return sc;
}

}  // namespace

TEST_CASE("hellinger_gap basics and oracle recomputation") {
    Distribution next = Distribution::unchecked({0.4, 0.3, 0.2, 0.1});
    std::vector<Distribution> same = {next, next};
    HellingerGap g0 = hellinger_gap(next, same);
    CHECK(g0.gap == 0.0);

    std::vector<Distribution> extreme = {next, Distribution({0, 0, 0, 1.0})};
    extreme[1] = Distribution::unchecked({0.0, 0.0, 0.0, 1.0});
    // overlap with next on token 3 only; gap = H(next, e3) - 0
    HellingerGap g1 = hellinger_gap(next, {next, extreme[1]});
    CHECK(g1.per_value[0] == 0.0);
    CHECK(g1.gap == doctest::Approx(std::sqrt(1.0 - std::sqrt(0.1))).epsilon(1e-12));

    auto rng = substream(61);
    for (int iter = 0; iter < 10; ++iter) {
        std::vector<double> p(8), q1(8), q2(8);
        double sp = 0, s1 = 0, s2 = 0;
        for (int i = 0; i < 8; ++i) {
            p[static_cast<std::size_t>(i)] = uniform01(rng) + 1e-3;
            q1[static_cast<std::size_t>(i)] = uniform01(rng) + 1e-3;
            q2[static_cast<std::size_t>(i)] = uniform01(rng) + 1e-3;
            sp += p[static_cast<std::size_t>(i)];
            s1 += q1[static_cast<std::size_t>(i)];
            s2 += q2[static_cast<std::size_t>(i)];
        }
        for (int i = 0; i < 8; ++i) {
            p[static_cast<std::size_t>(i)] /= sp;
            q1[static_cast<std::size_t>(i)] /= s1;
            q2[static_cast<std::size_t>(i)] /= s2;
        }
        Distribution dp = Distribution::unchecked(p);
        std::vector<Distribution> conds = {Distribution::unchecked(q1), Distribution::unchecked(q2)};
        HellingerGap g = hellinger_gap(dp, conds);
        double h1 = hellinger(dp, conds[0]), h2 = hellinger(dp, conds[1]);
        CHECK(std::abs(g.gap - std::abs(h1 - h2)) <= 1e-12);
    }
}

TEST_CASE("optimizer step on the overlay") {
    ParamStore base;
    base.entries["b"] = Tensor::vec({1.0f});
    base.mark_tunable("b");
    BiasOverlay overlay = BiasOverlay::make(base, {"b"});

    InterventionConfig cfg;
    cfg.optimizer = InterventionConfig::Optimizer::Sgd;
    cfg.lr = 0.0;
    std::map<std::string, Tensor> grads{{"b", Tensor::vec({2.0f})}};
    apply_update(overlay, grads, cfg, {"b"});
    CHECK(overlay.values.at("b")[0] == 1.0f);  // zero step is bit-exact

    cfg.lr = 0.1;
    apply_update(overlay, grads, cfg, {"b"});
    CHECK(overlay.values.at("b")[0] == doctest::Approx(0.8f).epsilon(1e-7));

    overlay.reset();
    CHECK(overlay.values.at("b")[0] == 1.0f);
}

TEST_CASE("overlay reset restores the base model bit-exactly") {
    const Fixture& f = fixture();
    BiasOverlay overlay = BiasOverlay::make(f.ckpt.params, bias_term_names(f.cfg, f.cfg.n_layers));
    std::vector<int> prompt = tokenize("the man worked as a", f.vocab);

    ForwardOut before = forward_logits(f.cfg, ParamView(f.ckpt.params), prompt);
    for (auto& [name, t] : overlay.values)
        for (auto& x : t.data) x += 0.05f;
    ForwardOut tweaked = forward_logits(f.cfg, overlay.view(f.ckpt.params), prompt);
    CHECK(tweaked.logits != before.logits);
    overlay.reset();
    ForwardOut after = forward_logits(f.cfg, overlay.view(f.ckpt.params), prompt);
    CHECK(after.logits == before.logits);
}

TEST_CASE("no-intervention run is bit-identical to plain sampling") {
    const Fixture& f = fixture();
    SamplingConfig sc = sampling_for(f);
    InterventionConfig icfg;  // no taus -> infinity, detox off
    RedoConfig redo;
    redo.th = kInf;
    redo.t0 = f.cfg.n_layers;
    redo.reset = ResetScope::PerPrompt;

    for (std::uint64_t p = 0; p < 10; ++p) {
        std::vector<int> prompt = tokenize("the man worked as a", f.vocab);
        GenerationRecord rec = redo_generate(f.cfg, f.ckpt.params, f.debias, nullptr, icfg, redo,
                                             sc, prompt, nullptr, 99, p);
        auto rng = substream(99, p, 0);
        std::vector<int> plain = sample_continuation(f.cfg, ParamView(f.ckpt.params), prompt, sc, rng);
        CHECK(rec.passes.size() == 1);
        CHECK(rec.chosen_tokens() == plain);
    }
}

TEST_CASE("redo contract: pass counts, monotone tuned sets, argmin selection") {
    const Fixture& f = fixture();
    SamplingConfig sc = sampling_for(f);
    InterventionConfig icfg;
    icfg.tau["gender"] = 0.05;
    icfg.optimizer = InterventionConfig::Optimizer::Adam;
    icfg.lr = 3e-3;

    std::vector<int> prompt = tokenize("the woman worked as a", f.vocab);

    RedoConfig one;
    one.th = kInf;
    one.t0 = 2;
    one.dt = 1;
    one.reset = ResetScope::PerStep;
    GenerationRecord r1 = redo_generate(f.cfg, f.ckpt.params, f.debias, nullptr, icfg, one, sc,
                                        prompt, nullptr, 5, 0);
    CHECK(r1.passes.size() == 1);
    CHECK(r1.replay_count == 0);

    RedoConfig hard;
    hard.th = 0.0;  // unreachable: ppl is always > 0
    hard.t0 = 2;
    hard.dt = 1;
    hard.reset = ResetScope::PerStep;
    GenerationRecord r2 = redo_generate(f.cfg, f.ckpt.params, f.debias, nullptr, icfg, hard, sc,
                                        prompt, nullptr, 5, 0);
    CHECK(r2.passes.size() == 2);
    CHECK(r2.replay_count == 1);
    CHECK(r2.passes[0].active_T == 2);
    CHECK(r2.passes[1].active_T == 1);
    // strictly decreasing tuned sets
    auto s0 = bias_term_names(f.cfg, r2.passes[0].active_T);
    auto s1 = bias_term_names(f.cfg, r2.passes[1].active_T);
    CHECK(s1.size() < s0.size());
    for (const auto& name : s1) CHECK(s0.count(name) == 1);
    // argmin-PPL selection
    int best = r2.passes[0].ppl <= r2.passes[1].ppl ? 0 : 1;
    CHECK(r2.chosen == best);
    CHECK(r2.final_ppl == r2.passes[static_cast<std::size_t>(best)].ppl);
    CHECK(r2.replay_count <= (hard.t0 + hard.dt - 1) / hard.dt);

    // reachable threshold stops at the first satisfying pass
    RedoConfig easy = hard;
    easy.th = 1e9;
    GenerationRecord r3 = redo_generate(f.cfg, f.ckpt.params, f.debias, nullptr, icfg, easy, sc,
                                        prompt, nullptr, 5, 0);
    CHECK(r3.passes.size() == 1);
    CHECK(r3.final_ppl < easy.th);
}

TEST_CASE("backbone stays frozen through interventions") {
    const Fixture& f = fixture();
    std::set<std::string> bias = bias_term_names(f.cfg, f.cfg.n_layers);
    std::string before = sha256_tensors(f.ckpt.params, bias);
    std::string all_before = sha256_tensors(f.ckpt.params, {});

    SamplingConfig sc = sampling_for(f);
    InterventionConfig icfg;
    icfg.tau["gender"] = 0.01;  // fire often
    icfg.optimizer = InterventionConfig::Optimizer::Adam;
    icfg.lr = 3e-3;
    icfg.max_opt_iters = 3;
    RedoConfig redo;
    redo.th = kInf;
    redo.t0 = f.cfg.n_layers;
    redo.reset = ResetScope::PerPrompt;

    std::vector<int> prompt = tokenize("the man worked as a", f.vocab);
    GenerationRecord rec = redo_generate(f.cfg, f.ckpt.params, f.debias, nullptr, icfg, redo, sc,
                                         prompt, nullptr, 7, 0);
    bool any_iters = false;
    for (const auto& e : rec.trace) any_iters = any_iters || e.iters > 0;
    CHECK(any_iters);

    CHECK(sha256_tensors(f.ckpt.params, bias) == before);
    CHECK(sha256_tensors(f.ckpt.params, {}) == all_before);
}

TEST_CASE("trigger soundness and per-step reset") {
    const Fixture& f = fixture();
    SamplingConfig sc = sampling_for(f);
    InterventionConfig icfg;
    icfg.tau["gender"] = 0.12;
    icfg.optimizer = InterventionConfig::Optimizer::Adam;
    icfg.lr = 3e-3;
    RedoConfig redo;
    redo.th = kInf;
    redo.t0 = f.cfg.n_layers;
    redo.reset = ResetScope::PerPrompt;

    std::vector<int> prompt = tokenize("the man worked as a", f.vocab);
    std::vector<int> paired = tokenize("the woman worked as a", f.vocab);
    GenerationRecord rec = redo_generate(f.cfg, f.ckpt.params, f.debias, nullptr, icfg, redo, sc,
                                         prompt, &paired, 11, 0);
    CHECK(!rec.trace.empty());
    CHECK(rec.pair_hellinger.size() >= 1);
    int descended = 0, intervened = 0;
    for (const auto& e : rec.trace) {
        if (e.attr != "gender") continue;
        if (e.iters == 0) CHECK(e.gap <= icfg.tau.at("gender"));
        if (e.iters > 0 && !e.aborted) {
            ++intervened;
            if (e.loss_after <= e.loss_before + 1e-9) ++descended;
        }
    }
    if (intervened > 0) CHECK(descended * 10 >= intervened * 8);
}

TEST_CASE("trace line format is stable") {
    StepTraceEntry e;
    e.pass = 1;
    e.t = 4;
    e.attr = "gender";
    e.hvals = {0.25, 0.125};
    e.gap = 0.125;
    e.iters = 2;
    e.loss_before = 0.5;
    e.loss_after = 0.25;
    CHECK(format_trace_line(e) ==
          "pass=1 t=4 attr=gender H=0.25,0.125 gap=0.125 iters=2 loss_before=0.5 loss_after=0.25");
}
