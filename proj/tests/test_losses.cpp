#include <doctest.h>

#include <cmath>

#include "rectify/losses.hpp"
#include "rectify/mi_oracle.hpp"
#include "rectify/rng.hpp"
#include "rectify/selftest.hpp"
#include "rectify/toxicity_head.hpp"
#include "reference_model.hpp"
#include "test_util.hpp"

using namespace rectify;

TEST_CASE("token_level_loss examples") {
    // classifier equal to the prior at every token -> zero loss
    Distribution next = Distribution::unchecked({0.2, 0.5, 0.3});
    std::vector<Distribution> rows(3, Distribution({0.5, 0.5}));
    Distribution prior({0.5, 0.5});
    CHECK(token_level_loss(next, rows, prior) == doctest::Approx(0.0).epsilon(1e-15));

    // deterministic classifier, uniform everything -> ln 2
    Distribution half = Distribution::unchecked({0.5, 0.5});
    std::vector<Distribution> hard = {Distribution({1.0, 0.0}), Distribution({0.0, 1.0})};
    CHECK(token_level_loss(half, hard, prior) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    CHECK_THROWS_WITH_AS(token_level_loss(half, hard, Distribution({1.0, 0.0})), "degenerate prior",
                         std::domain_error);
    CHECK(token_level_loss(half, hard, prior) >= 0.0);
}

TEST_CASE("context_loss examples") {
    Distribution next = Distribution::unchecked({1.0});
    std::vector<Distribution> ctx = {Distribution({0.9, 0.1})};
    std::vector<Distribution> tok = {Distribution({0.5, 0.5})};
    double expect = 0.9 * std::log(0.9 / 0.5) + 0.1 * std::log(0.1 / 0.5);
    CHECK(context_loss(next, ctx, tok) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(context_loss(next, ctx, tok) == doctest::Approx(0.3681).epsilon(1e-3));

    CHECK(context_loss(next, tok, tok) == doctest::Approx(0.0).epsilon(1e-15));

    std::vector<Distribution> zero_support = {Distribution({1.0, 0.0})};
    std::vector<Distribution> ctx_bad = {Distribution({0.5, 0.5})};
    CHECK_THROWS_AS(context_loss(next, ctx_bad, zero_support), std::domain_error);
}

TEST_CASE("combined_loss bookkeeping") {
    std::map<std::string, RectificationLoss::Component> parts;
    parts["gender"] = {0.25, 0.5};
    std::map<std::string, double> weights{{"gender", 1.0}};

    RectificationLoss one = combined_loss(parts, weights, 0.0, 0.0);
    CHECK(one.total == doctest::Approx(0.75).epsilon(1e-12));

    weights["gender"] = 0.0;
    RectificationLoss zero = combined_loss(parts, weights, 0.0, 0.0);
    CHECK(zero.total == 0.0);

    weights["gender"] = 0.05;
    RectificationLoss mixed = combined_loss(parts, weights, 0.7, 1.0);
    CHECK(mixed.total == doctest::Approx(0.7 + 0.05 * 0.75).epsilon(1e-12));
    mixed.total += 1.0;  // tampering must be caught
    CHECK_THROWS_AS(mixed.check(), std::logic_error);

    CHECK_THROWS_AS(combined_loss(parts, {{"gender", -1.0}}, 0.0, 0.0), std::invalid_argument);
}

TEST_CASE("mutual information brute force") {
    // product joint -> zero
    Joint prod = {{0.2 * 0.5, 0.2 * 0.5}, {0.8 * 0.5, 0.8 * 0.5}};
    CHECK(mutual_info_bruteforce(prod) == doctest::Approx(0.0).epsilon(1e-15));
    // perfectly correlated -> ln 2
    Joint diag = {{0.5, 0.0}, {0.0, 0.5}};
    CHECK(mutual_info_bruteforce(diag) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    Joint bad = {{0.5, 0.2}, {0.1, 0.1}};
    CHECK_THROWS_AS(mutual_info_bruteforce(bad), std::invalid_argument);
}

TEST_CASE("oracle suites stay green") {
    auto lemma = selfcheck::lemma1_suite(2024, 100);
    CHECK(lemma.failed == 0);
    auto bound = selfcheck::upper_bound_suite(2024, 100);
    CHECK(bound.failed == 0);
    auto cond = selfcheck::conditional_decomposition_suite(2024, 100);
    CHECK(cond.failed == 0);
    auto thm = selfcheck::theorem1_suite(2024, 100);
    CHECK(thm.failed == 0);
}

TEST_CASE("detox loss values and gradient against the 64-bit oracle") {
    ModelConfig cfg = testutil::tiny_config(9);
    ParamStore store = testutil::random_params(cfg, 51);
    std::set<std::string> tunable = bias_term_names(cfg, cfg.n_layers);
    for (const auto& name : tunable) store.mark_tunable(name);

    auto rng = substream(52);
    ToxicityHead head;
    head.w1 = Tensor({cfg.d_model, ToxicityHead::kHidden});
    head.b1 = Tensor({ToxicityHead::kHidden});
    head.w2 = Tensor({ToxicityHead::kHidden, 2});
    head.b2 = Tensor({2});
    for (auto& x : head.w1.data) x = static_cast<float>(normal01(rng) * 0.2);
    for (auto& x : head.w2.data) x = static_cast<float>(normal01(rng) * 0.2);

    std::vector<int> ids = {0, 3, 7, 5};

    // value: zero-weight head -> ln 2; near-certain head -> near zero
    ToxicityHead zero = head;
    for (auto& x : zero.w1.data) x = 0.0f;
    for (auto& x : zero.w2.data) x = 0.0f;
    {
        Tape tape;
        TapeForward fwd = forward_tape(tape, cfg, ParamView(store), ids, tunable);
        auto loss = detox_loss_node(tape, zero, fwd.final_hidden, static_cast<int>(ids.size()));
        CHECK(tape.val(loss)[0] == doctest::Approx(std::log(2.0)).epsilon(1e-6));
    }
    ToxicityHead certain = zero;
    certain.b2[0] = 25.0f;  // p(non-toxic) ~ 1
    {
        Tape tape;
        TapeForward fwd = forward_tape(tape, cfg, ParamView(store), ids, tunable);
        auto loss = detox_loss_node(tape, certain, fwd.final_hidden, static_cast<int>(ids.size()));
        CHECK(tape.val(loss)[0] <= 2e-6);
    }

    // gradient against central differences of the double-precision shadow
    Tape tape;
    TapeForward fwd = forward_tape(tape, cfg, ParamView(store), ids, tunable);
    auto loss = detox_loss_node(tape, head, fwd.final_hidden, static_cast<int>(ids.size()));
    auto grads = grad_selected(tape, loss);

    auto loss_fn = [&](const ParamStore& s) {
        return refmodel::detox_loss(cfg, ParamView(s), head, ids);
    };
    auto fd = finite_diff_grad(loss_fn, store, 1e-3);
    int checked = 0;
    for (const auto& [name, g] : grads) {
        const Tensor& f = fd.at(name);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            double denom = std::max(std::abs(static_cast<double>(f[i])), 1e-6);
            CHECK(std::abs(static_cast<double>(g[i]) - f[i]) / denom <= 1e-3);
            ++checked;
        }
    }
    CHECK(checked >= 100);
}

TEST_CASE("loss tape builders agree with the plain evaluations") {
    ModelConfig cfg = testutil::tiny_config(7);
    ParamStore store = testutil::random_params(cfg, 53);
    std::set<std::string> tunable = bias_term_names(cfg, cfg.n_layers);
    for (const auto& name : tunable) store.mark_tunable(name);
    std::vector<int> ids = {0, 2, 5};

    auto rng = substream(54);
    std::vector<Distribution> tok_rows, ctx_rows;
    for (int x = 0; x < cfg.vocab_size; ++x) {
        double a = 0.1 + 0.8 * uniform01(rng);
        double b = 0.1 + 0.8 * uniform01(rng);
        tok_rows.push_back(Distribution({a, 1.0 - a}));
        ctx_rows.push_back(Distribution({b, 1.0 - b}));
    }
    Distribution prior({0.5, 0.5});

    Tape tape;
    TapeForward fwd = forward_tape(tape, cfg, ParamView(store), ids, tunable);
    auto probs = tape.softmax_rows(fwd.logits);
    auto lt = token_level_loss_node(tape, probs, tok_rows, prior);
    auto lc = context_loss_node(tape, probs, ctx_rows, tok_rows);

    ForwardOut plain = forward_logits(cfg, ParamView(store), ids);
    Distribution next = softmax(plain.logits, 1.0);
    CHECK(tape.val(lt)[0] == doctest::Approx(token_level_loss(next, tok_rows, prior)).epsilon(1e-5));
    CHECK(tape.val(lc)[0] == doctest::Approx(context_loss(next, ctx_rows, tok_rows)).epsilon(1e-5));
}
