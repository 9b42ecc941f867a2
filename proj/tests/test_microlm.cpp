#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "rectify/checkpoint.hpp"
#include "rectify/rng.hpp"
#include "rectify/sampler.hpp"
#include "rectify/train.hpp"
#include "rectify/vocab.hpp"
#include "reference_model.hpp"
#include "test_util.hpp"

using namespace rectify;

namespace {

Vocabulary demo_vocab() {
    return Vocabulary::from_tokens(
        {"<bos>", "<eos>", "<unk>", "the", "man", "woman", "works", "sleeps", "a", "b", "c"});
}

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("tokenize basics") {
    Vocabulary v = demo_vocab();
    CHECK(tokenize("", v) == std::vector<int>{v.bos});
    std::vector<int> ids = tokenize("The man works", v);
    CHECK(ids == std::vector<int>{v.bos, v.lookup("the"), v.lookup("man"), v.lookup("works")});
    std::vector<int> unk = tokenize("the zzz works", v);
    CHECK(unk[2] == v.unk);
}

TEST_CASE("vocabulary round trip and validation") {
    Vocabulary v = demo_vocab();
    std::string path = tmp_path("vocab_rt.txt");
    v.save(path);
    Vocabulary v2 = Vocabulary::load(path);
    CHECK(v2.tokens == v.tokens);
    CHECK(v2.bos == v.bos);
    CHECK_THROWS_AS(Vocabulary::from_tokens({"<bos>", "<eos>", "<unk>", "x", "x"}),
                    std::invalid_argument);
    CHECK_THROWS_AS(Vocabulary::from_tokens({"a", "b"}), std::invalid_argument);
}

TEST_CASE("forward determinism and uniform logits with a zeroed head") {
    ModelConfig cfg = testutil::tiny_config(11);
    ParamStore store = testutil::random_params(cfg, 7);
    std::vector<int> ids = {0, 4, 5, 6};

    ForwardOut a = forward_logits(cfg, ParamView(store), ids);
    ForwardOut b = forward_logits(cfg, ParamView(store), ids);
    CHECK(a.logits == b.logits);

    for (auto& x : store.at_mut("head.w").data) x = 0.0f;
    for (auto& x : store.at_mut("head.b").data) x = 0.0f;
    ForwardOut z = forward_logits(cfg, ParamView(store), ids);
    Distribution d = softmax(z.logits, 1.0);
    for (std::size_t i = 0; i < d.size(); ++i)
        CHECK(d[i] == doctest::Approx(1.0 / cfg.vocab_size).epsilon(1e-9));
}

TEST_CASE("forward matches the independent 64-bit reference within 1e-4") {
    ModelConfig cfg = testutil::tiny_config(13);
    ParamStore store = testutil::random_params(cfg, 8);
    std::vector<int> ids = {0, 3, 9};

    ForwardOut got = forward_logits(cfg, ParamView(store), ids);
    std::vector<double> want = refmodel::logits_last(cfg, ParamView(store), ids);
    for (std::size_t i = 0; i < want.size(); ++i) {
        double denom = std::max(std::abs(want[i]), 1e-3);
        CHECK(std::abs(got.logits[i] - want[i]) / denom <= 1e-4);
    }
}

TEST_CASE("tape forward reproduces the plain forward bit-exactly") {
    ModelConfig cfg = testutil::tiny_config(9);
    ParamStore store = testutil::random_params(cfg, 9);
    std::vector<int> ids = {0, 2, 6, 1};

    ForwardOut plain = forward_logits(cfg, ParamView(store), ids, true);
    Tape tape;
    TapeForward fwd = forward_tape(tape, cfg, ParamView(store), ids, bias_term_names(cfg, cfg.n_layers));
    const Tensor& tl = tape.val(fwd.logits);
    REQUIRE(tl.numel() == plain.logits.size());
    for (std::size_t i = 0; i < plain.logits.size(); ++i) CHECK(tl[i] == plain.logits[i]);
    const Tensor& fh = tape.val(fwd.final_hidden);
    CHECK(fh.data == plain.hiddens.back().data);
}

TEST_CASE("forward is position-causal") {
    ModelConfig cfg = testutil::tiny_config(11);
    ParamStore store = testutil::random_params(cfg, 10);
    std::vector<int> ids = {0, 3, 5, 7, 9};
    Tensor base = forward_all_logits(cfg, ParamView(store), ids);
    std::vector<int> changed = ids;
    changed[3] = 2;  // positions 0..2 must be unaffected
    Tensor after = forward_all_logits(cfg, ParamView(store), changed);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < cfg.vocab_size; ++c) CHECK(base.at(r, c) == after.at(r, c));
    CHECK_THROWS_WITH_AS(forward_logits(cfg, ParamView(store), std::vector<int>(40, 1)),
                         "context overflow", std::runtime_error);
}

TEST_CASE("checkpoint round trip is byte identical") {
    ModelConfig cfg = testutil::tiny_config(9);
    Checkpoint ckpt;
    ckpt.config = cfg;
    ckpt.params = testutil::random_params(cfg, 11);
    ckpt.token_freq = Tensor::full({9}, 1.0f / 9.0f);
    ckpt.corpus_hash = "abc123";
    std::string p1 = tmp_path("ckpt_a.bin"), p2 = tmp_path("ckpt_b.bin");
    save_checkpoint(ckpt, p1);
    Checkpoint loaded = load_checkpoint(p1);
    save_checkpoint(loaded, p2);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    CHECK(loaded.config == cfg);
    CHECK(loaded.corpus_hash == "abc123");
    CHECK(loaded.token_freq.numel() == 9);
    CHECK(loaded.params.entries.size() == ckpt.params.entries.size());
}

TEST_CASE("sample_token honors the filter rules") {
    Distribution d({0.5, 0.3, 0.2});
    auto rng = substream(123);
    for (int i = 0; i < 10; ++i) CHECK(sample_token(Distribution({0.1, 0.6, 0.3}), 1, 1.0, rng) == 1);

    int count1 = 0;
    for (int i = 0; i < 4000; ++i) {
        int tok = sample_token(d, 3, 0.7, rng);
        CHECK((tok == 0 || tok == 1));
        if (tok == 1) ++count1;
    }
    CHECK(count1 / 4000.0 == doctest::Approx(0.375).epsilon(0.12));

    // unfiltered sampling matches the distribution (chi-square, df=3, p>0.01)
    Distribution full({0.4, 0.3, 0.2, 0.1});
    std::vector<int> counts(4, 0);
    int draws = 100000;
    for (int i = 0; i < draws; ++i) ++counts[static_cast<std::size_t>(sample_token(full, 4, 1.0, rng))];
    double chi2 = 0.0;
    for (int k = 0; k < 4; ++k) {
        double expect = full[static_cast<std::size_t>(k)] * draws;
        double diff = counts[static_cast<std::size_t>(k)] - expect;
        chi2 += diff * diff / expect;
    }
    CHECK(chi2 < 11.345);  // chi2(0.99, df=3)
}

TEST_CASE("sequence_ppl of a uniform model equals the vocabulary size") {
    ModelConfig cfg = testutil::tiny_config(11);
    cfg.vocab_size = 11;
    ParamStore store = testutil::random_params(cfg, 12);
    for (auto& x : store.at_mut("head.w").data) x = 0.0f;
    for (auto& x : store.at_mut("head.b").data) x = 0.0f;
    double ppl = sequence_ppl(cfg, ParamView(store), {0, 5, 3, 7, 2}, 1);
    CHECK(ppl == doctest::Approx(11.0).epsilon(1e-6));

    // single continuation token with probability 1/11 -> PPL = 11
    double one = sequence_ppl(cfg, ParamView(store), {0, 5}, 1);
    CHECK(one == doctest::Approx(11.0).epsilon(1e-6));

    // V=4 uniform puts probability 0.25 on the continuation token -> PPL = 4
    ModelConfig c4 = testutil::tiny_config(4);
    ParamStore s4 = testutil::random_params(c4, 3);
    for (auto& x : s4.at_mut("head.w").data) x = 0.0f;
    for (auto& x : s4.at_mut("head.b").data) x = 0.0f;
    CHECK(sequence_ppl(c4, ParamView(s4), {0, 2}, 1) == doctest::Approx(4.0).epsilon(1e-6));
    CHECK_THROWS_AS(sequence_ppl(cfg, ParamView(store), {0}, 1), std::invalid_argument);
    CHECK_THROWS_AS(sequence_ppl(cfg, ParamView(store), {0, 5}, 2), std::invalid_argument);
}

TEST_CASE("sequence_ppl matches the reference and supports both prompt policies") {
    ModelConfig cfg = testutil::tiny_config(13);
    ParamStore store = testutil::random_params(cfg, 13);
    std::vector<int> toks = {0, 4, 9, 2, 11, 6};
    double got = sequence_ppl(cfg, ParamView(store), toks, 3);
    double want = refmodel::sequence_ppl(cfg, ParamView(store), toks, 3, false);
    CHECK(got == doctest::Approx(want).epsilon(1e-4));
    double got_all = sequence_ppl(cfg, ParamView(store), toks, 3, true);
    double want_all = refmodel::sequence_ppl(cfg, ParamView(store), toks, 3, true);
    CHECK(got_all == doctest::Approx(want_all).epsilon(1e-4));
}

TEST_CASE("bias_term_names covers exactly the additive shifts of the top blocks") {
    ModelConfig cfg;
    cfg.n_layers = 4;
    cfg.d_model = 128;
    cfg.n_heads = 4;
    cfg.d_ff = 512;
    cfg.vocab_size = 64;
    cfg.max_seq_len = 64;

    CHECK(bias_term_names(cfg, 0).empty());
    auto all = bias_term_names(cfg, 4);
    CHECK(all.size() == 4 * 8 + 1);
    auto is_bias_suffix = [](const std::string& name) {
        for (const char* suf : {".attn.bq", ".attn.bk", ".attn.bv", ".attn.bo", ".mlp.fc_b",
                                ".mlp.proj_b", ".ln1.b", ".ln2.b"})
            if (name.size() > std::string(suf).size() &&
                name.compare(name.size() - std::string(suf).size(), std::string::npos, suf) == 0)
                return true;
        return name == "ln_f.b";
    };
    for (const auto& name : all) {
        CHECK(is_bias_suffix(name));
        CHECK(name.find(".w") == std::string::npos);
    }
    CHECK(all.count("ln_f.b") == 1);
    CHECK(all.count("head.b") == 0);

    auto top2 = bias_term_names(cfg, 2);
    CHECK(top2.size() == 2 * 8);
    for (const auto& name : top2)
        CHECK((name.rfind("blocks.2.", 0) == 0 || name.rfind("blocks.3.", 0) == 0));
    CHECK(top2.count("ln_f.b") == 0);

    for (int t1 = 0; t1 <= 4; ++t1)
        for (int t2 = t1; t2 <= 4; ++t2) {
            auto small = bias_term_names(cfg, t1);
            auto big = bias_term_names(cfg, t2);
            for (const auto& name : small) CHECK(big.count(name) == 1);
        }
    CHECK_THROWS_AS(bias_term_names(cfg, 5), std::out_of_range);

    // parameter-efficiency: tunable set is < 2% of all parameters
    ParamStore store = init_params(cfg, 1);
    std::size_t total = 0, tunable = 0;
    for (const auto& [name, t] : store.entries) {
        total += t.numel();
        if (all.count(name)) tunable += t.numel();
    }
    CHECK(static_cast<double>(tunable) / static_cast<double>(total) < 0.02);
}

TEST_CASE("training memorizes a one-sentence corpus and is seed-deterministic") {
    Vocabulary v = demo_vocab();
    ModelConfig cfg = testutil::tiny_config(v.size());
    std::vector<int> sent = tokenize("the man works", v);
    sent.push_back(v.eos);

    TrainHyper hyper;
    hyper.steps = 220;
    hyper.batch = 4;
    hyper.lr = 3e-3;
    hyper.seed = 5;
    Tensor freq = token_frequency_table({sent}, cfg.vocab_size, v.bos);
    Checkpoint a = train_lm({sent}, cfg, hyper, "h", freq);
    CHECK(a.final_loss < 0.1);

    Checkpoint b = train_lm({sent}, cfg, hyper, "h", freq);
    std::string p1 = tmp_path("train_a.bin"), p2 = tmp_path("train_b.bin");
    save_checkpoint(a, p1);
    save_checkpoint(b, p2);
    CHECK(sha256_file(p1) == sha256_file(p2));

    CHECK_THROWS_AS(train_lm({}, cfg, hyper, "h", freq), std::invalid_argument);
}

TEST_CASE("generation is deterministic end to end under a fixed seed") {
    ModelConfig cfg = testutil::tiny_config(11);
    ParamStore store = testutil::random_params(cfg, 21);
    SamplingConfig sc;
    sc.top_k = 5;
    sc.top_p = 0.9;
    sc.temperature = 0.8;
    sc.max_new_tokens = 12;
    sc.eos_id = 1;
    auto r1 = substream(77, 0, 0);
    auto r2 = substream(77, 0, 0);
    auto a = sample_continuation(cfg, ParamView(store), {0, 4}, sc, r1);
    auto b = sample_continuation(cfg, ParamView(store), {0, 4}, sc, r2);
    CHECK(a == b);
}
