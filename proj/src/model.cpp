#include "rectify/model.hpp"

#include <cmath>
#include <stdexcept>

#include "rectify/kernels.hpp"
#include "rectify/rng.hpp"

namespace rectify {

void ModelConfig::validate() const {
    if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_ff < 1 || vocab_size < 1 || max_seq_len < 1)
        throw std::invalid_argument("model config fields must be >= 1");
    if (d_model % n_heads != 0) throw std::invalid_argument("n_heads must divide d_model");
}

std::vector<std::string> param_names(const ModelConfig& cfg) {
    std::vector<std::string> names = {"tok_emb", "pos_emb"};
    for (int i = 0; i < cfg.n_layers; ++i) {
        std::string p = "blocks." + std::to_string(i) + ".";
        for (const char* s : {"ln1.w", "ln1.b", "attn.wq", "attn.bq", "attn.wk", "attn.bk",
                              "attn.wv", "attn.bv", "attn.wo", "attn.bo", "ln2.w", "ln2.b",
                              "mlp.fc_w", "mlp.fc_b", "mlp.proj_w", "mlp.proj_b"})
            names.push_back(p + s);
    }
    names.push_back("ln_f.w");
    names.push_back("ln_f.b");
    names.push_back("head.w");
    names.push_back("head.b");
    return names;
}

std::vector<int> param_shape(const ModelConfig& cfg, const std::string& name) {
    int d = cfg.d_model, f = cfg.d_ff, v = cfg.vocab_size;
    auto ends_with = [&](const char* suf) {
        std::string s(suf);
        return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
    };
    if (name == "tok_emb") return {v, d};
    if (name == "pos_emb") return {cfg.max_seq_len, d};
    if (name == "head.w") return {d, v};
    if (name == "head.b") return {v};
    if (ends_with("ln1.w") || ends_with("ln1.b") || ends_with("ln2.w") || ends_with("ln2.b") ||
        name == "ln_f.w" || name == "ln_f.b")
        return {d};
    if (ends_with("attn.wq") || ends_with("attn.wk") || ends_with("attn.wv") || ends_with("attn.wo"))
        return {d, d};
    if (ends_with("attn.bq") || ends_with("attn.bk") || ends_with("attn.bv") || ends_with("attn.bo"))
        return {d};
    if (ends_with("mlp.fc_w")) return {d, f};
    if (ends_with("mlp.fc_b")) return {f};
    if (ends_with("mlp.proj_w")) return {f, d};
    if (ends_with("mlp.proj_b")) return {d};
    throw std::out_of_range("unknown parameter name: " + name);
}

std::set<std::string> bias_term_names(const ModelConfig& cfg, int top_T) {
    if (top_T < 0 || top_T > cfg.n_layers) throw std::out_of_range("top_T out of range");
    std::set<std::string> out;
    for (int i = cfg.n_layers - top_T; i < cfg.n_layers; ++i) {
        std::string p = "blocks." + std::to_string(i) + ".";
        for (const char* s : {"attn.bq", "attn.bk", "attn.bv", "attn.bo", "mlp.fc_b", "mlp.proj_b",
                              "ln1.b", "ln2.b"})
            out.insert(p + s);
    }
    if (top_T == cfg.n_layers) out.insert("ln_f.b");
    return out;
}

ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    auto rng = substream(seed);
    ParamStore store;
    for (const auto& name : param_names(cfg)) {
        Tensor t(param_shape(cfg, name));
        bool is_ln_scale = name == "ln_f.w" ||
                           (name.size() > 4 && (name.rfind("ln1.w") == name.size() - 5 ||
                                                name.rfind("ln2.w") == name.size() - 5));
        bool is_weight = t.shape.size() == 2;
        if (is_ln_scale) {
            for (auto& x : t.data) x = 1.0f;
        } else if (is_weight) {
            for (auto& x : t.data) x = static_cast<float>(normal01(rng) * 0.02);
        }  // biases and shifts stay zero
        store.entries[name] = std::move(t);
    }
    return store;
}

namespace {

struct BlockNames {
    std::string ln1w, ln1b, wq, bq, wk, bk, wv, bv, wo, bo, ln2w, ln2b, fcw, fcb, pw, pb;
    explicit BlockNames(int i) {
        std::string p = "blocks." + std::to_string(i) + ".";
        ln1w = p + "ln1.w"; ln1b = p + "ln1.b";
        wq = p + "attn.wq"; bq = p + "attn.bq";
        wk = p + "attn.wk"; bk = p + "attn.bk";
        wv = p + "attn.wv"; bv = p + "attn.bv";
        wo = p + "attn.wo"; bo = p + "attn.bo";
        ln2w = p + "ln2.w"; ln2b = p + "ln2.b";
        fcw = p + "mlp.fc_w"; fcb = p + "mlp.fc_b";
        pw = p + "mlp.proj_w"; pb = p + "mlp.proj_b";
    }
};

// Shared plain-forward trunk: residual stream after every block.
std::vector<Tensor> run_blocks(const ModelConfig& cfg, const ParamView& params,
                               const std::vector<int>& ids) {
    int t = static_cast<int>(ids.size());
    if (t < 1) throw std::invalid_argument("empty sequence");
    if (t > cfg.max_seq_len) throw std::runtime_error("context overflow");
    int d = cfg.d_model;

    const Tensor& tok = params.at("tok_emb");
    const Tensor& pos = params.at("pos_emb");
    Tensor x({t, d});
    for (int r = 0; r < t; ++r) {
        int id = ids[static_cast<std::size_t>(r)];
        if (id < 0 || id >= cfg.vocab_size) throw std::out_of_range("token id out of range");
        for (int c = 0; c < d; ++c) x.at(r, c) = tok.at(id, c) + pos.at(r, c);
    }

    std::vector<Tensor> hiddens;
    hiddens.reserve(static_cast<std::size_t>(cfg.n_layers));
    Tensor h({t, d}), q({t, d}), k({t, d}), v({t, d}), att({t, d}), tmp({t, d});
    Tensor mean({t}), rstd({t});
    Tensor ff({t, cfg.d_ff});
    for (int i = 0; i < cfg.n_layers; ++i) {
        BlockNames n(i);
        kern::layernorm_forward(x.data.data(), params.at(n.ln1w).data.data(),
                                params.at(n.ln1b).data.data(), h.data.data(),
                                mean.data.data(), rstd.data.data(), t, d, 1e-5f);
        kern::matmul(h.data.data(), params.at(n.wq).data.data(), q.data.data(), t, d, d, false, false);
        kern::add_rows(q.data.data(), params.at(n.bq).data.data(), q.data.data(), t, d);
        kern::matmul(h.data.data(), params.at(n.wk).data.data(), k.data.data(), t, d, d, false, false);
        kern::add_rows(k.data.data(), params.at(n.bk).data.data(), k.data.data(), t, d);
        kern::matmul(h.data.data(), params.at(n.wv).data.data(), v.data.data(), t, d, d, false, false);
        kern::add_rows(v.data.data(), params.at(n.bv).data.data(), v.data.data(), t, d);
        Tensor probs({cfg.n_heads * t, t});
        kern::attention_forward(q.data.data(), k.data.data(), v.data.data(), att.data.data(),
                                probs.data.data(), t, d, cfg.n_heads);
        kern::matmul(att.data.data(), params.at(n.wo).data.data(), tmp.data.data(), t, d, d, false, false);
        kern::add_rows(tmp.data.data(), params.at(n.bo).data.data(), tmp.data.data(), t, d);
        for (std::size_t j = 0; j < x.numel(); ++j) x[j] += tmp[j];

        kern::layernorm_forward(x.data.data(), params.at(n.ln2w).data.data(),
                                params.at(n.ln2b).data.data(), h.data.data(),
                                mean.data.data(), rstd.data.data(), t, d, 1e-5f);
        kern::matmul(h.data.data(), params.at(n.fcw).data.data(), ff.data.data(),
                     t, d, cfg.d_ff, false, false);
        kern::add_rows(ff.data.data(), params.at(n.fcb).data.data(), ff.data.data(), t, cfg.d_ff);
        kern::gelu_forward(ff.data.data(), ff.data.data(), static_cast<std::int64_t>(ff.numel()));
        kern::matmul(ff.data.data(), params.at(n.pw).data.data(), tmp.data.data(),
                     t, cfg.d_ff, d, false, false);
        kern::add_rows(tmp.data.data(), params.at(n.pb).data.data(), tmp.data.data(), t, d);
        for (std::size_t j = 0; j < x.numel(); ++j) x[j] += tmp[j];
        hiddens.push_back(x);
    }
    return hiddens;
}

}  // namespace

ForwardOut forward_logits(const ModelConfig& cfg, const ParamView& params,
                          const std::vector<int>& ids, bool want_hiddens) {
    std::vector<Tensor> hiddens = run_blocks(cfg, params, ids);
    const Tensor& x = hiddens.back();
    int t = x.rows(), d = cfg.d_model;
    Tensor hf({t, d}), mean({t}), rstd({t});
    kern::layernorm_forward(x.data.data(), params.at("ln_f.w").data.data(),
                            params.at("ln_f.b").data.data(), hf.data.data(),
                            mean.data.data(), rstd.data.data(), t, d, 1e-5f);
    ForwardOut out;
    out.logits.resize(static_cast<std::size_t>(cfg.vocab_size));
    kern::matmul(hf.data.data() + static_cast<std::size_t>(t - 1) * d,
                 params.at("head.w").data.data(), out.logits.data(),
                 1, d, cfg.vocab_size, false, false);
    const Tensor& hb = params.at("head.b");
    for (int c = 0; c < cfg.vocab_size; ++c) out.logits[static_cast<std::size_t>(c)] += hb[static_cast<std::size_t>(c)];
    if (want_hiddens) out.hiddens = std::move(hiddens);
    return out;
}

Tensor forward_all_logits(const ModelConfig& cfg, const ParamView& params,
                          const std::vector<int>& ids) {
    std::vector<Tensor> hiddens = run_blocks(cfg, params, ids);
    const Tensor& x = hiddens.back();
    int t = x.rows(), d = cfg.d_model;
    Tensor hf({t, d}), mean({t}), rstd({t});
    kern::layernorm_forward(x.data.data(), params.at("ln_f.w").data.data(),
                            params.at("ln_f.b").data.data(), hf.data.data(),
                            mean.data.data(), rstd.data.data(), t, d, 1e-5f);
    Tensor logits({t, cfg.vocab_size});
    kern::matmul(hf.data.data(), params.at("head.w").data.data(), logits.data.data(),
                 t, d, cfg.vocab_size, false, false);
    kern::add_rows(logits.data.data(), params.at("head.b").data.data(), logits.data.data(),
                   t, cfg.vocab_size);
    return logits;
}

TapeForward forward_tape(Tape& tape, const ModelConfig& cfg, const ParamView& params,
                         const std::vector<int>& ids, const std::set<std::string>& active_tunable,
                         bool all_positions) {
    int t = static_cast<int>(ids.size());
    if (t < 1) throw std::invalid_argument("empty sequence");
    if (t > cfg.max_seq_len) throw std::runtime_error("context overflow");

    auto P = [&](const std::string& name) {
        return tape.param(name, params.at(name), active_tunable.count(name) > 0);
    };

    auto tok = tape.gather_rows(P("tok_emb"), ids);
    auto pos = tape.slice_rows(P("pos_emb"), 0, t);
    auto x = tape.add(tok, pos);
    for (int i = 0; i < cfg.n_layers; ++i) {
        BlockNames n(i);
        auto h = tape.layernorm(x, P(n.ln1w), P(n.ln1b));
        auto q = tape.add_bias(tape.matmul(h, P(n.wq)), P(n.bq));
        auto k = tape.add_bias(tape.matmul(h, P(n.wk)), P(n.bk));
        auto v = tape.add_bias(tape.matmul(h, P(n.wv)), P(n.bv));
        auto att = tape.causal_attention(q, k, v, cfg.n_heads);
        auto atto = tape.add_bias(tape.matmul(att, P(n.wo)), P(n.bo));
        x = tape.add(x, atto);
        auto h2 = tape.layernorm(x, P(n.ln2w), P(n.ln2b));
        auto ff = tape.gelu(tape.add_bias(tape.matmul(h2, P(n.fcw)), P(n.fcb)));
        auto proj = tape.add_bias(tape.matmul(ff, P(n.pw)), P(n.pb));
        x = tape.add(x, proj);
    }
    TapeForward out;
    out.final_hidden = x;
    auto hf = tape.layernorm(x, P("ln_f.w"), P("ln_f.b"));
    if (all_positions) {
        out.logits = tape.add_bias(tape.matmul(hf, P("head.w")), P("head.b"));
    } else {
        auto last = tape.slice_rows(hf, t - 1, 1);
        out.logits = tape.add_bias(tape.matmul(last, P("head.w")), P("head.b"));
    }
    return out;
}

double sequence_ppl(const ModelConfig& cfg, const ParamView& params,
                    const std::vector<int>& tokens, int n_prompt, bool include_prompt) {
    int t = static_cast<int>(tokens.size());
    if (t < 2) throw std::invalid_argument("sequence_ppl: need at least 2 tokens");
    if (n_prompt < 1 || n_prompt > t) throw std::invalid_argument("sequence_ppl: bad prompt length");
    int first = include_prompt ? 1 : n_prompt;
    if (first >= t) throw std::invalid_argument("sequence_ppl: empty continuation");

    Tensor logits = forward_all_logits(cfg, params, tokens);
    int v = cfg.vocab_size;
    double nll = 0.0;
    for (int pos = first; pos < t; ++pos) {
        const float* row = logits.data.data() + static_cast<std::size_t>(pos - 1) * v;
        double mx = row[0];
        for (int c = 1; c < v; ++c) mx = std::max(mx, static_cast<double>(row[c]));
        double z = 0.0;
        for (int c = 0; c < v; ++c) z += std::exp(row[c] - mx);
        int tgt = tokens[static_cast<std::size_t>(pos)];
        double logp = (row[tgt] - mx) - std::log(z);
        nll -= logp;
    }
    return std::exp(nll / (t - first));
}

}  // namespace rectify
