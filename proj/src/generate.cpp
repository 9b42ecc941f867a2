#include "rectify/generate.hpp"

#include <cmath>
#include <sstream>

#include "rectify/losses.hpp"
#include "rectify/rng.hpp"

namespace rectify {

std::string format_trace_line(const StepTraceEntry& e) {
    std::ostringstream os;
    os << "pass=" << e.pass << " t=" << e.t << " attr=" << e.attr << " H=";
    for (std::size_t i = 0; i < e.hvals.size(); ++i) {
        if (i) os << ",";
        os << e.hvals[i];
    }
    os << " gap=" << e.gap << " iters=" << e.iters
       << " loss_before=" << e.loss_before << " loss_after=" << e.loss_after;
    if (e.aborted) os << " aborted=1";
    return os.str();
}

namespace {

// static per-attribute coefficients never change within a run; the
// context coefficients depend on the prefix and are rebuilt per step
std::vector<Distribution> context_rows(const DebiasAttribute& attr, const std::vector<int>& seq,
                                       const Tensor& embeddings) {
    int v = embeddings.rows();
    std::vector<Distribution> rows;
    rows.reserve(static_cast<std::size_t>(v));
    for (int cand = 0; cand < v; ++cand)
        rows.push_back(classify_context(attr.dirs, attr.spec, seq, cand, embeddings));
    return rows;
}

double plain_loss_value(const Distribution& next_dist,
                        const std::vector<const DebiasAttribute*>& triggered,
                        const std::vector<const std::vector<Distribution>*>& ctx_rows,
                        const InterventionConfig& icfg, const ToxicityHead* detox_head,
                        const Tensor* final_hidden, int upto) {
    double total = 0.0;
    for (std::size_t i = 0; i < triggered.size(); ++i) {
        double lt = token_level_loss(next_dist, triggered[i]->tok_rows, triggered[i]->spec.prior);
        double lc = context_loss(next_dist, *ctx_rows[i], triggered[i]->tok_rows);
        total += icfg.debias_weight * (lt + lc);
    }
    if (icfg.detox_enabled && detox_head && final_hidden) {
        Distribution p = toxicity_prob(*detox_head, *final_hidden, upto);
        total += icfg.detox_weight * -std::log(std::max(p[0], 1e-300));
    }
    return total;
}

}  // namespace

PassResult generate_pass(const ModelConfig& cfg, const ParamStore& base, BiasOverlay& overlay,
                         const std::vector<DebiasAttribute>& debias, const ToxicityHead* detox_head,
                         const InterventionConfig& icfg, const SamplingConfig& scfg,
                         ResetScope reset, int active_T, int pass_index,
                         const std::vector<int>& prompt, const std::vector<int>* paired_prompt,
                         std::mt19937_64& rng) {
    PassResult result;
    std::set<std::string> active = bias_term_names(cfg, active_T);
    bool can_tune = !active.empty();
    const Tensor& embeddings = base.at("tok_emb");
    bool want_hiddens = icfg.detox_enabled && detox_head != nullptr;

    std::vector<int> seq = prompt;
    std::vector<int> generated;

    for (int step = 0; step < scfg.max_new_tokens; ++step) {
        if (static_cast<int>(seq.size()) >= cfg.max_seq_len) break;
        if (reset == ResetScope::PerStep) overlay.reset();

        ParamView view = overlay.view(base);
        ForwardOut fwd = forward_logits(cfg, view, seq, want_hiddens);
        Distribution next_dist = softmax(fwd.logits, 1.0);

        // trigger evaluation
        std::vector<HellingerGap> gaps(debias.size());
        std::vector<bool> triggered(debias.size(), false);
        bool any_debias = false;
        for (std::size_t k = 0; k < debias.size(); ++k) {
            gaps[k] = hellinger_gap(next_dist, debias[k].cond);
            if (gaps[k].gap > icfg.tau_for(debias[k].spec.name)) {
                triggered[k] = true;
                any_debias = true;
            }
        }
        bool intervene = can_tune && (any_debias || (icfg.detox_enabled && detox_head));

        int iters = 0;
        double loss_before = 0.0, loss_after = 0.0;
        bool aborted = false;

        if (intervene) {
            // context rows for the triggered attributes, fixed within this step
            std::vector<const DebiasAttribute*> trig;
            std::vector<std::vector<Distribution>> trig_ctx;
            for (std::size_t k = 0; k < debias.size(); ++k)
                if (triggered[k]) {
                    trig.push_back(&debias[k]);
                    trig_ctx.push_back(context_rows(debias[k], seq, embeddings));
                }
            std::vector<const std::vector<Distribution>*> trig_ctx_ptr;
            for (auto& rows : trig_ctx) trig_ctx_ptr.push_back(&rows);

            const Tensor* fh = want_hiddens ? &fwd.hiddens.back() : nullptr;
            loss_before = plain_loss_value(next_dist, trig, trig_ctx_ptr, icfg, detox_head, fh,
                                           static_cast<int>(seq.size()));
            loss_after = loss_before;

            while (iters < icfg.max_opt_iters) {
                std::map<std::string, Tensor> step_snapshot = overlay.values;
                try {
                    Tape tape;
                    TapeForward tfwd = forward_tape(tape, cfg, overlay.view(base), seq, active);
                    auto next_probs = tape.softmax_rows(tfwd.logits);
                    Tape::Value loss_node{};
                    for (std::size_t i = 0; i < trig.size(); ++i) {
                        auto lt = token_level_loss_node(tape, next_probs, trig[i]->tok_rows,
                                                        trig[i]->spec.prior);
                        auto lc = context_loss_node(tape, next_probs, trig_ctx[i], trig[i]->tok_rows);
                        auto part = tape.scale(tape.add(lt, lc), static_cast<float>(icfg.debias_weight));
                        loss_node = loss_node.valid() ? tape.add(loss_node, part) : part;
                    }
                    if (icfg.detox_enabled && detox_head) {
                        auto dt = tape.scale(detox_loss_node(tape, *detox_head, tfwd.final_hidden,
                                                             static_cast<int>(seq.size())),
                                             static_cast<float>(icfg.detox_weight));
                        loss_node = loss_node.valid() ? tape.add(loss_node, dt) : dt;
                    }
                    auto grads = grad_selected(tape, loss_node);
                    apply_update(overlay, grads, icfg, active);
                    bool finite = true;
                    for (const auto& [name, t] : overlay.values)
                        if (active.count(name) && !t.all_finite()) finite = false;
                    if (!finite) throw std::runtime_error("non-finite bias update");
                } catch (const std::runtime_error&) {
                    // NaN gradient (or a blown-up update): drop this token's
                    // intervention and restore the step's starting point
                    overlay.values = std::move(step_snapshot);
                    aborted = true;
                    break;
                }
                ++iters;

                view = overlay.view(base);
                fwd = forward_logits(cfg, view, seq, want_hiddens);
                next_dist = softmax(fwd.logits, 1.0);
                const Tensor* fh2 = want_hiddens ? &fwd.hiddens.back() : nullptr;
                loss_after = plain_loss_value(next_dist, trig, trig_ctx_ptr, icfg, detox_head, fh2,
                                              static_cast<int>(seq.size()));

                bool still = false;
                for (std::size_t k = 0; k < debias.size(); ++k) {
                    if (!triggered[k]) continue;
                    gaps[k] = hellinger_gap(next_dist, debias[k].cond);
                    if (gaps[k].gap > icfg.tau_for(debias[k].spec.name)) still = true;
                }
                if (!still) break;  // detox alone stops after its single step
            }
        }

        if (paired_prompt) {
            std::vector<int> twin = *paired_prompt;
            twin.insert(twin.end(), generated.begin(), generated.end());
            if (static_cast<int>(twin.size()) < cfg.max_seq_len) {
                ForwardOut tf = forward_logits(cfg, overlay.view(base), twin);
                result.pair_hellinger.push_back(hellinger(next_dist, softmax(tf.logits, 1.0)));
            }
        }

        for (std::size_t k = 0; k < debias.size(); ++k) {
            StepTraceEntry e;
            e.pass = pass_index;
            e.t = step;
            e.attr = debias[k].spec.name;
            e.hvals = gaps[k].per_value;
            e.gap = gaps[k].gap;
            e.iters = iters;
            e.loss_before = loss_before;
            e.loss_after = loss_after;
            e.aborted = aborted;
            result.trace.push_back(std::move(e));
        }
        if (icfg.detox_enabled && detox_head && want_hiddens) {
            Distribution p = toxicity_prob(*detox_head, fwd.hiddens.back(), static_cast<int>(seq.size()));
            StepTraceEntry e;
            e.pass = pass_index;
            e.t = step;
            e.attr = "toxicity";
            e.hvals = {p[1]};
            e.gap = p[1];
            e.iters = iters;
            e.loss_before = loss_before;
            e.loss_after = loss_after;
            e.aborted = aborted;
            result.trace.push_back(std::move(e));
        }

        Distribution sample_dist = softmax(fwd.logits, scfg.temperature);
        int tok = sample_token(sample_dist, scfg.top_k, scfg.top_p, rng);
        seq.push_back(tok);
        generated.push_back(tok);
        if (scfg.stop_at_eos && tok == scfg.eos_id) break;
    }

    result.tokens = std::move(generated);
    return result;
}

GenerationRecord redo_generate(const ModelConfig& cfg, const ParamStore& base,
                               const std::vector<DebiasAttribute>& debias,
                               const ToxicityHead* detox_head, const InterventionConfig& icfg,
                               const RedoConfig& redo, const SamplingConfig& scfg,
                               const std::vector<int>& prompt, const std::vector<int>* paired_prompt,
                               std::uint64_t seed, std::uint64_t prompt_index) {
    GenerationRecord rec;
    rec.prompt = prompt;

    int t_active = redo.t0;
    double min_ppl = kInf;
    int pass_index = 0;
    std::vector<std::vector<double>> pass_pair_h;

    while (true) {
        BiasOverlay overlay = BiasOverlay::make(base, bias_term_names(cfg, t_active));
        auto rng = substream(seed, prompt_index, static_cast<std::uint64_t>(pass_index));
        PassResult pres = generate_pass(cfg, base, overlay, debias, detox_head, icfg, scfg,
                                        redo.reset, t_active, pass_index, prompt, paired_prompt, rng);

        PassRecord pr;
        pr.active_T = t_active;
        pr.tokens = pres.tokens;
        if (pres.tokens.empty()) {
            pr.ppl = kInf;
        } else {
            std::vector<int> full = prompt;
            full.insert(full.end(), pres.tokens.begin(), pres.tokens.end());
            pr.ppl = sequence_ppl(cfg, ParamView(base), full, static_cast<int>(prompt.size()));
        }
        rec.passes.push_back(std::move(pr));
        pass_pair_h.push_back(std::move(pres.pair_hellinger));
        for (auto& e : pres.trace) rec.trace.push_back(std::move(e));

        if (rec.passes.back().ppl < min_ppl) {
            min_ppl = rec.passes.back().ppl;
            rec.chosen = pass_index;
        }

        t_active -= redo.dt;
        ++pass_index;
        if (min_ppl < redo.th || t_active <= 0) break;
    }

    if (rec.chosen < 0) rec.chosen = 0;  // every candidate failed to score
    rec.replay_count = static_cast<int>(rec.passes.size()) - 1;
    rec.final_ppl = min_ppl;
    rec.pair_hellinger = pass_pair_h[static_cast<std::size_t>(rec.chosen)];
    return rec;
}

}  // namespace rectify
