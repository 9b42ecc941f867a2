#include "rectify/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "rectify/kernels.hpp"
#include "rectify/rng.hpp"

namespace rectify {

namespace {

struct AdamState {
    std::map<std::string, Tensor> m, v;
    long t = 0;
};

void adam_step(ParamStore& store, const std::map<std::string, Tensor>& grads,
               AdamState& state, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    state.t += 1;
    double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (const auto& [name, g] : grads) {
        Tensor& p = store.at_mut(name);
        Tensor& m = state.m[name];
        Tensor& v = state.v[name];
        if (m.numel() == 0) m = Tensor::zeros(p.shape);
        if (v.numel() == 0) v = Tensor::zeros(p.shape);
        for (std::size_t i = 0; i < p.numel(); ++i) {
            double gi = g[i];
            double mi = b1 * m[i] + (1.0 - b1) * gi;
            double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            p[i] = static_cast<float>(p[i] - lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
        }
    }
}

}  // namespace

Tensor token_frequency_table(const std::vector<std::vector<int>>& corpus_ids, int vocab_size,
                             int bos_id) {
    std::vector<double> counts(static_cast<std::size_t>(vocab_size), 1.0);  // add-one
    double total = static_cast<double>(vocab_size);
    for (const auto& sent : corpus_ids)
        for (int id : sent) {
            if (id == bos_id) continue;
            counts[static_cast<std::size_t>(id)] += 1.0;
            total += 1.0;
        }
    Tensor freq({vocab_size});
    for (int i = 0; i < vocab_size; ++i)
        freq[static_cast<std::size_t>(i)] = static_cast<float>(counts[static_cast<std::size_t>(i)] / total);
    return freq;
}

double corpus_mean_nll(const ModelConfig& cfg, const ParamView& params,
                       const std::vector<std::vector<int>>& corpus_ids, std::size_t max_sentences) {
    double nll = 0.0;
    long count = 0;
    std::size_t n = std::min(corpus_ids.size(), max_sentences);
    for (std::size_t s = 0; s < n; ++s) {
        std::vector<int> ids = corpus_ids[s];
        if (ids.size() < 2) continue;
        if (static_cast<int>(ids.size()) > cfg.max_seq_len) ids.resize(static_cast<std::size_t>(cfg.max_seq_len));
        Tensor logits = forward_all_logits(cfg, params, ids);
        int t = static_cast<int>(ids.size()), v = cfg.vocab_size;
        for (int pos = 1; pos < t; ++pos) {
            const float* row = logits.data.data() + static_cast<std::size_t>(pos - 1) * v;
            double mx = row[0];
            for (int c = 1; c < v; ++c) mx = std::max(mx, static_cast<double>(row[c]));
            double z = 0.0;
            for (int c = 0; c < v; ++c) z += std::exp(row[c] - mx);
            nll -= (row[ids[static_cast<std::size_t>(pos)]] - mx) - std::log(z);
            ++count;
        }
    }
    if (count == 0) throw std::invalid_argument("corpus has no scorable tokens");
    return nll / count;
}

Checkpoint train_lm(const std::vector<std::vector<int>>& corpus_ids, const ModelConfig& cfg,
                    const TrainHyper& hyper, const std::string& corpus_hash,
                    const Tensor& token_freq) {
    if (corpus_ids.empty()) throw std::invalid_argument("empty corpus");
    cfg.validate();

    ParamStore store = init_params(cfg, hyper.seed);
    for (const auto& name : param_names(cfg)) store.mark_tunable(name);
    const std::set<std::string> all_tunable = store.tunable;

    auto order_rng = substream(hyper.seed, 1);
    std::vector<std::size_t> order(corpus_ids.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();  // forces an initial shuffle

    AdamState adam;

    for (int step = 0; step < hyper.steps; ++step) {
        std::vector<std::vector<int>> batch;
        batch.reserve(static_cast<std::size_t>(hyper.batch));
        while (static_cast<int>(batch.size()) < hyper.batch) {
            if (cursor >= order.size()) {
                for (std::size_t i = order.size(); i > 1; --i)
                    std::swap(order[i - 1], order[order_rng() % i]);
                cursor = 0;
            }
            const auto& sent = corpus_ids[order[cursor++]];
            if (sent.size() >= 2) {
                batch.push_back(sent);
                if (static_cast<int>(batch.back().size()) > cfg.max_seq_len)
                    batch.back().resize(static_cast<std::size_t>(cfg.max_seq_len));
            }
        }

        long total_tokens = 0;
        for (const auto& s : batch) total_tokens += static_cast<long>(s.size()) - 1;

        std::vector<std::map<std::string, Tensor>> grads(batch.size());
        std::vector<double> losses(batch.size());
        ParamView view(store);
#pragma omp parallel for schedule(dynamic)
        for (std::size_t b = 0; b < batch.size(); ++b) {
            Tape tape;
            TapeForward fwd = forward_tape(tape, cfg, view, batch[b], all_tunable, true);
            std::vector<int> targets(batch[b].size(), -1);
            for (std::size_t pos = 0; pos + 1 < batch[b].size(); ++pos)
                targets[pos] = batch[b][pos + 1];
            auto loss = tape.cross_entropy_rows(fwd.logits, targets);
            // weight so the batch loss is the token-weighted mean
            float w = static_cast<float>(static_cast<double>(batch[b].size() - 1) / total_tokens);
            auto scaled = tape.scale(loss, w);
            tape.backward(scaled);
            grads[b] = tape.tunable_grads();
            losses[b] = static_cast<double>(tape.val(loss)[0]) * w;
        }

        double batch_loss = 0.0;
        for (double l : losses) batch_loss += l;
        if (!std::isfinite(batch_loss))
            throw std::runtime_error("training diverged (non-finite loss) at step " + std::to_string(step));

        std::map<std::string, Tensor> total = std::move(grads[0]);
        for (std::size_t b = 1; b < grads.size(); ++b)
            for (auto& [name, g] : grads[b]) {
                Tensor& acc = total[name];
                for (std::size_t i = 0; i < g.numel(); ++i) acc[i] += g[i];
            }
        adam_step(store, total, adam, hyper.lr);
    }

    store.tunable.clear();  // a loaded model starts with nothing tunable

    Checkpoint ckpt;
    ckpt.config = cfg;
    ckpt.params = std::move(store);
    ckpt.token_freq = token_freq;
    ckpt.corpus_hash = corpus_hash;
    ckpt.final_loss = corpus_mean_nll(cfg, ParamView(ckpt.params), corpus_ids, 256);
    return ckpt;
}

}  // namespace rectify
