#include "rectify/toxicity_head.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "rectify/checkpoint.hpp"
#include "rectify/kernels.hpp"
#include "rectify/rng.hpp"

namespace rectify {

Tensor pooled_hidden(const ModelConfig& cfg, const ParamView& params, const std::vector<int>& ids) {
    ForwardOut fwd = forward_logits(cfg, params, ids, true);
    const Tensor& h = fwd.hiddens.back();
    int t = h.rows(), d = h.cols();
    Tensor pooled({d});
    for (int c = 0; c < d; ++c) {
        double acc = 0.0;
        for (int r = 0; r < t; ++r) acc += h.at(r, c);
        pooled[static_cast<std::size_t>(c)] = static_cast<float>(acc / t);
    }
    return pooled;
}

namespace {

// forward through the MLP in double, returning class probabilities
Distribution head_forward(const ToxicityHead& head, const float* x, int d,
                          std::vector<double>* hidden_out = nullptr) {
    int hdim = static_cast<int>(head.b1.numel());
    std::vector<double> z1(static_cast<std::size_t>(hdim));
    for (int j = 0; j < hdim; ++j) {
        double acc = head.b1[static_cast<std::size_t>(j)];
        for (int i = 0; i < d; ++i)
            acc += static_cast<double>(x[i]) * head.w1.at(i, j);
        double u = 0.7978845608028654 * (acc + 0.044715 * acc * acc * acc);
        z1[static_cast<std::size_t>(j)] = 0.5 * acc * (1.0 + std::tanh(u));
    }
    if (hidden_out) *hidden_out = z1;
    std::vector<double> z2(2);
    for (int j = 0; j < 2; ++j) {
        double acc = head.b2[static_cast<std::size_t>(j)];
        for (int i = 0; i < hdim; ++i) acc += z1[static_cast<std::size_t>(i)] * head.w2.at(i, j);
        z2[static_cast<std::size_t>(j)] = acc;
    }
    return softmax(z2, 1.0);
}

}  // namespace

Distribution head_prob(const ToxicityHead& head, const Tensor& pooled) {
    return head_forward(head, pooled.data.data(), static_cast<int>(pooled.numel()));
}

Distribution toxicity_prob(const ToxicityHead& head, const Tensor& final_hidden, int upto) {
    int t = final_hidden.rows(), d = final_hidden.cols();
    if (upto < 1 || upto > t) throw std::out_of_range("toxicity_prob: position out of range");
    Tensor pooled({d});
    for (int c = 0; c < d; ++c) {
        double acc = 0.0;
        for (int r = 0; r < upto; ++r) acc += final_hidden.at(r, c);
        pooled[static_cast<std::size_t>(c)] = static_cast<float>(acc / upto);
    }
    return head_prob(head, pooled);
}

Tape::Value detox_loss_node(Tape& tape, const ToxicityHead& head, Tape::Value final_hidden, int upto) {
    auto pooled = tape.mean_pool_rows(final_hidden, upto);
    auto w1 = tape.constant(head.w1);
    auto b1 = tape.constant(head.b1);
    auto w2 = tape.constant(head.w2);
    auto b2 = tape.constant(head.b2);
    auto z1 = tape.gelu(tape.add_bias(tape.matmul(pooled, w1), b1));
    auto z2 = tape.add_bias(tape.matmul(z1, w2), b2);
    auto probs = tape.softmax_rows(z2);
    return tape.scale(tape.log(tape.pick(probs, 0)), -1.0f);
}

ToxicityHead train_toxicity_head(const ModelConfig& cfg, const ParamStore& params,
                                 const std::vector<std::vector<int>>& sentences,
                                 const std::vector<int>& labels, const HeadHyper& hyper) {
    if (sentences.size() != labels.size())
        throw std::invalid_argument("sentence/label count mismatch");

    // collect (feature, label) pairs under the frozen backbone
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == 0 || labels[i] == 1) keep.push_back(i);
    bool has0 = false, has1 = false;
    for (std::size_t i : keep) (labels[i] == 0 ? has0 : has1) = true;
    if (!has0 || !has1) throw std::invalid_argument("both labels must be present");

    int d = cfg.d_model;
    std::vector<Tensor> feats(keep.size());
    ParamView view(params);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < keep.size(); ++i) {
        std::vector<int> ids = sentences[keep[i]];
        if (static_cast<int>(ids.size()) > cfg.max_seq_len) ids.resize(static_cast<std::size_t>(cfg.max_seq_len));
        feats[i] = pooled_hidden(cfg, view, ids);
    }

    std::vector<std::size_t> train_idx, hold_idx;
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (static_cast<int>(i % static_cast<std::size_t>(hyper.holdout_modulus)) == hyper.holdout_phase)
            hold_idx.push_back(i);
        else
            train_idx.push_back(i);
    }
    if (train_idx.empty() || hold_idx.empty())
        throw std::invalid_argument("not enough labeled data for a holdout split");

    ToxicityHead head;
    head.seed = hyper.seed;
    head.steps = hyper.steps;
    auto rng = substream(hyper.seed, 2);
    head.w1 = Tensor({d, ToxicityHead::kHidden});
    head.b1 = Tensor({ToxicityHead::kHidden});
    head.w2 = Tensor({ToxicityHead::kHidden, 2});
    head.b2 = Tensor({2});
    for (auto& x : head.w1.data) x = static_cast<float>(normal01(rng) * 0.05);
    for (auto& x : head.w2.data) x = static_cast<float>(normal01(rng) * 0.05);

    // plain Adam on the four tensors; gradients derived by hand for the tiny MLP
    Tensor mw1 = Tensor::zeros(head.w1.shape), vw1 = Tensor::zeros(head.w1.shape);
    Tensor mb1 = Tensor::zeros(head.b1.shape), vb1 = Tensor::zeros(head.b1.shape);
    Tensor mw2 = Tensor::zeros(head.w2.shape), vw2 = Tensor::zeros(head.w2.shape);
    Tensor mb2 = Tensor::zeros(head.b2.shape), vb2 = Tensor::zeros(head.b2.shape);
    constexpr double c1 = 0.9, c2 = 0.999, eps = 1e-8;
    constexpr double kGeluC = 0.7978845608028654;

    auto order_rng = substream(hyper.seed, 3);
    std::vector<std::size_t> order = train_idx;
    std::size_t cursor = order.size();

    for (int step = 1; step <= hyper.steps; ++step) {
        Tensor gw1 = Tensor::zeros(head.w1.shape), gb1 = Tensor::zeros(head.b1.shape);
        Tensor gw2 = Tensor::zeros(head.w2.shape), gb2 = Tensor::zeros(head.b2.shape);
        for (int b = 0; b < hyper.batch; ++b) {
            if (cursor >= order.size()) {
                for (std::size_t i = order.size(); i > 1; --i)
                    std::swap(order[i - 1], order[order_rng() % i]);
                cursor = 0;
            }
            std::size_t idx = order[cursor++];
            const float* x = feats[idx].data.data();
            int y = labels[keep[idx]];

            // forward, keeping pre-activations for the backward pass
            std::vector<double> pre(ToxicityHead::kHidden), act(ToxicityHead::kHidden);
            for (int j = 0; j < ToxicityHead::kHidden; ++j) {
                double acc = head.b1[static_cast<std::size_t>(j)];
                for (int i = 0; i < d; ++i) acc += static_cast<double>(x[i]) * head.w1.at(i, j);
                pre[static_cast<std::size_t>(j)] = acc;
                double u = kGeluC * (acc + 0.044715 * acc * acc * acc);
                act[static_cast<std::size_t>(j)] = 0.5 * acc * (1.0 + std::tanh(u));
            }
            double z[2];
            for (int j = 0; j < 2; ++j) {
                double acc = head.b2[static_cast<std::size_t>(j)];
                for (int i = 0; i < ToxicityHead::kHidden; ++i)
                    acc += act[static_cast<std::size_t>(i)] * head.w2.at(i, j);
                z[j] = acc;
            }
            double mx = std::max(z[0], z[1]);
            double e0 = std::exp(z[0] - mx), e1 = std::exp(z[1] - mx);
            double p0 = e0 / (e0 + e1);
            double dz[2] = {p0 - (y == 0 ? 1.0 : 0.0), (1.0 - p0) - (y == 1 ? 1.0 : 0.0)};

            double scale = 1.0 / hyper.batch;
            std::vector<double> dact(ToxicityHead::kHidden, 0.0);
            for (int j = 0; j < 2; ++j) {
                gb2[static_cast<std::size_t>(j)] += static_cast<float>(dz[j] * scale);
                for (int i = 0; i < ToxicityHead::kHidden; ++i) {
                    gw2.at(i, j) += static_cast<float>(act[static_cast<std::size_t>(i)] * dz[j] * scale);
                    dact[static_cast<std::size_t>(i)] += head.w2.at(i, j) * dz[j];
                }
            }
            for (int j = 0; j < ToxicityHead::kHidden; ++j) {
                double a = pre[static_cast<std::size_t>(j)];
                double u = kGeluC * (a + 0.044715 * a * a * a);
                double th = std::tanh(u);
                double du = kGeluC * (1.0 + 3.0 * 0.044715 * a * a);
                double dgelu = 0.5 * (1.0 + th) + 0.5 * a * (1.0 - th * th) * du;
                double dpre = dact[static_cast<std::size_t>(j)] * dgelu;
                gb1[static_cast<std::size_t>(j)] += static_cast<float>(dpre * scale);
                for (int i = 0; i < d; ++i)
                    gw1.at(i, j) += static_cast<float>(static_cast<double>(x[i]) * dpre * scale);
            }
        }

        double bc1 = 1.0 - std::pow(c1, step), bc2 = 1.0 - std::pow(c2, step);
        auto update = [&](Tensor& p, const Tensor& g, Tensor& m, Tensor& v) {
            for (std::size_t i = 0; i < p.numel(); ++i) {
                double mi = c1 * m[i] + (1.0 - c1) * g[i];
                double vi = c2 * v[i] + (1.0 - c2) * static_cast<double>(g[i]) * g[i];
                m[i] = static_cast<float>(mi);
                v[i] = static_cast<float>(vi);
                p[i] = static_cast<float>(p[i] - hyper.lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
            }
        };
        update(head.w1, gw1, mw1, vw1);
        update(head.b1, gb1, mb1, vb1);
        update(head.w2, gw2, mw2, vw2);
        update(head.b2, gb2, mb2, vb2);
    }

    int correct = 0;
    for (std::size_t i : hold_idx) {
        Distribution p = head_forward(head, feats[i].data.data(), d);
        int pred = p[1] > 0.5 ? 1 : 0;
        if (pred == labels[keep[i]]) ++correct;
    }
    head.holdout_acc = static_cast<double>(correct) / static_cast<double>(hold_idx.size());
    if (head.holdout_acc < hyper.min_holdout_acc)
        throw std::runtime_error("oracle too weak (holdout accuracy " +
                                 std::to_string(head.holdout_acc) + ")");
    return head;
}

void save_head(const ToxicityHead& head, const std::string& path) {
    nlohmann::ordered_json meta;
    meta["seed"] = head.seed;
    meta["steps"] = head.steps;
    meta["holdout_acc"] = head.holdout_acc;
    std::map<std::string, Tensor> tensors{
        {"b1", head.b1}, {"b2", head.b2}, {"w1", head.w1}, {"w2", head.w2}};
    save_container(path, "TOX1", meta.dump(), tensors);
}

ToxicityHead load_head(const std::string& path) {
    std::string meta_json;
    std::map<std::string, Tensor> tensors;
    load_container(path, "TOX1", meta_json, tensors);
    auto meta = nlohmann::ordered_json::parse(meta_json);
    ToxicityHead head;
    head.w1 = tensors.at("w1");
    head.b1 = tensors.at("b1");
    head.w2 = tensors.at("w2");
    head.b2 = tensors.at("b2");
    head.seed = meta.value("seed", 0ULL);
    head.steps = meta.value("steps", 0);
    head.holdout_acc = meta.value("holdout_acc", 0.0);
    return head;
}

}  // namespace rectify
