#include "rectify/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rectify {

namespace {

std::string fmt6(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

}  // namespace

void write_report(const EvalReport& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report: " + path);
    out << "mode = " << r.mode << "\n";
    out << "seed = " << r.seed << "\n";
    out << "m_pairs = " << r.m_pairs << "\n";
    out << "n_gens = " << r.n_gens << "\n";
    out << "horizon = " << r.horizon << "\n";
    out << "ppl = " << fmt6(r.ppl) << "\n";
    out << "ppl_median = " << fmt6(r.ppl_median) << "\n";
    out << "avg_max_tox = " << fmt6(r.avg_max_tox) << "\n";
    out << "tox_prob = " << fmt6(r.tox_prob) << "\n";
    out << "tox_prob_group0 = " << fmt6(r.tox_prob_group0) << "\n";
    out << "tox_prob_group1 = " << fmt6(r.tox_prob_group1) << "\n";
    out << "tox_prob_gap = " << fmt6(r.tox_prob_gap) << "\n";
    for (const auto& [name, diff] : r.global_diff)
        out << "global_diff_" << name << " = " << fmt6(diff) << "\n";
    out << "q_global = " << fmt6(r.q_global) << "\n";
    out << "local_hellinger_x100 = " << fmt6(r.local_hellinger_x100) << "\n";
    out << "q_pairs = " << fmt6(r.q_pairs) << "\n";
    out << "replay_total = " << r.replay_total << "\n";
    out << "config = " << r.config_echo << "\n";
}

EvalReport read_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open report: " + path);
    EvalReport r;
    std::string line;
    while (std::getline(in, line)) {
        std::size_t eq = line.find(" = ");
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq), val = line.substr(eq + 3);
        if (key == "mode") r.mode = val;
        else if (key == "seed") r.seed = std::stoull(val);
        else if (key == "m_pairs") r.m_pairs = std::stoi(val);
        else if (key == "n_gens") r.n_gens = std::stoi(val);
        else if (key == "horizon") r.horizon = std::stoi(val);
        else if (key == "ppl") r.ppl = std::stod(val);
        else if (key == "ppl_median") r.ppl_median = std::stod(val);
        else if (key == "avg_max_tox") r.avg_max_tox = std::stod(val);
        else if (key == "tox_prob") r.tox_prob = std::stod(val);
        else if (key == "tox_prob_group0") r.tox_prob_group0 = std::stod(val);
        else if (key == "tox_prob_group1") r.tox_prob_group1 = std::stod(val);
        else if (key == "tox_prob_gap") r.tox_prob_gap = std::stod(val);
        else if (key == "q_global") r.q_global = std::stod(val);
        else if (key == "local_hellinger_x100") r.local_hellinger_x100 = std::stod(val);
        else if (key == "q_pairs") r.q_pairs = std::stod(val);
        else if (key == "replay_total") r.replay_total = std::stol(val);
        else if (key == "config") r.config_echo = val;
        else if (key.rfind("global_diff_", 0) == 0) r.global_diff[key.substr(12)] = std::stod(val);
    }
    return r;
}

EvalReport full_report(const EvalInputs& in) {
    if (!in.base || !in.vocab || !in.eval_head) throw std::invalid_argument("missing eval inputs");
    if (in.pairs.empty()) throw std::invalid_argument("no prompt pairs");
    const EvalConfig& e = in.ecfg;
    int m = static_cast<int>(in.pairs.size());
    int n = e.gens_per_prompt;

    struct Unit {
        std::vector<int> tokens;
        double ppl = 0.0;
        bool has_ppl = false;
        double tox = 0.0;
        double senti = 0.0;
        long replays = 0;
        std::vector<double> pair_h;  // side-0 units only
    };
    std::vector<Unit> units(static_cast<std::size_t>(m) * 2 * static_cast<std::size_t>(n));

    std::vector<std::vector<int>> prompts(static_cast<std::size_t>(m) * 2);
    for (int i = 0; i < m; ++i) {
        prompts[static_cast<std::size_t>(i) * 2] = tokenize(in.pairs[static_cast<std::size_t>(i)].c0, *in.vocab);
        prompts[static_cast<std::size_t>(i) * 2 + 1] = tokenize(in.pairs[static_cast<std::size_t>(i)].c1, *in.vocab);
    }

#ifdef _OPENMP
    omp_set_num_threads(std::max(1, e.jobs));
#endif
    std::exception_ptr failure = nullptr;
#pragma omp parallel for schedule(dynamic) collapse(2)
    for (int pi = 0; pi < m * 2; ++pi) {
        for (int g = 0; g < n; ++g) {
            try {
                int pair_idx = pi / 2, side = pi % 2;
                std::uint64_t key = static_cast<std::uint64_t>(pi) * static_cast<std::uint64_t>(n) +
                                    static_cast<std::uint64_t>(g);
                const std::vector<int>& prompt = prompts[static_cast<std::size_t>(pi)];
                const std::vector<int>* paired =
                    side == 0 ? &prompts[static_cast<std::size_t>(pair_idx) * 2 + 1] : nullptr;

                GenerationRecord rec = redo_generate(in.cfg, *in.base, in.debias, in.steer_head,
                                                     e.icfg, e.redo, e.sampling, prompt, paired,
                                                     e.seed, key);
                Unit& u = units[static_cast<std::size_t>(pi) * static_cast<std::size_t>(n) +
                                static_cast<std::size_t>(g)];
                u.tokens = rec.chosen_tokens();
                u.replays = rec.replay_count;
                if (!u.tokens.empty() && std::isfinite(rec.final_ppl)) {
                    u.ppl = rec.final_ppl;
                    u.has_ppl = true;
                }
                u.pair_h = rec.pair_hellinger;
                ParamView base_view(*in.base);
                u.tox = score_property(in.cfg, base_view, *in.eval_head, *in.vocab, prompt, u.tokens);
                if (in.senti_head)
                    u.senti = score_property(in.cfg, base_view, *in.senti_head, *in.vocab, prompt, u.tokens);
            } catch (...) {
#pragma omp critical
                if (!failure) failure = std::current_exception();
            }
        }
    }
    if (failure) std::rethrow_exception(failure);

    auto unit_at = [&](int pi, int g) -> const Unit& {
        return units[static_cast<std::size_t>(pi) * static_cast<std::size_t>(n) +
                     static_cast<std::size_t>(g)];
    };

    EvalReport r;
    r.mode = e.mode;
    r.seed = e.seed;
    r.m_pairs = m;
    r.n_gens = n;
    r.horizon = e.horizon;
    r.config_echo = e.config_echo;

    // fluency
    std::vector<double> ppls;
    for (int pi = 0; pi < m * 2; ++pi)
        for (int g = 0; g < n; ++g)
            if (unit_at(pi, g).has_ppl) ppls.push_back(unit_at(pi, g).ppl);
    if (ppls.empty()) throw std::runtime_error("no scorable generations");
    double acc = 0.0;
    for (double p : ppls) acc += p;
    r.ppl = acc / static_cast<double>(ppls.size());
    std::vector<double> sorted = ppls;
    std::sort(sorted.begin(), sorted.end());
    r.ppl_median = sorted[sorted.size() / 2];

    // toxicity over all prompts and per group
    std::vector<std::vector<double>> tox_all, tox_g0, tox_g1, senti_g0, senti_g1;
    for (int pi = 0; pi < m * 2; ++pi) {
        std::vector<double> scores;
        std::vector<double> senti;
        for (int g = 0; g < n; ++g) {
            scores.push_back(unit_at(pi, g).tox);
            senti.push_back(unit_at(pi, g).senti);
        }
        tox_all.push_back(scores);
        if (pi % 2 == 0) {
            tox_g0.push_back(scores);
            senti_g0.push_back(senti);
        } else {
            tox_g1.push_back(scores);
            senti_g1.push_back(senti);
        }
    }
    ToxicityMetrics tm = toxicity_metrics(tox_all);
    r.avg_max_tox = tm.avg_max;
    r.tox_prob = tm.prob;
    r.tox_prob_group0 = toxicity_metrics(tox_g0).prob;
    r.tox_prob_group1 = toxicity_metrics(tox_g1).prob;
    r.tox_prob_gap = std::abs(r.tox_prob_group0 - r.tox_prob_group1);

    r.global_diff["toxicity"] = global_bias_diff(tox_g0, tox_g1, e.mean_of_differences);
    if (in.senti_head)
        r.global_diff["sentiment"] = global_bias_diff(senti_g0, senti_g1, e.mean_of_differences);
    double qacc = 0.0;
    for (const auto& [name, diff] : r.global_diff) qacc += diff * diff;
    r.q_global = std::sqrt(qacc / static_cast<double>(r.global_diff.size()));

    // local bias: per-step pair Hellinger recorded along the side-0 generations
    double hacc = 0.0;
    long hcount = 0;
    for (int pi = 0; pi < m * 2; pi += 2)
        for (int g = 0; g < n; ++g) {
            const Unit& u = unit_at(pi, g);
            int steps = std::min<int>(e.horizon, static_cast<int>(u.pair_h.size()));
            for (int t = 0; t < steps; ++t) {
                hacc += u.pair_h[static_cast<std::size_t>(t)];
                ++hcount;
            }
        }
    r.local_hellinger_x100 = hcount ? 100.0 * hacc / static_cast<double>(hcount) : 0.0;
    r.q_pairs = norm2(r.local_hellinger_x100, r.ppl);

    for (int pi = 0; pi < m * 2; ++pi)
        for (int g = 0; g < n; ++g) r.replay_total += unit_at(pi, g).replays;

    return r;
}

}  // namespace rectify
