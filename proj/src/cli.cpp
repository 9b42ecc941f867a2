#include "rectify/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "rectify/checkpoint.hpp"
#include "rectify/corpus.hpp"
#include "rectify/report.hpp"
#include "rectify/selftest.hpp"
#include "rectify/train.hpp"

namespace rectify {

namespace {

using ordered_json = nlohmann::ordered_json;

// --tau.<attr> flags are dynamic; pull them out before CLI11 sees the line
std::vector<std::string> extract_tau(std::vector<std::string> args,
                                     std::map<std::string, double>& tau) {
    std::vector<std::string> rest;
    for (std::size_t i = 0; i < args.size(); ++i) {
        const std::string& a = args[i];
        if (a.rfind("--tau.", 0) == 0) {
            std::string attr;
            std::string value;
            std::size_t eq = a.find('=');
            if (eq != std::string::npos) {
                attr = a.substr(6, eq - 6);
                value = a.substr(eq + 1);
            } else {
                attr = a.substr(6);
                if (i + 1 >= args.size()) throw CLI::ParseError("--tau." + attr + " needs a value", 1);
                value = args[++i];
            }
            if (attr.empty()) throw CLI::ParseError("--tau.<attr> needs an attribute name", 1);
            tau[attr] = std::stod(value);
        } else {
            rest.push_back(a);
        }
    }
    return rest;
}

struct ModeBundle {
    SamplingConfig sampling;
    InterventionConfig icfg;
    RedoConfig redo;
    bool use_debias = false;
    bool use_detox = false;
};

ModeBundle resolve_mode(const RunConfig& rc, const ModelConfig& cfg,
                        const std::vector<std::string>& attr_names) {
    ModeBundle b;
    bool detox_style = rc.mode == "uddia-t" || rc.mode == "uddia-u";

    b.sampling.top_k = rc.topk >= 0 ? rc.topk : (detox_style ? 0 : 40);
    if (b.sampling.top_k <= 0 || b.sampling.top_k > cfg.vocab_size) b.sampling.top_k = cfg.vocab_size;
    b.sampling.top_p = rc.topp >= 0.0 ? rc.topp : 0.9;
    b.sampling.temperature = rc.temp >= 0.0 ? rc.temp : (detox_style ? 1.0 : 0.7);
    b.sampling.max_new_tokens = rc.len >= 0 ? rc.len : (detox_style ? 20 : 30);

    b.icfg.max_opt_iters = rc.max_iters;
    b.icfg.detox_weight = rc.detox_weight;
    b.redo.dt = rc.dt;

    if (rc.mode == "baseline") {
        b.redo.th = kInf;
        b.redo.t0 = cfg.n_layers;
        b.redo.reset = ResetScope::PerPrompt;
    } else if (rc.mode == "uddia-b") {
        b.use_debias = true;
        b.icfg.optimizer = InterventionConfig::Optimizer::Adam;
        b.icfg.lr = (rc.lr >= 0.0 ? rc.lr : 3e-3) * rc.lr_mult;
        b.icfg.debias_weight = rc.debias_weight >= 0.0 ? rc.debias_weight : 1.0;
        b.redo.th = kInf;
        b.redo.t0 = cfg.n_layers;
        b.redo.reset = ResetScope::PerPrompt;
    } else if (rc.mode == "uddia-t") {
        b.use_detox = true;
        b.icfg.detox_enabled = true;
        b.icfg.optimizer = InterventionConfig::Optimizer::Sgd;
        b.icfg.lr = (rc.lr >= 0.0 ? rc.lr : 6e-2) * rc.lr_mult;
        b.redo.th = rc.th >= 0.0 ? rc.th : kInf;
        b.redo.t0 = rc.t0 >= 0 ? rc.t0 : cfg.n_layers / 2;
        b.redo.reset = ResetScope::PerStep;
    } else if (rc.mode == "uddia-u") {
        b.use_debias = true;
        b.use_detox = true;
        b.icfg.detox_enabled = true;
        b.icfg.optimizer = InterventionConfig::Optimizer::Sgd;
        b.icfg.lr = (rc.lr >= 0.0 ? rc.lr : 6e-2) * rc.lr_mult;
        b.icfg.debias_weight = rc.debias_weight >= 0.0 ? rc.debias_weight : 5e-2;
        b.redo.th = rc.th >= 0.0 ? rc.th : kInf;
        b.redo.t0 = rc.t0 >= 0 ? rc.t0 : cfg.n_layers / 2;
        b.redo.reset = ResetScope::PerStep;
    } else {
        throw CLI::ParseError("unknown mode: " + rc.mode, 1);
    }
    if (rc.t0 >= 0) b.redo.t0 = rc.t0;
    if (rc.th >= 0.0) b.redo.th = rc.th;

    if (b.use_debias)
        for (const auto& name : attr_names) {
            auto it = rc.tau.find(name);
            b.icfg.tau[name] = it != rc.tau.end() ? it->second : 0.12;
        }
    return b;
}

std::vector<std::vector<int>> load_corpus_ids(const std::string& path, const Vocabulary& vocab) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open corpus: " + path);
    std::vector<std::vector<int>> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<int> ids = tokenize(line, vocab);
        ids.push_back(vocab.eos);
        out.push_back(std::move(ids));
    }
    return out;
}

struct LabeledCorpus {
    std::vector<std::vector<int>> sentences;
    std::vector<int> group, toxic, sentiment;
};

LabeledCorpus load_labeled(const std::string& corpus_path, const std::string& labels_path,
                           const Vocabulary& vocab) {
    LabeledCorpus lc;
    lc.sentences = load_corpus_ids(corpus_path, vocab);
    std::ifstream in(labels_path);
    if (!in) throw std::runtime_error("cannot open labels: " + labels_path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        int g, t, s;
        char tab;
        ss >> g >> std::ws >> t >> std::ws >> s;
        (void)tab;
        lc.group.push_back(g);
        lc.toxic.push_back(t);
        lc.sentiment.push_back(s);
    }
    if (lc.group.size() != lc.sentences.size())
        throw std::runtime_error("labels/corpus line count mismatch");
    return lc;
}

int cmd_corpus(std::vector<std::string> args);
int cmd_train_lm(std::vector<std::string> args);
int cmd_train_tox(std::vector<std::string> args);
int cmd_build_dirs(std::vector<std::string> args);
int cmd_generate(std::vector<std::string> args);
int cmd_eval(std::vector<std::string> args);

void add_common_run_flags(CLI::App& app, RunConfig& rc) {
    app.add_option("--mode", rc.mode);
    app.add_option("--ckpt", rc.ckpt)->required();
    app.add_option("--vocab", rc.vocab)->required();
    app.add_option("--seed-words", rc.seed_words);
    app.add_option("--tox-head", rc.tox_head);
    app.add_option("--eval-tox-head", rc.eval_tox_head);
    app.add_option("--senti-head", rc.senti_head);
    app.add_option("--prompts", rc.prompts)->required();
    app.add_option("--out", rc.out)->required();
    app.add_option("--seed", rc.seed);
    app.add_option("--jobs", rc.jobs);
    app.add_option("--lr", rc.lr);
    app.add_option("--lr-mult", rc.lr_mult);
    app.add_option("--th", rc.th);
    app.add_option("--t0", rc.t0);
    app.add_option("--dt", rc.dt);
    app.add_option("--topk", rc.topk);
    app.add_option("--topp", rc.topp);
    app.add_option("--temp", rc.temp);
    app.add_option("--len", rc.len);
    app.add_option("--max-iters", rc.max_iters);
    app.add_option("--detox-weight", rc.detox_weight);
    app.add_option("--debias-weight", rc.debias_weight);
    app.add_option("--gens", rc.gens);
    app.add_option("--horizon", rc.horizon);
    app.add_flag("--mean-of-diffs", rc.mean_of_differences);
}

struct LoadedRun {
    Checkpoint ckpt;
    Vocabulary vocab;
    std::vector<AttributeSpec> specs;
    std::vector<DebiasAttribute> debias;
    ToxicityHead steer_head, eval_head, senti_head;
    bool has_steer = false, has_eval = false, has_senti = false;
    ModeBundle bundle;
};

LoadedRun load_run(const RunConfig& rc) {
    LoadedRun lr;
    lr.ckpt = load_checkpoint(rc.ckpt);
    lr.vocab = Vocabulary::load(rc.vocab);
    if (lr.vocab.size() != lr.ckpt.config.vocab_size)
        throw std::runtime_error("vocabulary size does not match checkpoint");

    std::vector<std::string> attr_names;
    bool debias_mode = rc.mode == "uddia-b" || rc.mode == "uddia-u";
    if (debias_mode) {
        if (rc.seed_words.empty()) throw std::runtime_error(rc.mode + " requires --seed-words");
        lr.specs = load_attribute_specs(rc.seed_words);
        for (const auto& s : lr.specs) attr_names.push_back(s.name);
    }
    lr.bundle = resolve_mode(rc, lr.ckpt.config, attr_names);

    if (debias_mode) {
        if (lr.ckpt.token_freq.numel() == 0)
            throw std::runtime_error("checkpoint lacks a token frequency table");
        for (const auto& s : lr.specs)
            if (s.backend == AttributeSpec::Backend::Direction)
                lr.debias.push_back(prepare_debias_attribute(s, lr.ckpt.params.at("tok_emb"),
                                                             lr.ckpt.token_freq, lr.vocab));
    }
    if (lr.bundle.use_detox) {
        if (rc.tox_head.empty()) throw std::runtime_error(rc.mode + " requires --tox-head");
        lr.steer_head = load_head(rc.tox_head);
        lr.has_steer = true;
    }
    if (!rc.eval_tox_head.empty()) {
        lr.eval_head = load_head(rc.eval_tox_head);
        lr.has_eval = true;
    }
    if (!rc.senti_head.empty()) {
        lr.senti_head = load_head(rc.senti_head);
        lr.has_senti = true;
    }
    return lr;
}

std::vector<PromptPair> load_prompts_any(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open prompts: " + path);
    std::vector<PromptPair> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t t1 = line.find('\t');
        if (t1 == std::string::npos) {
            out.push_back({"", line, ""});
            continue;
        }
        std::size_t t2 = line.find('\t', t1 + 1);
        if (t2 == std::string::npos) throw std::runtime_error("malformed prompt line: " + line);
        out.push_back({line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1), line.substr(t2 + 1)});
    }
    return out;
}

int cmd_corpus(std::vector<std::string> args) {
    CLI::App app{"synthetic corpus generator"};
    std::string out_dir;
    int size = 10000;
    std::uint64_t seed = 0;
    double skew = 0.8, tox_a = 0.0, tox_b = 0.0;
    app.add_option("--out", out_dir)->required();
    app.add_option("--size", size);
    app.add_option("--seed", seed);
    app.add_option("--skew", skew);
    app.add_option("--tox-a", tox_a);
    app.add_option("--tox-b", tox_b);
    std::reverse(args.begin(), args.end());
    app.parse(args);

    CorpusSpec spec;
    spec.size = size;
    spec.seed = seed;
    spec.occupation_skew = {{skew, 1.0 - skew}, {1.0 - skew, skew}};
    spec.descriptor_skew = {{skew, 1.0 - skew}, {1.0 - skew, skew}};
    spec.toxic_prob = {tox_a, tox_b};
    corpus_generate(spec, out_dir);
    std::cout << "corpus written to " << out_dir << "\n";
    return 0;
}

int cmd_train_lm(std::vector<std::string> args) {
    CLI::App app{"train the micro language model"};
    std::string corpus, vocab_path, out;
    TrainHyper hyper;
    ModelConfig cfg;
    app.add_option("--corpus", corpus)->required();
    app.add_option("--vocab", vocab_path)->required();
    app.add_option("--out", out)->required();
    app.add_option("--steps", hyper.steps);
    app.add_option("--batch", hyper.batch);
    app.add_option("--lr", hyper.lr);
    app.add_option("--seed", hyper.seed);
    app.add_option("--layers", cfg.n_layers);
    app.add_option("--dmodel", cfg.d_model);
    app.add_option("--heads", cfg.n_heads);
    app.add_option("--dff", cfg.d_ff);
    app.add_option("--maxseq", cfg.max_seq_len);
    std::reverse(args.begin(), args.end());
    app.parse(args);

    Vocabulary vocab = Vocabulary::load(vocab_path);
    cfg.vocab_size = vocab.size();
    auto ids = load_corpus_ids(corpus, vocab);
    Tensor freq = token_frequency_table(ids, cfg.vocab_size, vocab.bos);
    Checkpoint ckpt = train_lm(ids, cfg, hyper, sha256_file(corpus), freq);
    save_checkpoint(ckpt, out);
    std::cout << "final training loss " << ckpt.final_loss << " nats/token -> " << out << "\n";
    return 0;
}

int cmd_train_tox(std::vector<std::string> args) {
    CLI::App app{"train a property head on pooled hidden states"};
    std::string ckpt_path, vocab_path, corpus, labels, out, label_col = "toxic";
    HeadHyper hyper;
    app.add_option("--ckpt", ckpt_path)->required();
    app.add_option("--vocab", vocab_path)->required();
    app.add_option("--corpus", corpus)->required();
    app.add_option("--labels", labels)->required();
    app.add_option("--out", out)->required();
    app.add_option("--seed", hyper.seed);
    app.add_option("--steps", hyper.steps);
    app.add_option("--lr", hyper.lr);
    app.add_option("--label-col", label_col);
    app.add_option("--holdout-phase", hyper.holdout_phase);
    app.add_option("--min-acc", hyper.min_holdout_acc);
    std::reverse(args.begin(), args.end());
    app.parse(args);

    Checkpoint ckpt = load_checkpoint(ckpt_path);
    Vocabulary vocab = Vocabulary::load(vocab_path);
    LabeledCorpus lc = load_labeled(corpus, labels, vocab);
    const std::vector<int>& col = label_col == "sentiment" ? lc.sentiment
                                : label_col == "group"     ? lc.group
                                                           : lc.toxic;
    ToxicityHead head = train_toxicity_head(ckpt.config, ckpt.params, lc.sentences, col, hyper);
    save_head(head, out);
    std::cout << "holdout accuracy " << head.holdout_acc << " -> " << out << "\n";
    return 0;
}

int cmd_build_dirs(std::vector<std::string> args) {
    CLI::App app{"build attribute value directions"};
    std::string ckpt_path, vocab_path, seeds_path, out;
    app.add_option("--ckpt", ckpt_path)->required();
    app.add_option("--vocab", vocab_path)->required();
    app.add_option("--seed-words", seeds_path)->required();
    app.add_option("--out", out)->required();
    std::reverse(args.begin(), args.end());
    app.parse(args);

    Checkpoint ckpt = load_checkpoint(ckpt_path);
    Vocabulary vocab = Vocabulary::load(vocab_path);
    auto specs = load_attribute_specs(seeds_path);
    ordered_json doc;
    for (const auto& spec : specs) {
        if (spec.backend != AttributeSpec::Backend::Direction) continue;
        DirectionSet ds = build_directions(spec, ckpt.params.at("tok_emb"), vocab);
        ordered_json attr;
        for (std::size_t v = 0; v < spec.values.size(); ++v)
            attr[spec.values[v]] = ds.dirs[v].data;
        doc[spec.name] = attr;
    }
    std::ofstream os(out);
    if (!os) throw std::runtime_error("cannot write " + out);
    os << doc.dump(2) << "\n";
    std::cout << "directions -> " << out << "\n";
    return 0;
}

int cmd_generate(std::vector<std::string> args) {
    RunConfig rc;
    args = extract_tau(args, rc.tau);
    CLI::App app{"rectified generation"};
    add_common_run_flags(app, rc);
    std::reverse(args.begin(), args.end());
    app.parse(args);

    LoadedRun run = load_run(rc);
    auto pairs = load_prompts_any(rc.prompts);
    const ModelConfig& cfg = run.ckpt.config;

    SamplingConfig scfg = run.bundle.sampling;
    scfg.eos_id = run.vocab.eos;

    struct Row {
        std::string prompt, continuation;
        std::vector<std::string> trace;
    };
    std::vector<Row> rows(pairs.size() * static_cast<std::size_t>(rc.gens));

#ifdef _OPENMP
    omp_set_num_threads(std::max(1, rc.jobs));
#endif
#pragma omp parallel for schedule(dynamic) collapse(2)
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        for (int g = 0; g < rc.gens; ++g) {
            std::vector<int> prompt = tokenize(pairs[p].c0, run.vocab);
            std::vector<int> paired;
            bool has_pair = !pairs[p].c1.empty();
            if (has_pair) paired = tokenize(pairs[p].c1, run.vocab);
            std::uint64_t key = static_cast<std::uint64_t>(p) * static_cast<std::uint64_t>(rc.gens) +
                                static_cast<std::uint64_t>(g);
            GenerationRecord rec = redo_generate(
                cfg, run.ckpt.params, run.debias, run.has_steer ? &run.steer_head : nullptr,
                run.bundle.icfg, run.bundle.redo, scfg, prompt, has_pair ? &paired : nullptr,
                rc.seed, key);
            Row& row = rows[p * static_cast<std::size_t>(rc.gens) + static_cast<std::size_t>(g)];
            row.prompt = pairs[p].c0;
            row.continuation = detokenize(rec.chosen_tokens(), run.vocab);
            for (const auto& e : rec.trace) row.trace.push_back(format_trace_line(e));
        }
    }

    std::ofstream out(rc.out);
    std::ofstream trace(rc.out + ".trace");
    if (!out || !trace) throw std::runtime_error("cannot write outputs to " + rc.out);
    out << "# config = " << rc.echo_json() << "\n";
    trace << "# config = " << rc.echo_json() << "\n";
    for (const auto& row : rows) {
        out << row.prompt << "\t" << row.continuation << "\n";
        for (const auto& line : row.trace) trace << line << "\n";
    }
    std::cout << "wrote " << rows.size() << " continuations -> " << rc.out << "\n";
    return 0;
}

int cmd_eval(std::vector<std::string> args) {
    RunConfig rc;
    args = extract_tau(args, rc.tau);
    CLI::App app{"metric harness"};
    add_common_run_flags(app, rc);
    std::reverse(args.begin(), args.end());
    app.parse(args);

    LoadedRun run = load_run(rc);
    if (!run.has_eval) throw std::runtime_error("eval requires --eval-tox-head");

    EvalInputs in;
    in.cfg = run.ckpt.config;
    in.base = &run.ckpt.params;
    in.vocab = &run.vocab;
    in.pairs = load_prompt_pairs(rc.prompts);
    in.debias = std::move(run.debias);
    in.steer_head = run.has_steer ? &run.steer_head : nullptr;
    in.eval_head = &run.eval_head;
    in.senti_head = run.has_senti ? &run.senti_head : nullptr;
    in.ecfg.mode = rc.mode;
    in.ecfg.gens_per_prompt = rc.gens;
    in.ecfg.horizon = rc.horizon;
    in.ecfg.seed = rc.seed;
    in.ecfg.jobs = rc.jobs;
    in.ecfg.mean_of_differences = rc.mean_of_differences;
    in.ecfg.sampling = run.bundle.sampling;
    in.ecfg.sampling.eos_id = run.vocab.eos;
    in.ecfg.icfg = run.bundle.icfg;
    in.ecfg.redo = run.bundle.redo;
    in.ecfg.config_echo = rc.echo_json();

    EvalReport report = full_report(in);
    write_report(report, rc.out);
    std::cout << "report -> " << rc.out << "\n";
    return 0;
}

}  // namespace

std::string RunConfig::echo_json() const {
    ordered_json j;
    j["mode"] = mode;
    j["ckpt"] = ckpt;
    j["vocab"] = vocab;
    j["seed_words"] = seed_words;
    j["tox_head"] = tox_head;
    j["eval_tox_head"] = eval_tox_head;
    j["senti_head"] = senti_head;
    j["prompts"] = prompts;
    j["out"] = out;
    j["seed"] = seed;
    j["jobs"] = jobs;
    ordered_json taus;
    for (const auto& [k, v] : tau) taus[k] = v;
    j["tau"] = taus;
    j["lr"] = lr;
    j["lr_mult"] = lr_mult;
    j["th"] = th;
    j["t0"] = t0;
    j["dt"] = dt;
    j["topk"] = topk;
    j["topp"] = topp;
    j["temp"] = temp;
    j["len"] = len;
    j["max_iters"] = max_iters;
    j["detox_weight"] = detox_weight;
    j["debias_weight"] = debias_weight;
    j["gens"] = gens;
    j["horizon"] = horizon;
    j["mean_of_differences"] = mean_of_differences;
    return j.dump();
}

int run(const std::vector<std::string>& argv) {
    if (argv.empty()) {
        std::cerr << "usage: rectify <corpus|train-lm|train-tox|build-dirs|generate|eval|selftest> [flags]\n";
        return 1;
    }
    std::vector<std::string> rest(argv.begin() + 1, argv.end());
    try {
        const std::string& cmd = argv[0];
        if (cmd == "corpus") return cmd_corpus(rest);
        if (cmd == "train-lm") return cmd_train_lm(rest);
        if (cmd == "train-tox") return cmd_train_tox(rest);
        if (cmd == "build-dirs") return cmd_build_dirs(rest);
        if (cmd == "generate") return cmd_generate(rest);
        if (cmd == "eval") return cmd_eval(rest);
        if (cmd == "selftest") {
            std::uint64_t seed = 1234;
            if (rest.size() == 2 && rest[0] == "--seed") seed = std::stoull(rest[1]);
            return selfcheck::selftest_main(seed);
        }
        std::cerr << "unknown subcommand: " << cmd << "\n";
        return 1;
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace rectify
