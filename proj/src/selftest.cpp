#include "rectify/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "rectify/losses.hpp"
#include "rectify/metrics.hpp"
#include "rectify/rng.hpp"
#include "rectify/sampler.hpp"
#include "rectify/tape.hpp"

namespace rectify::selfcheck {

namespace {

void expect(SuiteResult& r, bool ok, const std::string& what) {
    if (ok) {
        ++r.passed;
    } else {
        ++r.failed;
        if (r.detail.empty()) r.detail = what;
    }
}

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

}  // namespace

Joint random_joint(std::mt19937_64& rng, int nx, int na) {
    Joint j(static_cast<std::size_t>(nx), std::vector<double>(static_cast<std::size_t>(na)));
    double total = 0.0;
    for (auto& row : j)
        for (double& v : row) {
            v = -std::log(std::max(uniform01(rng), 1e-12));
            total += v;
        }
    for (auto& row : j)
        for (double& v : row) v /= total;
    // exact renormalization pass so the 1e-9 validity gate holds
    double s = 0.0;
    for (auto& row : j)
        for (double v : row) s += v;
    for (auto& row : j)
        for (double& v : row) v /= s;
    return j;
}

SuiteResult lemma1_suite(std::uint64_t seed, int instances) {
    SuiteResult r{"lemma1-token-loss-vs-brute-force-mi", 0, 0, ""};
    auto rng = substream(seed, 101);
    for (int i = 0; i < instances; ++i) {
        int nx = 2 + static_cast<int>(rng() % 15);  // |V| <= 16
        Joint joint = random_joint(rng, nx, 2);
        Distribution px = joint_marginal_x(joint);
        Distribution pa = joint_marginal_a(joint);
        // rows: posterior p(a|x)
        std::vector<Distribution> rows;
        for (int x = 0; x < nx; ++x) {
            std::vector<double> row(2);
            for (int a = 0; a < 2; ++a) row[static_cast<std::size_t>(a)] =
                joint[static_cast<std::size_t>(x)][static_cast<std::size_t>(a)] / px[static_cast<std::size_t>(x)];
            rows.push_back(Distribution::unchecked(std::move(row)));
        }
        double lt = token_level_loss(px, rows, pa);
        double mi = mutual_info_bruteforce(joint);
        expect(r, std::abs(lt - mi) <= 1e-9,
               "instance " + std::to_string(i) + ": L_t=" + fmt(lt) + " vs MI=" + fmt(mi));
        // mixture-KL with the exact marginal is the same number
        double mk = mixture_kl_bound(joint, px);
        expect(r, std::abs(mk - mi) <= 1e-9, "mixture-KL with exact marginal drifted");
    }
    return r;
}

SuiteResult upper_bound_suite(std::uint64_t seed, int instances) {
    SuiteResult r{"lemma1-mixture-kl-upper-bound", 0, 0, ""};
    auto rng = substream(seed, 102);
    for (int i = 0; i < instances; ++i) {
        int nx = 2 + static_cast<int>(rng() % 15);
        Joint joint = random_joint(rng, nx, 2);
        double mi = mutual_info_bruteforce(joint);
        // a mismatched reference distribution
        std::vector<double> ref(static_cast<std::size_t>(nx));
        double tot = 0.0;
        for (double& v : ref) {
            v = -std::log(std::max(uniform01(rng), 1e-12));
            tot += v;
        }
        for (double& v : ref) v /= tot;
        double bound = mixture_kl_bound(joint, Distribution::unchecked(std::move(ref)));
        expect(r, bound >= mi - 1e-12,
               "instance " + std::to_string(i) + ": bound " + fmt(bound) + " < MI " + fmt(mi));
    }
    return r;
}

SuiteResult conditional_decomposition_suite(std::uint64_t seed, int instances) {
    SuiteResult r{"eq3-delta-context-decomposition", 0, 0, ""};
    auto rng = substream(seed, 103);
    for (int i = 0; i < instances; ++i) {
        int nx = 2 + static_cast<int>(rng() % 15);
        // random conditional joint given the single context
        Joint joint = random_joint(rng, nx, 2);
        Distribution px = joint_marginal_x(joint);
        Distribution pa = joint_marginal_a(joint);
        std::vector<Distribution> ctx_rows, tok_rows;
        for (int x = 0; x < nx; ++x) {
            std::vector<double> row(2);
            for (int a = 0; a < 2; ++a) row[static_cast<std::size_t>(a)] =
                joint[static_cast<std::size_t>(x)][static_cast<std::size_t>(a)] / px[static_cast<std::size_t>(x)];
            ctx_rows.push_back(Distribution::unchecked(row));
            tok_rows.push_back(Distribution::unchecked(row));
        }
        double lt = token_level_loss(px, tok_rows, pa);
        double lc = context_loss(px, ctx_rows, tok_rows);
        double mi_cond = mutual_info_conditional({joint});  // p(c) = delta
        expect(r, std::abs((lt + lc) - mi_cond) <= 1e-9,
               "instance " + std::to_string(i) + ": Lt+Lc=" + fmt(lt + lc) + " vs I=" + fmt(mi_cond));
    }
    return r;
}

SuiteResult theorem1_suite(std::uint64_t seed, int instances) {
    SuiteResult r{"theorem1-additivity-and-strict-bound", 0, 0, ""};
    auto rng = substream(seed, 104);
    for (int i = 0; i < instances; ++i) {
        // product construction: x = (x1, x2), a_k depends only on x_k
        int n1 = 2 + static_cast<int>(rng() % 3), n2 = 2 + static_cast<int>(rng() % 3);
        auto rand_dist = [&](int n) {
            std::vector<double> v(static_cast<std::size_t>(n));
            double t = 0.0;
            for (double& x : v) {
                x = -std::log(std::max(uniform01(rng), 1e-12));
                t += x;
            }
            for (double& x : v) x /= t;
            return v;
        };
        std::vector<double> p1 = rand_dist(n1), p2 = rand_dist(n2);
        std::vector<std::vector<double>> r1, r2;  // p(a_k|x_k), binary
        for (int x = 0; x < n1; ++x) {
            double q = 0.05 + 0.9 * uniform01(rng);
            r1.push_back({q, 1.0 - q});
        }
        for (int x = 0; x < n2; ++x) {
            double q = 0.05 + 0.9 * uniform01(rng);
            r2.push_back({q, 1.0 - q});
        }

        // joint over x=(x1,x2) against (a1,a2) flattened, plus single-attribute joints
        int nx = n1 * n2;
        Joint j1(static_cast<std::size_t>(nx), std::vector<double>(2));
        Joint j2(static_cast<std::size_t>(nx), std::vector<double>(2));
        Joint j12(static_cast<std::size_t>(nx), std::vector<double>(4));
        for (int x1 = 0; x1 < n1; ++x1)
            for (int x2 = 0; x2 < n2; ++x2) {
                int x = x1 * n2 + x2;
                double px = p1[static_cast<std::size_t>(x1)] * p2[static_cast<std::size_t>(x2)];
                for (int a1 = 0; a1 < 2; ++a1)
                    for (int a2 = 0; a2 < 2; ++a2)
                        j12[static_cast<std::size_t>(x)][static_cast<std::size_t>(a1 * 2 + a2)] =
                            px * r1[static_cast<std::size_t>(x1)][static_cast<std::size_t>(a1)] *
                            r2[static_cast<std::size_t>(x2)][static_cast<std::size_t>(a2)];
                for (int a1 = 0; a1 < 2; ++a1)
                    j1[static_cast<std::size_t>(x)][static_cast<std::size_t>(a1)] =
                        px * r1[static_cast<std::size_t>(x1)][static_cast<std::size_t>(a1)];
                for (int a2 = 0; a2 < 2; ++a2)
                    j2[static_cast<std::size_t>(x)][static_cast<std::size_t>(a2)] =
                        px * r2[static_cast<std::size_t>(x2)][static_cast<std::size_t>(a2)];
            }
        double i1 = mutual_info_bruteforce(j1);
        double i2 = mutual_info_bruteforce(j2);
        double i12 = mutual_info_bruteforce(j12);
        expect(r, std::abs((i1 + i2) - i12) <= 1e-9,
               "additivity: " + fmt(i1 + i2) + " vs " + fmt(i12));

        // strict bound with attribute mixing p(a=k), both < 1
        double pk = 0.1 + 0.8 * uniform01(rng);
        Distribution px1 = joint_marginal_x(j1);
        double bound = pk * mixture_kl_bound(j1, px1) + (1.0 - pk) * mixture_kl_bound(j2, joint_marginal_x(j2));
        expect(r, i12 > bound, "strict bound violated: I=" + fmt(i12) + " bound=" + fmt(bound));
    }
    return r;
}

SuiteResult q_arithmetic_suite() {
    SuiteResult r{"q-aggregation-published-cells", 0, 0, ""};
    expect(r, std::abs(quadratic_mean3(3.74, 2.84, 1.02) - 2.77) <= 0.01, "rms3 gpt2 row");
    expect(r, std::abs(quadratic_mean3(2.28, 1.45, 0.89) - 1.64) <= 0.01, "rms3 rectified row");
    expect(r, std::abs(norm2(15.24, 18.21) - 23.75) <= 0.01, "norm2 local baseline");
    expect(r, std::abs(norm2(12.66, 28.25) - 30.96) <= 0.01, "norm2 quality");
    expect(r, std::abs(norm2(10.89, 8.64) - 13.90) <= 0.01, "norm2 local rectified");
    expect(r, quadratic_mean3(0, 0, 0) == 0.0, "zero case");
    return r;
}

SuiteResult distribution_suite(std::uint64_t seed, int instances) {
    SuiteResult r{"distribution-primitive-invariants", 0, 0, ""};
    auto rng = substream(seed, 105);

    Distribution u = softmax(std::vector<double>{0.0, 0.0, 0.0}, 1.0);
    expect(r, std::abs(u[0] - 1.0 / 3) < 1e-15, "uniform softmax");
    Distribution two = softmax(std::vector<double>{std::log(2.0), 0.0}, 1.0);
    expect(r, std::abs(two[0] - 2.0 / 3) < 1e-12, "ln2 softmax");
    Distribution sharp = softmax(std::vector<double>{10.0, 0.0}, 0.1);
    expect(r, sharp[0] >= 1.0 - 1e-40, "sharp softmax head mass");

    expect(r, kl_divergence(Distribution({0.3, 0.7}), Distribution({0.3, 0.7})) == 0.0, "kl identity");
    expect(r, std::abs(kl_divergence(Distribution({1.0, 0.0}), Distribution({0.5, 0.5})) - std::log(2.0)) < 1e-12,
           "kl ln2");
    expect(r, std::abs(kl_divergence(Distribution({0.5, 0.5}), Distribution({0.25, 0.75})) - 0.1438) < 5e-5,
           "kl 0.1438");

    expect(r, hellinger(Distribution({0.2, 0.8}), Distribution({0.2, 0.8})) == 0.0, "hellinger identity");
    expect(r, std::abs(hellinger(Distribution({1.0, 0.0}), Distribution({0.0, 1.0})) - 1.0) < 1e-15,
           "hellinger disjoint");
    expect(r, std::abs(hellinger(Distribution({0.5, 0.5}), Distribution({1.0, 0.0})) -
                       std::sqrt(1.0 - std::sqrt(0.5))) < 1e-12,
           "hellinger 0.5412");

    for (int i = 0; i < instances; ++i) {
        int n = 2 + static_cast<int>(rng() % 12);
        // dyadic logits so the +3.25 shift is exact in double
        std::vector<double> logits(static_cast<std::size_t>(n));
        for (double& v : logits)
            v = static_cast<double>(static_cast<long>(rng() % 1048577) - 524288) / 65536.0;
        double temp = 0.25 + 2.0 * uniform01(rng);
        Distribution p = softmax(logits, temp);
        double s = 0.0;
        for (double v : p.probs) s += v;
        expect(r, std::abs(s - 1.0) <= 1e-9, "softmax sums to 1");
        // shift invariance is bit-level thanks to max subtraction
        std::vector<double> shifted = logits;
        for (double& v : shifted) v += 3.25;
        Distribution q = softmax(shifted, temp);
        bool same = true;
        for (std::size_t k = 0; k < p.size(); ++k) same = same && p[k] == q[k];
        expect(r, same, "softmax shift invariance");

        Distribution a = softmax(logits, 1.0);
        std::vector<double> logits2(static_cast<std::size_t>(n));
        for (double& v : logits2) v = 8.0 * (uniform01(rng) - 0.5);
        Distribution b = softmax(logits2, 1.0);
        expect(r, kl_divergence(a, b) >= 0.0, "kl non-negative");
        expect(r, hellinger(a, b) == hellinger(b, a), "hellinger symmetric");
    }
    return r;
}

SuiteResult tape_gradient_suite(std::uint64_t seed) {
    SuiteResult r{"tape-analytic-gradients", 0, 0, ""};
    (void)seed;
    {
        // loss = sum(b) -> gradient all ones
        Tape tape;
        auto b = tape.param("b", Tensor::vec({0.5f, -1.0f, 2.0f}), true);
        auto loss = tape.sum(b);
        auto grads = grad_selected(tape, loss);
        const Tensor& g = grads.at("b");
        expect(r, g[0] == 1.0f && g[1] == 1.0f && g[2] == 1.0f, "sum gradient");
    }
    {
        // loss = <b,b> at b=(1,-2) -> gradient (2,-4)
        Tape tape;
        auto b = tape.param("b", Tensor::vec({1.0f, -2.0f}), true);
        auto loss = tape.sum(tape.mul(b, b));
        auto grads = grad_selected(tape, loss);
        const Tensor& g = grads.at("b");
        expect(r, std::abs(g[0] - 2.0f) < 1e-6 && std::abs(g[1] + 4.0f) < 1e-6, "quadratic gradient");
    }
    {
        // frozen parameters stay out of the gradient map
        Tape tape;
        auto b = tape.param("b", Tensor::vec({1.0f, 2.0f}), true);
        auto w = tape.param("w", Tensor::vec({3.0f, 4.0f}), false);
        auto loss = tape.sum(tape.mul(b, w));
        auto grads = grad_selected(tape, loss);
        expect(r, grads.size() == 1 && grads.count("b") == 1, "selected subset only");
        bool threw = false;
        try {
            tape.grad_of_param("w");
        } catch (const std::logic_error&) {
            threw = true;
        }
        expect(r, threw, "non-tunable gradient query rejected");
    }
    return r;
}

SuiteResult sampler_suite(std::uint64_t seed, int instances) {
    SuiteResult r{"top-k-top-p-filter-rule", 0, 0, ""};
    auto rng = substream(seed, 106);
    {
        auto g = substream(seed, 107);
        Distribution d({0.1, 0.6, 0.3});
        for (int i = 0; i < 20; ++i)
            expect(r, sample_token(d, 1, 1.0, g) == 1, "top_k=1 is argmax");
    }
    {
        // dist=(0.5,0.3,0.2), top_p=0.7 -> support {0,1}
        Distribution d({0.5, 0.3, 0.2});
        auto g = substream(seed, 108);
        int c2 = 0;
        for (int i = 0; i < 2000; ++i) {
            int tok = sample_token(d, 3, 0.7, g);
            expect(r, tok == 0 || tok == 1, "nucleus support");
            if (tok == 1) ++c2;
        }
        // renormalized (0.625, 0.375)
        expect(r, std::abs(c2 / 2000.0 - 0.375) < 0.05, "nucleus renormalization");
    }
    for (int i = 0; i < instances; ++i) {
        int n = 2 + static_cast<int>(rng() % 10);
        std::vector<double> w(static_cast<std::size_t>(n));
        double t = 0.0;
        for (double& v : w) {
            v = uniform01(rng);
            t += v;
        }
        for (double& v : w) v /= t;
        Distribution d = Distribution::unchecked(w);
        int top_k = 1 + static_cast<int>(rng() % n);
        double top_p = 0.2 + 0.8 * uniform01(rng);
        // brute-force the expected support
        std::vector<int> order(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) order[static_cast<std::size_t>(k)] = k;
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (d[static_cast<std::size_t>(a)] != d[static_cast<std::size_t>(b)])
                return d[static_cast<std::size_t>(a)] > d[static_cast<std::size_t>(b)];
            return a < b;
        });
        std::vector<bool> allowed(static_cast<std::size_t>(n), false);
        double cum = 0.0;
        for (int k = 0; k < top_k; ++k) {
            allowed[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = true;
            cum += d[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])];
            if (cum >= top_p) break;
        }
        auto g = substream(seed, 200 + static_cast<std::uint64_t>(i));
        for (int s = 0; s < 64; ++s) {
            int tok = sample_token(d, top_k, top_p, g);
            expect(r, allowed[static_cast<std::size_t>(tok)], "sample left the filtered support");
        }
    }
    return r;
}

std::vector<SuiteResult> run_all(std::uint64_t seed) {
    return {
        q_arithmetic_suite(),
        distribution_suite(seed, 100),
        lemma1_suite(seed, 100),
        upper_bound_suite(seed, 100),
        conditional_decomposition_suite(seed, 100),
        theorem1_suite(seed, 100),
        tape_gradient_suite(seed),
        sampler_suite(seed, 50),
    };
}

int selftest_main(std::uint64_t seed) {
    auto results = run_all(seed);
    int bad = 0;
    for (const auto& r : results) {
        std::printf("[%s] %s: %d passed, %d failed%s%s\n", r.failed ? "FAIL" : " OK ",
                    r.name.c_str(), r.passed, r.failed, r.detail.empty() ? "" : " - ",
                    r.detail.c_str());
        bad += r.failed;
    }
    std::printf("selftest: %s\n", bad ? "FAILED" : "all suites passed");
    return bad ? 2 : 0;
}

}  // namespace rectify::selfcheck
