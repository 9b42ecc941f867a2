#include "rectify/mi_oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace rectify {

namespace {

// Neumaier compensated accumulator
struct Kahan {
    double sum = 0.0, comp = 0.0;
    void add(double v) {
        double t = sum + v;
        if (std::abs(sum) >= std::abs(v))
            comp += (sum - t) + v;
        else
            comp += (v - t) + sum;
        sum = t;
    }
    double value() const { return sum + comp; }
};

}  // namespace

void validate_joint(const Joint& joint) {
    if (joint.empty() || joint[0].empty()) throw std::invalid_argument("empty joint");
    std::size_t a_dim = joint[0].size();
    Kahan total;
    for (const auto& row : joint) {
        if (row.size() != a_dim) throw std::invalid_argument("ragged joint");
        for (double v : row) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("invalid joint entry");
            total.add(v);
        }
    }
    if (std::abs(total.value() - 1.0) > 1e-9) throw std::invalid_argument("joint does not sum to 1");
}

Distribution joint_marginal_x(const Joint& joint) {
    std::vector<double> m(joint.size(), 0.0);
    for (std::size_t x = 0; x < joint.size(); ++x) {
        Kahan acc;
        for (double v : joint[x]) acc.add(v);
        m[x] = acc.value();
    }
    return Distribution::unchecked(std::move(m));
}

Distribution joint_marginal_a(const Joint& joint) {
    std::vector<double> m(joint[0].size(), 0.0);
    for (std::size_t a = 0; a < m.size(); ++a) {
        Kahan acc;
        for (const auto& row : joint) acc.add(row[a]);
        m[a] = acc.value();
    }
    return Distribution::unchecked(std::move(m));
}

double mutual_info_bruteforce(const Joint& joint) {
    validate_joint(joint);
    Distribution px = joint_marginal_x(joint);
    Distribution pa = joint_marginal_a(joint);
    Kahan acc;
    for (std::size_t x = 0; x < joint.size(); ++x)
        for (std::size_t a = 0; a < joint[x].size(); ++a) {
            double p = joint[x][a];
            if (p == 0.0) continue;
            acc.add(p * std::log(p / (px[x] * pa[a])));
        }
    return acc.value();
}

double mutual_info_conditional(const std::vector<Joint>& joint_by_c) {
    if (joint_by_c.empty()) throw std::invalid_argument("empty conditional joint");
    Kahan total;
    for (const auto& j : joint_by_c)
        for (const auto& row : j)
            for (double v : row) {
                if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("invalid joint entry");
                total.add(v);
            }
    if (std::abs(total.value() - 1.0) > 1e-9) throw std::invalid_argument("joint does not sum to 1");

    // I(x;a|c) = sum_c p(c) * I(x;a | c)
    Kahan acc;
    for (const auto& j : joint_by_c) {
        Kahan pc_acc;
        for (const auto& row : j)
            for (double v : row) pc_acc.add(v);
        double pc = pc_acc.value();
        if (pc == 0.0) continue;
        Joint cond(j.size(), std::vector<double>(j[0].size()));
        for (std::size_t x = 0; x < j.size(); ++x)
            for (std::size_t a = 0; a < j[x].size(); ++a) cond[x][a] = j[x][a] / pc;
        acc.add(pc * mutual_info_bruteforce(cond));
    }
    return acc.value();
}

double mixture_kl_bound(const Joint& joint, const Distribution& reference) {
    validate_joint(joint);
    if (reference.size() != joint.size()) throw std::invalid_argument("reference length mismatch");
    Distribution pa = joint_marginal_a(joint);
    Kahan acc;
    for (std::size_t a = 0; a < pa.size(); ++a) {
        if (pa[a] == 0.0) continue;
        // KL[p(x|a) || reference]
        Kahan kl;
        for (std::size_t x = 0; x < joint.size(); ++x) {
            double pxa = joint[x][a] / pa[a];
            if (pxa == 0.0) continue;
            if (reference[x] == 0.0) throw std::domain_error("absolute continuity violated");
            kl.add(pxa * std::log(pxa / reference[x]));
        }
        acc.add(pa[a] * kl.value());
    }
    return acc.value();
}

}  // namespace rectify
