#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rectify/mi_oracle.hpp"

namespace rectify::selfcheck {

struct SuiteResult {
    std::string name;
    int passed = 0;
    int failed = 0;
    std::string detail;  // first failure, if any
};

// Random discrete instances used by the oracle suites and by tests.
Joint random_joint(std::mt19937_64& rng, int nx, int na);

// Identity: token-level loss with the exact marginal prior equals the
// brute-force mutual information, within 1e-9.
SuiteResult lemma1_suite(std::uint64_t seed, int instances);
// Mixture-KL with a mismatched reference upper-bounds the true MI.
SuiteResult upper_bound_suite(std::uint64_t seed, int instances);
// Brute-force I(x;a|c) under a delta context equals L_t + L_c, within 1e-9.
SuiteResult conditional_decomposition_suite(std::uint64_t seed, int instances);
// Independent product attributes: additivity of MI and the strict weighted
// KL lower bound.
SuiteResult theorem1_suite(std::uint64_t seed, int instances);
// The published quadratic-mean cells.
SuiteResult q_arithmetic_suite();
// softmax / KL / Hellinger example values and invariants.
SuiteResult distribution_suite(std::uint64_t seed, int instances);
// Tape gradients on analytically known cases.
SuiteResult tape_gradient_suite(std::uint64_t seed);
// Combined top-k / top-p filter rule against brute-force enumeration.
SuiteResult sampler_suite(std::uint64_t seed, int instances);

std::vector<SuiteResult> run_all(std::uint64_t seed);
int selftest_main(std::uint64_t seed);  // prints a line per suite, 0 iff all green

}  // namespace rectify::selfcheck
