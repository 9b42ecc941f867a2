#pragma once

#include <vector>

#include "rectify/distribution.hpp"

namespace rectify {

// Joint distribution over (x, a) as a dense matrix: joint[x][a].
using Joint = std::vector<std::vector<double>>;

// I(x;a) straight from the definition, compensated (Neumaier) summation.
double mutual_info_bruteforce(const Joint& joint);

// Conditional mutual information I(x;a|c) for a joint over (c, x, a):
// cond[c] is the joint of (x,a) given c scaled by p(c), i.e. the full 3-d
// joint sliced along c. Must sum to 1 overall.
double mutual_info_conditional(const std::vector<Joint>& joint_by_c);

// Mixture-KL form sum_a p(a) KL[p(x|a) || reference]; with the exact marginal
// as reference this equals the MI, with anything else it upper-bounds it.
double mixture_kl_bound(const Joint& joint, const Distribution& reference);

// Marginals of a joint.
Distribution joint_marginal_x(const Joint& joint);
Distribution joint_marginal_a(const Joint& joint);

void validate_joint(const Joint& joint);

}  // namespace rectify
