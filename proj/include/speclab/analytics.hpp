// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <map>

#include "speclab/verifiers.hpp"

namespace speclab {

// Probability that the solver output lies among k i.i.d. draft tokens from
// q, computed in closed form (no sampling).
double acceptance_rate(OtlpMethod method, const Categorical& p, const Categorical& q, int k);

// Exact distribution of otlp_solve's output over the whole vocabulary,
// conditioned on the observed draft tokens x.
Categorical output_distribution(OtlpMethod method, const Categorical& p, const Categorical& q,
                                std::span<const Token> x);

// Restriction of output_distribution to the distinct tokens of x.
// SpecInfer uses a multiset recursion that is exponential in k; keep k <= 4.
std::map<Token, double> branching(OtlpMethod method, const Categorical& p, const Categorical& q,
                                  std::span<const Token> x);

// Expected tokens emitted per round on one fixed tree: the sum over nodes of
// the product of branching probabilities along the root path. Verification
// randomness is marginalized exactly.
double expected_block_tokens(const DraftTree& tree, OtlpMethod method);

// Unbiased estimate of E[tau + 1]: averages expected_block_tokens over s
// i.i.d. delayed trees (tree i uses derive_seed(seed, i)).
double estimate_block_efficiency(const PairSource& source, TokenSpan root_context,
                                 ActionTriple action, OtlpMethod method, int s, uint64_t seed,
                                 int threads = 1);
double estimate_block_efficiency_serial(const PairSource& source, TokenSpan root_context,
                                        ActionTriple action, OtlpMethod method, int s,
                                        uint64_t seed);

// Per-depth target-draft divergence and closed-form acceptance statistics
// along drafted paths from each root.
struct DepthProfile {
  int max_depth = 0;
  std::vector<int> k_values;
  std::vector<OtlpMethod> methods;
  std::vector<double> mean_l1;                                  // [depth]
  std::vector<int> sample_count;                                // [depth]
  std::vector<std::vector<std::vector<double>>> mean_acceptance;  // [method][k][depth]
};

DepthProfile depth_profile(const PairSource& source, const std::vector<std::vector<Token>>& roots,
                           int max_depth, const std::vector<int>& k_values,
                           const std::vector<OtlpMethod>& methods, uint64_t seed,
                           int threads = 1);
DepthProfile depth_profile_serial(const PairSource& source,
                                  const std::vector<std::vector<Token>>& roots, int max_depth,
                                  const std::vector<int>& k_values,
                                  const std::vector<OtlpMethod>& methods, uint64_t seed);

// CSV columns: depth, mean_l1, method, k, mean_acceptance, n.
void write_depth_profile_csv(const DepthProfile& profile, std::ostream& out,
                             const std::string& provenance);

}  // namespace speclab
