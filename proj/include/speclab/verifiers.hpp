// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "speclab/draft_tree.hpp"

namespace speclab {

enum class OtlpMethod { kNss, kNaive, kSpecTr, kSpecInfer };

const char* method_name(OtlpMethod m);
OtlpMethod method_from_name(const std::string& name);

struct ZeroDraftProbError : std::runtime_error {
  ZeroDraftProbError() : std::runtime_error("draft token has zero draft probability") {}
};
struct MissingTargetDistError : std::runtime_error {
  MissingTargetDistError() : std::runtime_error("target distributions not attached") {}
};
struct NotSinglePathError : std::runtime_error {
  NotSinglePathError() : std::runtime_error("block verification requires a single-path tree") {}
};

// Root of p_acc(rho) = rho * beta(rho) on [1, k], with
// beta(rho) = sum_t min(p(t)/rho, q(t)) and p_acc(rho) = 1 - (1 - beta)^k.
// Disjoint supports (beta(1) = 0) degenerate to rho* = 1, beta = 0,
// p_acc = 0, gamma = 0.
struct SpecTrParams {
  double rho_star = 1.0;
  double beta = 0.0;
  double p_acc = 0.0;
  double gamma = 0.0;
};

SpecTrParams solve_rho(const Categorical& p, const Categorical& q, int k);

double spectr_beta(const Categorical& p, const Categorical& q, double rho);

// One OTLP solver call: takes k draft tokens x ~ q^k and returns a token
// marginally distributed as p. An empty x degenerates to a direct p-sample
// (the exhausted-block correction).
Token otlp_solve(OtlpMethod method, const Categorical& p, const Categorical& q,
                 std::span<const Token> x, RngStream& rng);

struct VerifierOutcome {
  size_t tau = 0;
  std::vector<Token> accepted_path;
  Token correction_token = -1;
  size_t tokens_emitted() const { return tau + 1; }
};

// Top-down traversal: at each node the solver sees the child list (with
// multiplicity) as x; the traversal descends while the output stays on the
// tree and otherwise stops with the output as correction token.
VerifierOutcome verify_tree(const DraftTree& tree, OtlpMethod method, RngStream& rng);

// Per-path block verification quantities. weights[i] is the node weight
// w(a_{1:i}) with weights[0] = 1; alive[n] = P(tau >= n | path) for
// n = 1..L; stop_prob[n] = P(tau = n | path) for n = 0..L.
struct BvAnalysis {
  std::vector<Token> path;
  std::vector<double> weights;
  std::vector<double> alive;
  std::vector<double> stop_prob;
};

BvAnalysis bv_analyze(const DraftTree& tree);

// Correction distribution at a stop of weight w: proportional to
// (w * p - q)_+ over the stopping node's distributions.
std::optional<Categorical> bv_residual(const Categorical& p, const Categorical& q, double w);

// Single-path block verification with multiplicative weights
// w(a_{1:i}) = min(1, w(a_{1:i-1}) p(a_i)/q(a_i)). Nodes are accepted with
// probability w via one shared uniform over nested alive events; tau is the
// maximal accepted depth and the correction is drawn from the w-weighted
// residual (plain p at an exhausted block).
VerifierOutcome verify_block_bv(const DraftTree& tree, RngStream& rng);

}  // namespace speclab
