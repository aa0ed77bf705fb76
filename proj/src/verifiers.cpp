// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

#include "speclab/verifiers.hpp"

#include <algorithm>
#include <cmath>

namespace speclab {

const char* method_name(OtlpMethod m) {
  switch (m) {
    case OtlpMethod::kNss: return "nss";
    case OtlpMethod::kNaive: return "naive";
    case OtlpMethod::kSpecTr: return "spectr";
    case OtlpMethod::kSpecInfer: return "specinfer";
  }
  return "?";
}

OtlpMethod method_from_name(const std::string& name) {
  if (name == "nss") return OtlpMethod::kNss;
  if (name == "naive") return OtlpMethod::kNaive;
  if (name == "spectr") return OtlpMethod::kSpecTr;
  if (name == "specinfer") return OtlpMethod::kSpecInfer;
  throw std::invalid_argument("unknown OTLP method: " + name);
}

double spectr_beta(const Categorical& p, const Categorical& q, double rho) {
  double beta = 0.0;
  for (int t = 0; t < p.vocab_size(); ++t) {
    beta += std::min(p[t] / rho, q[t]);
  }
  return beta;
}

namespace {

constexpr double kBisectTolerance = 1e-10;
constexpr int kBisectMaxIters = 200;

// p_acc(rho) - rho * beta(rho), written as rho*(1-beta) - (rho-1) - (1-beta)^k
// with 1-beta accumulated directly from (q - p/rho)_+. The naive form
// cancels to zero over a wide rho-range when p is close to q.
double spectr_gap(const Categorical& p, const Categorical& q, int k, double rho) {
  double one_minus_beta = 0.0;
  for (int t = 0; t < p.vocab_size(); ++t) {
    one_minus_beta += std::max(q[t] - p[t] / rho, 0.0);
  }
  return rho * one_minus_beta - (rho - 1.0) - std::pow(one_minus_beta, k);
}

}  // namespace

SpecTrParams solve_rho(const Categorical& p, const Categorical& q, int k) {
  if (k < 1) throw std::invalid_argument("k must be positive");
  if (p.vocab_size() != q.vocab_size()) throw std::invalid_argument("vocab size mismatch");

  const double beta_left = spectr_beta(p, q, 1.0);
  if (beta_left <= 0.0) {
    // Disjoint supports: every rho solves the equation; acceptance is zero.
    return SpecTrParams{1.0, 0.0, 0.0, 0.0};
  }
  if (k == 1 || beta_left >= 1.0 - 1e-12) {
    // The root sits at the left endpoint: for k = 1 the gap is
    // -(rho-1)*beta <= 0 everywhere, and for total overlap |gap(1)| =
    // |beta - beta^k| <= 1 - beta is already below the solve tolerance.
    SpecTrParams out;
    out.rho_star = 1.0;
    out.beta = beta_left;
    out.p_acc = 1.0 - std::pow(1.0 - beta_left, k);
    out.gamma = out.p_acc / out.beta;
    return out;
  }

  // gap(rho) = p_acc(rho) - rho * beta(rho) is monotone decreasing with
  // gap(1) >= 0 >= gap(k). The upper end of the final bracket is returned:
  // the solver stays exactly lossless for any rho >= rho*, while values
  // below rho* clamp residual mass away.
  double lo = 1.0;
  double hi = static_cast<double>(k);
  for (int i = 0; i < kBisectMaxIters && hi - lo > kBisectTolerance; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (spectr_gap(p, q, k, mid) >= 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double rho = hi;

  SpecTrParams out;
  out.rho_star = rho;
  out.beta = spectr_beta(p, q, rho);
  out.p_acc = 1.0 - std::pow(1.0 - out.beta, k);
  out.gamma = out.beta > 0.0 ? out.p_acc / out.beta : 0.0;
  return out;
}

namespace {

void check_draft_support(const Categorical& q, std::span<const Token> x) {
  for (Token t : x) {
    if (q[t] <= 0.0) throw ZeroDraftProbError();
  }
}

// Residual after k SpecTr rounds: (p - min(p/rho, q) * gamma)_+, round-off
// clamped at zero by the normalizer.
std::vector<double> spectr_residual_weights(const Categorical& p, const Categorical& q,
                                            const SpecTrParams& params) {
  std::vector<double> w(static_cast<size_t>(p.vocab_size()));
  for (int t = 0; t < p.vocab_size(); ++t) {
    w[static_cast<size_t>(t)] =
        std::max(p[t] - std::min(p[t] / params.rho_star, q[t]) * params.gamma, 0.0);
  }
  return w;
}

Token solve_naive(const Categorical& p, const Categorical& q, std::span<const Token> x,
                  RngStream& rng) {
  const Token x1 = x[0];
  if (rng.uniform() * q[x1] < p[x1]) return x1;
  auto res = try_positive_residual(p, q);
  if (!res) throw std::logic_error("naive residual unreachable: acceptance was certain");
  return sample(*res, rng);
}

Token solve_spectr(const Categorical& p, const Categorical& q, std::span<const Token> x,
                   RngStream& rng) {
  const SpecTrParams params = solve_rho(p, q, static_cast<int>(x.size()));
  for (Token xi : x) {
    if (params.rho_star * rng.uniform() * q[xi] < p[xi]) return xi;
  }
  auto res = Categorical::try_normalized(spectr_residual_weights(p, q, params));
  if (!res) throw std::logic_error("spectr residual unreachable: acceptance was certain");
  return sample(*res, rng);
}

Token solve_specinfer(const Categorical& p, const Categorical& q, std::span<const Token> x,
                      RngStream& rng) {
  std::vector<Token> pool(x.begin(), x.end());
  Categorical cur = p;
  while (!pool.empty()) {
    const size_t i = rng.uniform_index(pool.size());
    const Token t = pool[i];
    if (rng.uniform() * q[t] < cur[t]) return t;
    auto res = try_positive_residual(cur, q);
    if (!res) throw std::logic_error("specinfer residual unreachable: acceptance was certain");
    cur = *std::move(res);
    pool.erase(pool.begin() + static_cast<ptrdiff_t>(i));
  }
  return sample(cur, rng);
}

}  // namespace

Token otlp_solve(OtlpMethod method, const Categorical& p, const Categorical& q,
                 std::span<const Token> x, RngStream& rng) {
  if (p.vocab_size() != q.vocab_size()) throw std::invalid_argument("vocab size mismatch");
  if (x.empty()) return sample(p, rng);
  check_draft_support(q, x);

  switch (method) {
    case OtlpMethod::kNss: return sample(p, rng);
    case OtlpMethod::kNaive: return solve_naive(p, q, x, rng);
    case OtlpMethod::kSpecTr: return solve_spectr(p, q, x, rng);
    case OtlpMethod::kSpecInfer: return solve_specinfer(p, q, x, rng);
  }
  throw std::logic_error("unhandled method");
}

VerifierOutcome verify_tree(const DraftTree& tree, OtlpMethod method, RngStream& rng) {
  VerifierOutcome out;
  std::vector<Token> path;
  for (;;) {
    const DraftNode& n = tree.node(path);
    if (!n.target_dist) throw MissingTargetDistError();
    const Token y = otlp_solve(method, *n.target_dist, n.draft_dist, n.children, rng);
    const bool on_tree =
        std::find(n.children.begin(), n.children.end(), y) != n.children.end();
    if (!on_tree) {
      out.correction_token = y;
      break;
    }
    path.push_back(y);
    out.tau += 1;
  }
  out.accepted_path = std::move(path);
  return out;
}

BvAnalysis bv_analyze(const DraftTree& tree) {
  BvAnalysis a;
  std::vector<Token> path;
  {
    const DraftNode* n = &tree.root();
    for (;;) {
      if (n->children.size() > 1) throw NotSinglePathError();
      if (n->children.empty()) break;
      path.push_back(n->children[0]);
      n = &tree.node(path);
    }
  }
  a.path = path;
  const size_t depth = path.size();

  a.weights.assign(depth + 1, 1.0);
  std::vector<double> stop_mass(depth + 1, 0.0);  // sum_t (w_n * p - q)_+ at node n
  std::vector<Token> prefix;
  for (size_t n = 0; n < depth; ++n) {
    const DraftNode& node = tree.node(prefix);
    if (!node.target_dist) throw MissingTargetDistError();
    const Categorical& p = *node.target_dist;
    const Categorical& q = node.draft_dist;
    const Token next = path[n];
    if (q[next] <= 0.0) throw ZeroDraftProbError();

    double mass = 0.0;
    for (int t = 0; t < p.vocab_size(); ++t) {
      mass += std::max(a.weights[n] * p[t] - q[t], 0.0);
    }
    stop_mass[n] = mass;

    a.weights[n + 1] = std::min(1.0, a.weights[n] * p[next] / q[next]);
    prefix.push_back(next);
  }

  // Nested alive events: alive[n] has conditional mean w_n given the path
  // prefix, realized by moving a proportional share of the remaining headroom
  // toward 1. stop_mass[n] = w_n - E[w_{n+1} | prefix] is exactly the
  // stopping probability at depth n.
  a.alive.assign(depth + 1, 0.0);
  a.alive[depth] = a.weights[depth];
  for (size_t n = depth; n-- > 1;) {
    const double expected_child = a.weights[n] - stop_mass[n];
    const double denom = 1.0 - expected_child;
    const double gamma = denom > 0.0 ? std::clamp(stop_mass[n] / denom, 0.0, 1.0) : 0.0;
    a.alive[n] = a.alive[n + 1] + (1.0 - a.alive[n + 1]) * gamma;
  }
  a.alive[0] = 1.0;

  a.stop_prob.assign(depth + 1, 0.0);
  for (size_t n = 0; n < depth; ++n) {
    a.stop_prob[n] = a.alive[n] - a.alive[n + 1];
  }
  a.stop_prob[depth] = a.alive[depth];
  return a;
}

std::optional<Categorical> bv_residual(const Categorical& p, const Categorical& q, double w) {
  std::vector<double> r(static_cast<size_t>(p.vocab_size()));
  for (int t = 0; t < p.vocab_size(); ++t) {
    r[static_cast<size_t>(t)] = std::max(w * p[t] - q[t], 0.0);
  }
  return Categorical::try_normalized(std::move(r));
}

VerifierOutcome verify_block_bv(const DraftTree& tree, RngStream& rng) {
  const BvAnalysis a = bv_analyze(tree);
  const size_t depth = a.path.size();

  const double eta = rng.uniform();
  size_t tau = 0;
  for (size_t n = depth; n >= 1; --n) {
    if (eta < a.alive[n]) {
      tau = n;
      break;
    }
  }

  VerifierOutcome out;
  out.tau = tau;
  out.accepted_path.assign(a.path.begin(), a.path.begin() + static_cast<ptrdiff_t>(tau));

  const DraftNode& stop = tree.node(out.accepted_path);
  if (!stop.target_dist) throw MissingTargetDistError();
  if (tau == depth) {
    out.correction_token = sample(*stop.target_dist, rng);
  } else {
    auto res = bv_residual(*stop.target_dist, stop.draft_dist, a.weights[tau]);
    if (!res) throw std::logic_error("bv residual unreachable: stop probability is zero");
    out.correction_token = sample(*res, rng);
  }
  return out;
}

}  // namespace speclab
