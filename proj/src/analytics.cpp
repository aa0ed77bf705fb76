// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

#include "speclab/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "speclab/csv.hpp"
#include "speclab/parallel.hpp"

namespace speclab {

namespace {

double accept_nss(const Categorical& p, const Categorical& q, int k) {
  double a = 0.0;
  for (int t = 0; t < p.vocab_size(); ++t) {
    a += p[t] * (1.0 - std::pow(1.0 - q[t], k));
  }
  return a;
}

double accept_naive(const Categorical& p, const Categorical& q, int k) {
  double overlap = 0.0;
  double residual_hits = 0.0;
  for (int t = 0; t < p.vocab_size(); ++t) {
    overlap += std::min(p[t], q[t]);
    residual_hits += std::max(p[t] - q[t], 0.0) * (1.0 - std::pow(1.0 - q[t], k - 1));
  }
  return overlap + residual_hits;
}

double accept_spectr(const Categorical& p, const Categorical& q, int k) {
  const SpecTrParams params = solve_rho(p, q, k);
  if (params.beta >= 1.0) return 1.0;  // p == q: every round accepts
  if (params.beta <= 0.0) return 0.0;  // disjoint supports

  const int v = p.vocab_size();
  std::vector<double> res(static_cast<size_t>(v));
  double res_mass = 0.0;
  for (int t = 0; t < v; ++t) {
    res[static_cast<size_t>(t)] =
        std::max(p[t] - std::min(p[t] / params.rho_star, q[t]) * params.gamma, 0.0);
    res_mass += res[static_cast<size_t>(t)];
  }
  if (res_mass <= 0.0) return params.p_acc;

  // Distribution of a draft token conditioned on its round rejecting.
  const double rej = 1.0 - params.beta;
  double hit = 0.0;
  for (int t = 0; t < v; ++t) {
    const double r = std::max(q[t] - p[t] / params.rho_star, 0.0) / rej;
    hit += res[static_cast<size_t>(t)] / res_mass * (1.0 - std::pow(1.0 - r, k));
  }
  return params.p_acc + (1.0 - params.p_acc) * hit;
}

double accept_specinfer(const Categorical& p, const Categorical& q, int k) {
  const int v = p.vocab_size();
  Categorical cur = p;
  double p_rej = 1.0;
  std::vector<double> mask(static_cast<size_t>(v), 1.0);
  for (int i = 0; i < k; ++i) {
    double r = 0.0;
    for (int t = 0; t < v; ++t) r += std::min(cur[t], q[t]);
    if (r >= 1.0) return 1.0;  // residual chain exhausted: acceptance certain
    p_rej *= 1.0 - r;
    for (int t = 0; t < v; ++t) {
      mask[static_cast<size_t>(t)] *= 1.0 - std::max(q[t] - cur[t], 0.0) / (1.0 - r);
    }
    auto res = try_positive_residual(cur, q);
    if (!res) return 1.0;
    cur = *std::move(res);
  }
  double tail = 0.0;
  for (int t = 0; t < v; ++t) tail += cur[t] * (1.0 - mask[static_cast<size_t>(t)]);
  return (1.0 - p_rej) + p_rej * tail;
}

}  // namespace

double acceptance_rate(OtlpMethod method, const Categorical& p, const Categorical& q, int k) {
  if (k < 1) throw std::invalid_argument("k must be positive");
  if (p.vocab_size() != q.vocab_size()) throw std::invalid_argument("vocab size mismatch");
  switch (method) {
    case OtlpMethod::kNss: return accept_nss(p, q, k);
    case OtlpMethod::kNaive: return accept_naive(p, q, k);
    case OtlpMethod::kSpecTr: return accept_spectr(p, q, k);
    case OtlpMethod::kSpecInfer: return accept_specinfer(p, q, k);
  }
  throw std::logic_error("unhandled method");
}

namespace {

void check_draft_support(const Categorical& q, std::span<const Token> x) {
  for (Token t : x) {
    if (q[t] <= 0.0) throw ZeroDraftProbError();
  }
}

std::vector<double> output_naive(const Categorical& p, const Categorical& q,
                                 std::span<const Token> x) {
  const Token x1 = x[0];
  const double a = std::min(1.0, p[x1] / q[x1]);
  std::vector<double> out(static_cast<size_t>(p.vocab_size()), 0.0);
  auto res = try_positive_residual(p, q);
  if (res) {
    for (int t = 0; t < p.vocab_size(); ++t) out[static_cast<size_t>(t)] = (1.0 - a) * (*res)[t];
  }
  out[static_cast<size_t>(x1)] += a;
  return out;
}

std::vector<double> output_spectr(const Categorical& p, const Categorical& q,
                                  std::span<const Token> x) {
  const int k = static_cast<int>(x.size());
  const SpecTrParams params = solve_rho(p, q, k);
  const int v = p.vocab_size();

  std::vector<double> out(static_cast<size_t>(v), 0.0);
  double survive = 1.0;  // probability every round so far rejected
  for (Token xi : x) {
    const double a = std::min(1.0, p[xi] / (params.rho_star * q[xi]));
    out[static_cast<size_t>(xi)] += survive * a;
    survive *= 1.0 - a;
  }

  std::vector<double> res(static_cast<size_t>(v));
  double res_mass = 0.0;
  for (int t = 0; t < v; ++t) {
    res[static_cast<size_t>(t)] =
        std::max(p[t] - std::min(p[t] / params.rho_star, q[t]) * params.gamma, 0.0);
    res_mass += res[static_cast<size_t>(t)];
  }
  if (res_mass > 0.0) {
    for (int t = 0; t < v; ++t) {
      out[static_cast<size_t>(t)] += survive * res[static_cast<size_t>(t)] / res_mass;
    }
  } else if (survive > 1e-12) {
    throw std::logic_error("spectr residual empty but rounds can reject");
  }
  return out;
}

// SpecInfer output distribution via the multiset recursion. State: i
// rejections so far, S the remaining draft tokens (sorted multiset). The
// residual chain r_0 = p, r_i proportional to (r_{i-1} - q)_+ drives both
// the per-round acceptance min(1, r_i(t)/q(t)) and the exhausted-pool base
// case r_k.
class SpecInferRecursion {
 public:
  SpecInferRecursion(const Categorical& p, const Categorical& q, int k) : q_(q), vocab_(p.vocab_size()) {
    residuals_.reserve(static_cast<size_t>(k) + 1);
    residuals_.push_back(p);
    for (int i = 1; i <= k; ++i) {
      if (!residuals_.back()) {
        residuals_.push_back(std::nullopt);
        continue;
      }
      residuals_.push_back(try_positive_residual(*residuals_.back(), q));
    }
  }

  std::vector<double> output(std::span<const Token> x) {
    std::vector<Token> pool(x.begin(), x.end());
    std::sort(pool.begin(), pool.end());
    return compute(0, pool);
  }

 private:
  const std::vector<double>& compute(int level, const std::vector<Token>& pool) {
    auto key = std::make_pair(level, pool);
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;

    std::vector<double> out(static_cast<size_t>(vocab_), 0.0);
    const auto& res = residuals_[static_cast<size_t>(level)];
    if (pool.empty()) {
      // Unreachable when the residual chain died earlier; contributes zero.
      if (res) out = res->probs();
    } else if (res) {
      size_t i = 0;
      while (i < pool.size()) {
        size_t j = i;
        while (j < pool.size() && pool[j] == pool[i]) ++j;
        const double mult = static_cast<double>(j - i);
        const Token t = pool[i];
        const double a = std::min(1.0, (*res)[t] / q_[t]);
        out[static_cast<size_t>(t)] += mult * a;
        if (a < 1.0) {
          std::vector<Token> rest = pool;
          rest.erase(rest.begin() + static_cast<ptrdiff_t>(i));
          const std::vector<double>& deeper = compute(level + 1, rest);
          for (int y = 0; y < vocab_; ++y) {
            out[static_cast<size_t>(y)] += mult * (1.0 - a) * deeper[static_cast<size_t>(y)];
          }
        }
        i = j;
      }
      for (double& v : out) v /= static_cast<double>(pool.size());
    }
    return memo_.emplace(std::move(key), std::move(out)).first->second;
  }

  struct KeyHash {
    size_t operator()(const std::pair<int, std::vector<Token>>& k) const {
      uint64_t h = splitmix64(static_cast<uint64_t>(k.first));
      for (Token t : k.second) h = splitmix64(h ^ static_cast<uint64_t>(static_cast<uint32_t>(t)));
      return static_cast<size_t>(h);
    }
  };

  const Categorical& q_;
  int vocab_;
  std::vector<std::optional<Categorical>> residuals_;
  std::unordered_map<std::pair<int, std::vector<Token>>, std::vector<double>, KeyHash> memo_;
};

}  // namespace

Categorical output_distribution(OtlpMethod method, const Categorical& p, const Categorical& q,
                                std::span<const Token> x) {
  if (p.vocab_size() != q.vocab_size()) throw std::invalid_argument("vocab size mismatch");
  if (x.empty()) return p;
  check_draft_support(q, x);
  switch (method) {
    case OtlpMethod::kNss: return p;
    case OtlpMethod::kNaive: return Categorical::normalized(output_naive(p, q, x));
    case OtlpMethod::kSpecTr: return Categorical::normalized(output_spectr(p, q, x));
    case OtlpMethod::kSpecInfer:
      return Categorical::normalized(SpecInferRecursion(p, q, static_cast<int>(x.size())).output(x));
  }
  throw std::logic_error("unhandled method");
}

std::map<Token, double> branching(OtlpMethod method, const Categorical& p, const Categorical& q,
                                  std::span<const Token> x) {
  const Categorical out = output_distribution(method, p, q, x);
  std::map<Token, double> b;
  for (Token t : x) b[t] = out[t];
  return b;
}

double expected_block_tokens(const DraftTree& tree, OtlpMethod method) {
  std::unordered_map<std::vector<Token>, double, VecTokenHash> reach;
  reach[{}] = 1.0;
  double total = 0.0;
  for (const DraftNode& n : tree.nodes()) {
    const double r = reach.at(n.path);
    total += r;
    if (n.children.empty()) continue;
    if (!n.target_dist) throw MissingTargetDistError();
    const auto b = branching(method, *n.target_dist, n.draft_dist, n.children);
    for (const auto& [t, prob] : b) {
      std::vector<Token> child = n.path;
      child.push_back(t);
      reach[child] = r * prob;
    }
  }
  return total;
}

double estimate_block_efficiency_serial(const PairSource& source, TokenSpan root_context,
                                        ActionTriple action, OtlpMethod method, int s,
                                        uint64_t seed) {
  return estimate_block_efficiency(source, root_context, action, method, s, seed, 1);
}

double estimate_block_efficiency(const PairSource& source, TokenSpan root_context,
                                 ActionTriple action, OtlpMethod method, int s, uint64_t seed,
                                 int threads) {
  if (s < 1) throw std::invalid_argument("s must be positive");
  const RootedPair pair = source.at_root(root_context);
  std::vector<double> per_tree(static_cast<size_t>(s), 0.0);
  parallel_for(s, threads, [&](int i) {
    DraftTree tree =
        draft_delayed(pair, root_context, action, derive_seed(seed, static_cast<uint64_t>(i)));
    attach_target_dists(tree, *pair.target);
    per_tree[static_cast<size_t>(i)] = expected_block_tokens(tree, method);
  });
  double sum = 0.0;
  for (double v : per_tree) sum += v;
  return sum / static_cast<double>(s);
}

namespace {

struct RootProfile {
  std::vector<double> l1_by_depth;
  std::vector<std::vector<std::vector<double>>> acc;  // [method][k][depth]
};

RootProfile profile_one_root(const PairSource& source, const std::vector<Token>& root,
                             int max_depth, const std::vector<int>& k_values,
                             const std::vector<OtlpMethod>& methods, uint64_t root_seed) {
  RootProfile out;
  out.l1_by_depth.assign(static_cast<size_t>(max_depth) + 1, 0.0);
  out.acc.assign(methods.size(),
                 std::vector<std::vector<double>>(
                     k_values.size(), std::vector<double>(static_cast<size_t>(max_depth) + 1)));

  const RootedPair pair = source.at_root(root);
  RngStream rng(root_seed);
  std::vector<Token> ctx = root;
  for (int d = 0; d <= max_depth; ++d) {
    const Categorical p = pair.target->next_dist(ctx);
    const Categorical q = pair.draft->next_dist(ctx);
    out.l1_by_depth[static_cast<size_t>(d)] = l1(p, q);
    for (size_t mi = 0; mi < methods.size(); ++mi) {
      for (size_t ki = 0; ki < k_values.size(); ++ki) {
        out.acc[mi][ki][static_cast<size_t>(d)] =
            acceptance_rate(methods[mi], p, q, k_values[ki]);
      }
    }
    if (d < max_depth) ctx.push_back(sample(q, rng));
  }
  return out;
}

}  // namespace

DepthProfile depth_profile_serial(const PairSource& source,
                                  const std::vector<std::vector<Token>>& roots, int max_depth,
                                  const std::vector<int>& k_values,
                                  const std::vector<OtlpMethod>& methods, uint64_t seed) {
  return depth_profile(source, roots, max_depth, k_values, methods, seed, 1);
}

DepthProfile depth_profile(const PairSource& source, const std::vector<std::vector<Token>>& roots,
                           int max_depth, const std::vector<int>& k_values,
                           const std::vector<OtlpMethod>& methods, uint64_t seed, int threads) {
  if (roots.empty()) throw std::invalid_argument("at least one root is required");

  const int n = static_cast<int>(roots.size());
  std::vector<RootProfile> per_root(roots.size());
  parallel_for(n, threads, [&](int i) {
    per_root[static_cast<size_t>(i)] =
        profile_one_root(source, roots[static_cast<size_t>(i)], max_depth, k_values, methods,
                         derive_seed(seed, static_cast<uint64_t>(i)));
  });

  DepthProfile out;
  out.max_depth = max_depth;
  out.k_values = k_values;
  out.methods = methods;
  out.mean_l1.assign(static_cast<size_t>(max_depth) + 1, 0.0);
  out.sample_count.assign(static_cast<size_t>(max_depth) + 1, n);
  out.mean_acceptance.assign(
      methods.size(), std::vector<std::vector<double>>(
                          k_values.size(), std::vector<double>(static_cast<size_t>(max_depth) + 1, 0.0)));

  for (const RootProfile& rp : per_root) {
    for (int d = 0; d <= max_depth; ++d) {
      out.mean_l1[static_cast<size_t>(d)] += rp.l1_by_depth[static_cast<size_t>(d)];
      for (size_t mi = 0; mi < methods.size(); ++mi) {
        for (size_t ki = 0; ki < k_values.size(); ++ki) {
          out.mean_acceptance[mi][ki][static_cast<size_t>(d)] +=
              rp.acc[mi][ki][static_cast<size_t>(d)];
        }
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (int d = 0; d <= max_depth; ++d) {
    out.mean_l1[static_cast<size_t>(d)] *= inv;
    for (size_t mi = 0; mi < methods.size(); ++mi) {
      for (size_t ki = 0; ki < k_values.size(); ++ki) {
        out.mean_acceptance[mi][ki][static_cast<size_t>(d)] *= inv;
      }
    }
  }
  return out;
}

void write_depth_profile_csv(const DepthProfile& profile, std::ostream& out,
                             const std::string& provenance) {
  if (!provenance.empty()) out << "# " << provenance << "\n";
  out << "depth,mean_l1,method,k,mean_acceptance,n\n";
  for (int d = 0; d <= profile.max_depth; ++d) {
    for (size_t mi = 0; mi < profile.methods.size(); ++mi) {
      for (size_t ki = 0; ki < profile.k_values.size(); ++ki) {
        out << d << ',' << csv_double(profile.mean_l1[static_cast<size_t>(d)]) << ','
            << method_name(profile.methods[mi]) << ',' << profile.k_values[ki] << ','
            << csv_double(profile.mean_acceptance[mi][ki][static_cast<size_t>(d)]) << ','
            << profile.sample_count[static_cast<size_t>(d)] << "\n";
      }
    }
  }
}

}  // namespace speclab
