// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <sstream>

#include "speclab/analytics.hpp"

using namespace speclab;

namespace {

Categorical random_dist(int vocab, RngStream& rng) {
  std::vector<double> w(static_cast<size_t>(vocab));
  for (double& v : w) v = -std::log(1.0 - rng.uniform());
  return Categorical::normalized(std::move(w));
}

constexpr OtlpMethod kAllMethods[] = {OtlpMethod::kNss, OtlpMethod::kNaive, OtlpMethod::kSpecTr,
                                      OtlpMethod::kSpecInfer};

// Monte-Carlo acceptance frequency: draw x ~ q^k, run the solver, count
// outputs that land among the draft tokens.
double mc_acceptance(OtlpMethod m, const Categorical& p, const Categorical& q, int k, int n,
                     uint64_t seed) {
  RngStream rng(seed);
  int hits = 0;
  std::vector<Token> x(static_cast<size_t>(k));
  for (int i = 0; i < n; ++i) {
    for (Token& t : x) t = sample(q, rng);
    const Token y = otlp_solve(m, p, q, x, rng);
    for (Token t : x) {
      if (t == y) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / n;
}

// Exhaustive x-enumeration of sum_x q^k(x) * f(x).
template <typename F>
void for_each_draft_list(int vocab, int k, const Categorical& q, F&& f) {
  std::vector<Token> x(static_cast<size_t>(k), 0);
  for (;;) {
    double weight = 1.0;
    for (Token t : x) weight *= q[t];
    if (weight > 0.0) f(x, weight);
    int pos = k - 1;
    while (pos >= 0 && x[static_cast<size_t>(pos)] == vocab - 1) {
      x[static_cast<size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
    ++x[static_cast<size_t>(pos)];
  }
}

std::shared_ptr<const MarkovModel> toy_model() {
  const std::vector<Token> corpus{0, 1, 2, 3, 2, 1, 0, 2, 3, 1, 1, 0, 3, 2, 0, 1};
  return std::make_shared<MarkovModel>(train_markov(corpus, 1, 0.5));
}

}  // namespace

TEST_CASE("acceptance_rate: closed-form worked examples") {
  const Categorical p = normalize({0.6, 0.4});
  const Categorical q = normalize({0.4, 0.6});
  CHECK(acceptance_rate(OtlpMethod::kNaive, p, p, 3) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(acceptance_rate(OtlpMethod::kNaive, p, q, 2) == doctest::Approx(0.88).epsilon(1e-12));

  const Categorical u = normalize({0.5, 0.5});
  CHECK(acceptance_rate(OtlpMethod::kNss, u, u, 2) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("acceptance_rate matches Monte-Carlo frequencies") {
  RngStream rng(51);
  const int n = 100000;
  for (int rep = 0; rep < 3; ++rep) {
    const Categorical p = random_dist(4, rng);
    const Categorical q = random_dist(4, rng);
    const int k = 1 + static_cast<int>(rng.uniform_index(3));
    for (OtlpMethod m : kAllMethods) {
      const double alpha = acceptance_rate(m, p, q, k);
      const double freq = mc_acceptance(m, p, q, k, n, derive_seed(52, static_cast<uint64_t>(rep)));
      const double sigma = std::sqrt(std::max(alpha * (1.0 - alpha), 1e-12) / n);
      CHECK(std::abs(freq - alpha) <= 4.0 * sigma + 1e-9);
    }
  }
}

TEST_CASE("branching: worked examples") {
  const Categorical p = normalize({0.6, 0.4});
  const Categorical q = normalize({0.4, 0.6});

  SUBCASE("nss maps every distinct draft token to p(t)") {
    const std::vector<Token> x{1, 0, 1};
    const auto b = branching(OtlpMethod::kNss, p, q, x);
    CHECK(b.at(0) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(b.at(1) == doctest::Approx(0.4).epsilon(1e-12));
  }

  SUBCASE("naive single draft token") {
    const std::vector<Token> x{1};
    const auto b = branching(OtlpMethod::kNaive, p, q, x);
    CHECK(b.size() == 1);
    CHECK(b.at(1) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  }

  SUBCASE("specinfer with identical tokens and p == q accepts surely") {
    const std::vector<Token> x{1, 1, 1};
    const auto b = branching(OtlpMethod::kSpecInfer, p, p, x);
    CHECK(b.at(1) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("output_distribution: worked examples and sum") {
  const Categorical p = normalize({0.6, 0.4});
  const Categorical q = normalize({0.4, 0.6});
  const std::vector<Token> x{1};

  const Categorical nss = output_distribution(OtlpMethod::kNss, p, q, x);
  for (int t = 0; t < 2; ++t) CHECK(nss[t] == p[t]);

  const Categorical naive = output_distribution(OtlpMethod::kNaive, p, q, x);
  CHECK(naive[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(naive[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  RngStream rng(53);
  for (int rep = 0; rep < 20; ++rep) {
    const Categorical pp = random_dist(3, rng);
    const Categorical qq = random_dist(3, rng);
    std::vector<Token> xs;
    for (int i = 0; i < 2; ++i) xs.push_back(static_cast<Token>(rng.uniform_index(3)));
    for (OtlpMethod m : kAllMethods) {
      const Categorical out = output_distribution(m, pp, qq, xs);
      double sum = 0.0;
      for (double v : out.probs()) sum += v;
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("losslessness identity: q^k-average of output equals p exactly") {
  RngStream rng(54);
  const int vocab = 3;
  for (int rep = 0; rep < 10; ++rep) {
    const Categorical p = random_dist(vocab, rng);
    const Categorical q = random_dist(vocab, rng);
    for (int k = 1; k <= 3; ++k) {
      for (OtlpMethod m : kAllMethods) {
        std::vector<double> acc(static_cast<size_t>(vocab), 0.0);
        for_each_draft_list(vocab, k, q, [&](const std::vector<Token>& x, double w) {
          const Categorical out = output_distribution(m, p, q, x);
          for (int t = 0; t < vocab; ++t) acc[static_cast<size_t>(t)] += w * out[t];
        });
        for (int t = 0; t < vocab; ++t) {
          CHECK(std::abs(acc[static_cast<size_t>(t)] - p[t]) <= 1e-12);
        }
      }
    }
  }
}

TEST_CASE("acceptance rate equals enumerated branching mass") {
  RngStream rng(55);
  const int vocab = 4;
  for (int rep = 0; rep < 5; ++rep) {
    const Categorical p = random_dist(vocab, rng);
    const Categorical q = random_dist(vocab, rng);
    for (int k = 1; k <= 3; ++k) {
      for (OtlpMethod m : kAllMethods) {
        double mass = 0.0;
        for_each_draft_list(vocab, k, q, [&](const std::vector<Token>& x, double w) {
          for (const auto& [t, prob] : branching(m, p, q, x)) mass += w * prob;
        });
        CHECK(std::abs(mass - acceptance_rate(m, p, q, k)) <= 1e-10);
      }
    }
  }
}

TEST_CASE("reductions: spectr and specinfer at k = 1 equal naive") {
  RngStream rng(56);
  for (int rep = 0; rep < 50; ++rep) {
    const Categorical p = random_dist(4, rng);
    const Categorical q = random_dist(4, rng);
    for (Token t = 0; t < 4; ++t) {
      if (q[t] <= 0.0) continue;
      const std::vector<Token> x{t};
      const Categorical naive = output_distribution(OtlpMethod::kNaive, p, q, x);
      const Categorical spectr = output_distribution(OtlpMethod::kSpecTr, p, q, x);
      const Categorical specinfer = output_distribution(OtlpMethod::kSpecInfer, p, q, x);
      for (int y = 0; y < 4; ++y) {
        CHECK(std::abs(spectr[y] - naive[y]) <= 1e-12);
        CHECK(std::abs(specinfer[y] - naive[y]) <= 1e-12);
      }
    }
  }
}

TEST_CASE("branching mass never exceeds 1") {
  RngStream rng(57);
  for (int rep = 0; rep < 100; ++rep) {
    const Categorical p = random_dist(4, rng);
    const Categorical q = random_dist(4, rng);
    std::vector<Token> x;
    const int k = 1 + static_cast<int>(rng.uniform_index(4));
    for (int i = 0; i < k; ++i) x.push_back(static_cast<Token>(rng.uniform_index(4)));
    for (OtlpMethod m : kAllMethods) {
      double mass = 0.0;
      for (const auto& [t, prob] : branching(m, p, q, x)) mass += prob;
      CHECK(mass <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("specinfer branching is order-insensitive") {
  RngStream rng(58);
  const Categorical p = random_dist(4, rng);
  const Categorical q = random_dist(4, rng);
  const std::vector<Token> x{2, 0, 2, 1};
  const auto base = branching(OtlpMethod::kSpecInfer, p, q, x);
  const std::vector<std::vector<Token>> perms{{0, 2, 2, 1}, {1, 2, 0, 2}, {2, 2, 1, 0}};
  for (const auto& perm : perms) {
    const auto b = branching(OtlpMethod::kSpecInfer, p, q, perm);
    for (const auto& [t, prob] : base) {
      CHECK(b.at(t) == doctest::Approx(prob).epsilon(1e-12));
    }
  }
}

TEST_CASE("estimator: exact base cases") {
  const auto model = toy_model();
  const SyntheticPair pair = make_pair(model, 0.0, 0.0);  // p == q
  const std::vector<Token> root{0, 1};

  CHECK(estimate_block_efficiency(pair, root, {1, 0, 0}, OtlpMethod::kNaive, 4, 7) == 1.0);
  CHECK(estimate_block_efficiency(pair, root, {1, 0, 3}, OtlpMethod::kNaive, 4, 7) == 4.0);

  // Monotone in l2 when p == q: every added node contributes probability 1.
  double prev = 0.0;
  for (int l2 = 0; l2 <= 4; ++l2) {
    const double e =
        estimate_block_efficiency(pair, root, {2, 1, l2}, OtlpMethod::kNaive, 4, 9);
    CHECK(e >= prev);
    prev = e;
  }
}

TEST_CASE("estimator: matches verification Monte-Carlo on the same trees") {
  const auto model = toy_model();
  const SyntheticPair pair = make_pair(model, 0.15, 0.05);
  const std::vector<Token> root{2, 1};
  const ActionTriple action{2, 1, 2};
  const OtlpMethod method = OtlpMethod::kSpecInfer;
  const int s = 16;
  const uint64_t seed = 99;

  const double estimate = estimate_block_efficiency(pair, root, action, method, s, seed);

  // Same drafted trees, emissions averaged by simulation: the estimator is
  // the exact conditional mean, so only verification noise remains.
  const RootedPair rooted = pair.at_root(root);
  const int runs_per_tree = 4000;
  double mc_mean = 0.0;
  double mc_var = 0.0;
  for (int i = 0; i < s; ++i) {
    DraftTree tree = draft_delayed(rooted, root, action, derive_seed(seed, static_cast<uint64_t>(i)));
    attach_target_dists(tree, *rooted.target);
    RngStream rng(derive_seed(1234, static_cast<uint64_t>(i)));
    double tree_mean = 0.0;
    double tree_sq = 0.0;
    for (int r = 0; r < runs_per_tree; ++r) {
      const double v = static_cast<double>(verify_tree(tree, method, rng).tokens_emitted());
      tree_mean += v;
      tree_sq += v * v;
    }
    tree_mean /= runs_per_tree;
    tree_sq /= runs_per_tree;
    mc_mean += tree_mean / s;
    mc_var += (tree_sq - tree_mean * tree_mean) / (static_cast<double>(s) * s * runs_per_tree);
  }
  CHECK(std::abs(estimate - mc_mean) <= 4.0 * std::sqrt(mc_var) + 1e-9);
}

TEST_CASE("depth profile: flat without drift, monotone with drift, naive identity") {
  const auto model = toy_model();
  RngStream rng(61);
  std::vector<std::vector<Token>> roots;
  for (int i = 0; i < 400; ++i) {
    roots.push_back({static_cast<Token>(rng.uniform_index(4))});
  }
  const std::vector<int> ks{1, 2};
  const std::vector<OtlpMethod> methods{OtlpMethod::kNaive, OtlpMethod::kNss};

  SUBCASE("drift 0: flat mean l1") {
    const SyntheticPair pair = make_pair(model, 0.2, 0.0);
    const DepthProfile prof = depth_profile(pair, roots, 5, ks, methods, 71);
    for (int d = 1; d <= 5; ++d) {
      CHECK(std::abs(prof.mean_l1[static_cast<size_t>(d)] - prof.mean_l1[0]) <= 0.05);
    }
  }

  SUBCASE("drift > 0: monotone mean l1 and the naive k=1 identity") {
    const SyntheticPair pair = make_pair(model, 0.05, 0.05);
    const DepthProfile prof = depth_profile(pair, roots, 5, ks, methods, 72);
    for (int d = 1; d <= 5; ++d) {
      CHECK(prof.mean_l1[static_cast<size_t>(d)] >=
            prof.mean_l1[static_cast<size_t>(d - 1)] - 1e-12);
    }
    for (int d = 0; d <= 5; ++d) {
      CHECK(std::abs(prof.mean_acceptance[0][0][static_cast<size_t>(d)] -
                     (1.0 - prof.mean_l1[static_cast<size_t>(d)] / 2.0)) <= 1e-12);
    }
  }
}

TEST_CASE("depth profile csv shape") {
  const auto model = toy_model();
  const SyntheticPair pair = make_pair(model, 0.1, 0.02);
  const std::vector<std::vector<Token>> roots{{0}, {1}};
  const DepthProfile prof =
      depth_profile(pair, roots, 2, {1}, {OtlpMethod::kNaive}, 73);
  std::ostringstream out;
  write_depth_profile_csv(prof, out, "config_hash=deadbeef seed=1");
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "# config_hash=deadbeef seed=1");
  std::getline(in, line);
  CHECK(line == "depth,mean_l1,method,k,mean_acceptance,n");
  size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 3);  // depths 0..2, one method, one k
}
