// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one line per criterion, nonzero exit on any failure.
// Oracles here are written independently of the library's internal
// enumeration helpers.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "planted.hpp"
#include "speclab/analytics.hpp"
#include "speclab/commands.hpp"
#include "speclab/config.hpp"
#include "speclab/selector.hpp"

using namespace speclab;

namespace {

int g_failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] %-34s %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  if (!pass) ++g_failures;
}

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

Categorical random_dist(int vocab, RngStream& rng) {
  std::vector<double> w(static_cast<size_t>(vocab));
  for (double& v : w) v = -std::log(1.0 - rng.uniform());
  return Categorical::normalized(std::move(w));
}

constexpr OtlpMethod kAllMethods[] = {OtlpMethod::kNss, OtlpMethod::kNaive, OtlpMethod::kSpecTr,
                                      OtlpMethod::kSpecInfer};

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

// --------------------------------------------------------------------------
// Criterion 1: exact losslessness of the first emitted token.
// --------------------------------------------------------------------------

struct ContextTables {
  std::map<std::vector<Token>, Categorical> p, q;
  int vocab = 0;

  static ContextTables random(int vocab, int depth, RngStream& rng) {
    ContextTables m;
    m.vocab = vocab;
    std::vector<std::vector<Token>> frontier{{}};
    for (int d = 0; d <= depth; ++d) {
      std::vector<std::vector<Token>> next;
      for (const auto& ctx : frontier) {
        m.p.emplace(ctx, random_dist(vocab, rng));
        m.q.emplace(ctx, random_dist(vocab, rng));
        if (d < depth) {
          for (Token t = 0; t < vocab; ++t) {
            auto child = ctx;
            child.push_back(t);
            next.push_back(std::move(child));
          }
        }
      }
      frontier = std::move(next);
    }
    return m;
  }
};

DraftTree build_path_tree(const ContextTables& m, const std::vector<Token>& path) {
  DraftTree tree({}, ActionTriple{1, 0, static_cast<int>(path.size())}, m.q.at({}));
  std::vector<Token> prefix;
  for (Token t : path) {
    tree.node(prefix).children.push_back(t);
    prefix.push_back(t);
    tree.add_node(prefix, m.q.at(prefix));
  }
  prefix.clear();
  tree.node(prefix).target_dist = m.p.at(prefix);
  for (Token t : path) {
    prefix.push_back(t);
    tree.node(prefix).target_dist = m.p.at(prefix);
  }
  return tree;
}

void criterion_losslessness() {
  const double start = now_seconds();
  const int vocab = 3;
  const int n_pairs = 20;
  double worst_otlp = 0.0;
  // First-token marginal: the root child list has k entries (k = 1 for a
  // trunk, K for immediate branching); deeper tokens cannot change the first
  // solver call, so enumerating x over V^k for k = 1, 2 covers every
  // (K <= 2, L1 <= 2, L2 <= 2) delayed tree shape.
  for (OtlpMethod method : kAllMethods) {
    for (int pair = 0; pair < n_pairs; ++pair) {
      RngStream rng(derive_seed(1001, static_cast<uint64_t>(pair)));
      const Categorical p = random_dist(vocab, rng);
      const Categorical q = random_dist(vocab, rng);
      for (int k = 1; k <= 2; ++k) {
        std::vector<double> first(static_cast<size_t>(vocab), 0.0);
        for_each_draft_list(vocab, k, q, [&](const std::vector<Token>& x, double w) {
          const Categorical out = output_distribution(method, p, q, x);
          for (int t = 0; t < vocab; ++t) first[static_cast<size_t>(t)] += w * out[t];
        });
        for (int t = 0; t < vocab; ++t) {
          worst_otlp = std::max(worst_otlp, std::abs(first[static_cast<size_t>(t)] - p[t]));
        }
      }
    }
  }

  double worst_bv = 0.0;
  const int depth = 2;
  for (int pair = 0; pair < n_pairs; ++pair) {
    RngStream rng(derive_seed(1002, static_cast<uint64_t>(pair)));
    const ContextTables m = ContextTables::random(vocab, depth, rng);
    std::vector<double> first(static_cast<size_t>(vocab), 0.0);
    std::vector<Token> path(static_cast<size_t>(depth), 0);
    for (;;) {
      double w = 1.0;
      std::vector<Token> prefix;
      for (Token t : path) {
        w *= m.q.at(prefix)[t];
        prefix.push_back(t);
      }
      if (w > 0.0) {
        const BvAnalysis a = bv_analyze(build_path_tree(m, path));
        first[static_cast<size_t>(path[0])] += w * a.alive[1];
        if (a.stop_prob[0] > 0.0) {
          const auto res = bv_residual(m.p.at({}), m.q.at({}), 1.0);
          for (int t = 0; t < vocab && res; ++t) {
            first[static_cast<size_t>(t)] += w * a.stop_prob[0] * (*res)[t];
          }
        }
      }
      int pos = depth - 1;
      while (pos >= 0 && path[static_cast<size_t>(pos)] == vocab - 1) {
        path[static_cast<size_t>(pos)] = 0;
        --pos;
      }
      if (pos < 0) break;
      ++path[static_cast<size_t>(pos)];
    }
    const Categorical& p_root = m.p.at({});
    for (int t = 0; t < vocab; ++t) {
      worst_bv = std::max(worst_bv, std::abs(first[static_cast<size_t>(t)] - p_root[t]));
    }
  }

  const double elapsed = now_seconds() - start;
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "otlp max dev %.3e (<=1e-12), bv max dev %.3e (<=1e-9), %.1fs (<120s)",
                worst_otlp, worst_bv, elapsed);
  report("losslessness-exact", worst_otlp <= 1e-12 && worst_bv <= 1e-9 && elapsed < 120.0,
         detail);
}

// --------------------------------------------------------------------------
// Criterion 2: acceptance rates vs branching probabilities, exact and MC.
// --------------------------------------------------------------------------

void criterion_acceptance_crosscheck() {
  double worst_exact = 0.0;
  const int vocab = 4;
  for (int pair = 0; pair < 10; ++pair) {
    RngStream rng(derive_seed(2001, static_cast<uint64_t>(pair)));
    const Categorical p = random_dist(vocab, rng);
    const Categorical q = random_dist(vocab, rng);
    for (int k = 1; k <= 3; ++k) {
      for (OtlpMethod m : kAllMethods) {
        double mass = 0.0;
        for_each_draft_list(vocab, k, q, [&](const std::vector<Token>& x, double w) {
          for (const auto& [t, prob] : branching(m, p, q, x)) mass += w * prob;
        });
        worst_exact = std::max(worst_exact, std::abs(mass - acceptance_rate(m, p, q, k)));
      }
    }
  }

  const int n = 100000;
  double worst_sigmas = 0.0;
  for (int pair = 0; pair < 3; ++pair) {
    RngStream rng(derive_seed(2002, static_cast<uint64_t>(pair)));
    const Categorical p = random_dist(vocab, rng);
    const Categorical q = random_dist(vocab, rng);
    const int k = 1 + pair;
    for (OtlpMethod m : kAllMethods) {
      RngStream mc(derive_seed(2003, static_cast<uint64_t>(pair),
                               static_cast<uint64_t>(static_cast<int>(m))));
      int hits = 0;
      std::vector<Token> x(static_cast<size_t>(k));
      for (int i = 0; i < n; ++i) {
        for (Token& t : x) t = sample(q, mc);
        const Token y = otlp_solve(m, p, q, x, mc);
        hits += std::find(x.begin(), x.end(), y) != x.end();
      }
      const double alpha = acceptance_rate(m, p, q, k);
      const double freq = static_cast<double>(hits) / n;
      const double sigma = std::sqrt(std::max(alpha * (1.0 - alpha), 1e-12) / n);
      worst_sigmas = std::max(worst_sigmas, std::abs(freq - alpha) / sigma);
    }
  }

  char detail[160];
  std::snprintf(detail, sizeof(detail), "exact max dev %.3e (<=1e-10), mc worst %.2f sigma (<=4)",
                worst_exact, worst_sigmas);
  report("acceptance-crosscheck", worst_exact <= 1e-10 && worst_sigmas <= 4.0, detail);
}

// --------------------------------------------------------------------------
// Criterion 3: k = 1 reductions to naive.
// --------------------------------------------------------------------------

void criterion_reductions() {
  double worst = 0.0;
  const int vocab = 4;
  for (int pair = 0; pair < 50; ++pair) {
    RngStream rng(derive_seed(3001, static_cast<uint64_t>(pair)));
    const Categorical p = random_dist(vocab, rng);
    const Categorical q = random_dist(vocab, rng);
    for (Token t = 0; t < vocab; ++t) {
      if (q[t] <= 0.0) continue;
      const std::vector<Token> x{t};
      const Categorical naive = output_distribution(OtlpMethod::kNaive, p, q, x);
      const Categorical spectr = output_distribution(OtlpMethod::kSpecTr, p, q, x);
      const Categorical specinfer = output_distribution(OtlpMethod::kSpecInfer, p, q, x);
      for (int y = 0; y < vocab; ++y) {
        worst = std::max(worst, std::abs(spectr[y] - naive[y]));
        worst = std::max(worst, std::abs(specinfer[y] - naive[y]));
      }
    }
  }
  char detail[96];
  std::snprintf(detail, sizeof(detail), "max dev %.3e (<=1e-12, 50 pairs)", worst);
  report("k1-reductions", worst <= 1e-12, detail);
}

// --------------------------------------------------------------------------
// Criterion 4: block-efficiency estimator vs verification Monte-Carlo.
// --------------------------------------------------------------------------

void criterion_estimator() {
  const auto target = make_random_table_provider(10, 4001, 1.5);

  bool exact_ok = true;
  {
    const SyntheticPair same(target, 0.0, 0.0);
    const std::vector<Token> root{1, 2};
    exact_ok = exact_ok &&
               estimate_block_efficiency(same, root, {1, 0, 0}, OtlpMethod::kNaive, 4, 5) == 1.0;
    for (int l = 1; l <= 4; ++l) {
      const double e =
          estimate_block_efficiency(same, root, {1, 0, l}, OtlpMethod::kNaive, 4, 5);
      exact_ok = exact_ok && e == static_cast<double>(l + 1);
    }
  }

  const int s = 64;
  const int total_runs = 100000;
  const int runs_per_tree = total_runs / s;
  double worst_sigmas = 0.0;
  const ActionTriple actions[] = {{2, 1, 2}, {4, 0, 3}, {3, 2, 2}, {2, 0, 4}, {4, 2, 1}};
  const OtlpMethod methods[] = {OtlpMethod::kNaive, OtlpMethod::kSpecTr, OtlpMethod::kSpecInfer,
                                OtlpMethod::kNss};
  int triples = 0;
  for (int i = 0; i < 12; ++i, ++triples) {
    RngStream rng(derive_seed(4002, static_cast<uint64_t>(i)));
    const SyntheticPair pair(target, 0.05 + 0.1 * rng.uniform(), 0.05 * rng.uniform());
    const std::vector<Token> root{static_cast<Token>(rng.uniform_index(10)),
                                  static_cast<Token>(rng.uniform_index(10))};
    const ActionTriple action = actions[i % 5];
    const OtlpMethod method = methods[i % 4];
    const uint64_t seed = derive_seed(4003, static_cast<uint64_t>(i));

    const double estimate = estimate_block_efficiency(pair, root, action, method, s, seed);

    // Monte-Carlo over the same s drafted trees: the estimator is their
    // exact per-tree mean, so only verification noise remains.
    const RootedPair rooted = pair.at_root(root);
    double mc_mean = 0.0;
    double mc_var = 0.0;
    for (int ti = 0; ti < s; ++ti) {
      DraftTree tree =
          draft_delayed(rooted, root, action, derive_seed(seed, static_cast<uint64_t>(ti)));
      attach_target_dists(tree, *rooted.target);
      RngStream vr(derive_seed(4004, static_cast<uint64_t>(i), static_cast<uint64_t>(ti)));
      double mean = 0.0;
      double sq = 0.0;
      for (int r = 0; r < runs_per_tree; ++r) {
        const double v = static_cast<double>(verify_tree(tree, method, vr).tokens_emitted());
        mean += v;
        sq += v * v;
      }
      mean /= runs_per_tree;
      sq /= runs_per_tree;
      mc_mean += mean / s;
      mc_var += (sq - mean * mean) / (static_cast<double>(s) * s * runs_per_tree);
    }
    const double sigma = std::sqrt(std::max(mc_var, 1e-18));
    worst_sigmas = std::max(worst_sigmas, std::abs(estimate - mc_mean) / sigma);
  }

  char detail[128];
  std::snprintf(detail, sizeof(detail), "exact cases %s, %d triples worst %.2f sigma (<=4)",
                exact_ok ? "ok" : "BROKEN", triples, worst_sigmas);
  report("estimator-vs-mc", exact_ok && worst_sigmas <= 4.0, detail);
}

// --------------------------------------------------------------------------
// Criterion 5: SpecTr bisection quality.
// --------------------------------------------------------------------------

void criterion_bisection() {
  double worst_gap = 0.0;
  double worst_grid = 0.0;
  const int vocab = 4;
  for (int i = 0; i < 100; ++i) {
    RngStream rng(derive_seed(5001, static_cast<uint64_t>(i)));
    const Categorical p = random_dist(vocab, rng);
    const Categorical q = random_dist(vocab, rng);
    const int k = 2 + static_cast<int>(rng.uniform_index(3));
    const SpecTrParams s = solve_rho(p, q, k);
    worst_gap = std::max(worst_gap, std::abs(s.p_acc - s.rho_star * s.beta));

    // Grid scan: the last rho with non-negative gap brackets the root in one
    // 1e-6 cell; the solver must land inside it (i.e. within 1e-6).
    double cell_lo = 1.0;
    for (double rho = 1.0; rho <= k; rho += 1e-6) {
      const double beta = spectr_beta(p, q, rho);
      if (1.0 - std::pow(1.0 - beta, k) - rho * beta >= 0.0) {
        cell_lo = rho;
      } else {
        break;
      }
    }
    const double off = std::max(cell_lo - s.rho_star, s.rho_star - (cell_lo + 1e-6));
    worst_grid = std::max(worst_grid, off);
  }
  char detail[128];
  std::snprintf(detail, sizeof(detail),
                "worst |p_acc - rho*beta| %.3e (<=1e-9), grid overshoot %.3e (<=1e-9)", worst_gap,
                worst_grid);
  report("spectr-bisection", worst_gap <= 1e-9 && worst_grid <= 1e-9, detail);
}

// --------------------------------------------------------------------------
// Criterion 6: depth profile analogue.
// --------------------------------------------------------------------------

void criterion_depth_profile() {
  const auto target = make_random_table_provider(12, 6001, 1.5);
  const SyntheticPair pair(target, 0.05, 0.06);
  const auto roots = roll_prompts(*target, 1200, 3, 6002);
  const DepthProfile prof = depth_profile(pair, roots, 5, {1}, {OtlpMethod::kNaive}, 6003, 0);

  bool monotone = true;
  for (int d = 2; d <= 5; ++d) {
    monotone = monotone &&
               prof.mean_l1[static_cast<size_t>(d)] >= prof.mean_l1[static_cast<size_t>(d - 1)];
  }
  double worst_identity = 0.0;
  for (int d = 0; d <= 5; ++d) {
    worst_identity =
        std::max(worst_identity, std::abs(prof.mean_acceptance[0][0][static_cast<size_t>(d)] -
                                          (1.0 - prof.mean_l1[static_cast<size_t>(d)] / 2.0)));
  }
  char detail[128];
  std::snprintf(detail, sizeof(detail),
                "mean_l1 monotone(d1..5)=%s, naive k=1 identity dev %.3e (<=1e-12)",
                monotone ? "yes" : "NO", worst_identity);
  report("depth-profile-analogue", monotone && worst_identity <= 1e-12, detail);
}

// --------------------------------------------------------------------------
// Criterion 7: latency and TPS formulas.
// --------------------------------------------------------------------------

void criterion_latency_tps() {
  LatencyModel lat;
  lat.a_p = 0.1;
  lat.b_p = 0.0;
  lat.a_q = 0.01;
  lat.b_q = 0.0;
  const double t = estimate_forward_time(lat, 100, {2, 1, 2});

  const std::vector<double> pi{0.5, 0.5};
  const std::vector<double> e{2.0, 4.0};
  const std::vector<double> th{0.1, 0.1};
  const double tps = offline_tps(pi, e, th);

  char detail[96];
  std::snprintf(detail, sizeof(detail), "forward time %.12g (0.13), tps %.12g (30)", t, tps);
  report("latency-tps-formulas", t == 0.13 && tps == 30.0, detail);
}

// --------------------------------------------------------------------------
// Criterion 8: selector gradients and planted-optimum training.
// --------------------------------------------------------------------------

std::vector<ActionTriple> default_subset() {
  std::vector<ActionTriple> actions;
  for (int k : {1, 2, 4}) {
    for (int l1 : {0, 1, 2, 4}) {
      for (int l2 : {0, 2, 4, 8}) actions.push_back({k, l1, l2});
    }
  }
  return actions;
}

bool gradient_check() {
  const std::vector<ActionTriple> actions{{1, 0, 0}, {2, 0, 2}, {2, 1, 2}};
  const TraceDataset ds = testing::make_planted_dataset(6, actions, 2, 8001);

  PolicyNet::Shape shape;
  shape.block_widths = {4, 4, 4};
  shape.scalar_dim = kScalarFeatureDim;
  shape.proj_dim = 4;
  shape.hidden = {8, 4};
  shape.n_actions = 3;
  shape.dropout = 0.0;
  PolicyNet net(shape, 8002);

  std::vector<std::vector<double>> rows;
  for (const auto& r : ds.records) rows.push_back(r.features.scalars);
  const Standardizer stats = Standardizer::fit(rows);

  std::vector<const TraceRecord*> batch;
  for (const auto& r : ds.records) batch.push_back(&r);

  std::vector<double> grad(net.params().size(), 0.0);
  training_loss_with_grad(net, stats, batch, actions, 1.0, 0.5, grad);
  const double h = 1e-3;
  for (size_t i = 0; i < net.params().size(); ++i) {
    const double saved = net.params()[i];
    net.params()[i] = saved + h;
    const double up = training_loss(net, stats, batch, actions, 1.0, 0.5);
    net.params()[i] = saved - h;
    const double down = training_loss(net, stats, batch, actions, 1.0, 0.5);
    net.params()[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    // Relative tolerance 1e-4 with an h^2 absolute floor for the truncation
    // error of central differences on near-zero entries.
    if (std::abs(fd - grad[i]) > 1e-4 * std::max(std::abs(fd), std::abs(grad[i])) + h * h) {
      return false;
    }
  }
  return true;
}

void criterion_selector() {
  const double start = now_seconds();
  const bool grads_ok = gradient_check();

  const std::vector<ActionTriple> actions = default_subset();
  const size_t planted = static_cast<size_t>(
      std::find(actions.begin(), actions.end(), ActionTriple{2, 1, 2}) - actions.begin());
  const TraceDataset ds =
      testing::make_planted_dataset(10000, actions, planted, 8003, 0.2, {8, 8, 8});

  TrainConfig tc;
  tc.seed = 8004;
  const TrainResult result = train(ds, tc);

  int heldout = 0;
  int hits = 0;
  double sel = 0.0;
  double base = 0.0;
  double uniform = 0.0;
  const std::vector<double> uniform_pi(actions.size(), 1.0 / actions.size());
  for (const TraceRecord& r : ds.records) {
    if (!r.heldout) continue;
    ++heldout;
    const ActionTriple a = select_action(result.bundle, r.features);
    const size_t ai =
        static_cast<size_t>(std::find(actions.begin(), actions.end(), a) - actions.begin());
    hits += ai == planted;
    sel += r.e_block[ai] / r.t_hat[ai];
    base += r.e_block[static_cast<size_t>(r.base_action)] /
            r.t_hat[static_cast<size_t>(r.base_action)];
    uniform += offline_tps(uniform_pi, r.e_block, r.t_hat);
  }
  const double hit_rate = static_cast<double>(hits) / heldout;
  const double ratio = sel / base;
  const double uniform_ratio = uniform / base;
  const double elapsed = now_seconds() - start;

  char detail[200];
  std::snprintf(detail, sizeof(detail),
                "grads %s, planted hit %.1f%% (>=95), tps/base %.3f (>=0.98), uniform/base %.3f "
                "(< selector), %.0fs (<600)",
                grads_ok ? "ok" : "BROKEN", 100.0 * hit_rate, ratio, uniform_ratio, elapsed);
  report("selector-planted-optimum",
         grads_ok && hit_rate >= 0.95 && ratio >= 0.98 && ratio > uniform_ratio && elapsed < 600.0,
         detail);
}

// --------------------------------------------------------------------------
// Criterion 9: byte-identical bench reruns across thread counts.
// --------------------------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void criterion_determinism() {
  namespace fs = std::filesystem;
  const fs::path base = fs::temp_directory_path() / "speclab_acceptance_bench";
  fs::remove_all(base);

  std::vector<std::string> csvs;
  for (int threads : {1, 0, 5}) {
    const std::string out_dir = (base / ("t" + std::to_string(threads))).string();
    const ExperimentConfig c = load_config(
        "", {"seed=97", "out_dir=" + out_dir, "threads=" + std::to_string(threads),
             "synthetic.vocab_size=10", "bench.roots=4", "bench.s=2", "actions.k=[1,2,4]",
             "actions.l1=[0,2]", "actions.l2=[0,4]", "sampling.temperatures=[1.0,0.8]",
             "sampling.top_ps=[1.0,0.9]", "methods=[\"nss\",\"naive\",\"spectr\",\"specinfer\"]"});
    if (cmd_bench(c) != 0) {
      report("bench-determinism", false, "cmd_bench failed");
      return;
    }
    csvs.push_back(slurp(fs::path(out_dir) / "bench.csv"));
  }
  fs::remove_all(base);

  const bool identical = csvs[0] == csvs[1] && csvs[0] == csvs[2];
  char detail[96];
  std::snprintf(detail, sizeof(detail), "3 thread counts, %zu bytes, identical=%s", csvs[0].size(),
                identical ? "yes" : "NO");
  report("bench-determinism", identical && !csvs[0].empty(), detail);
}

}  // namespace

int main() {
  criterion_losslessness();
  criterion_acceptance_crosscheck();
  criterion_reductions();
  criterion_estimator();
  criterion_bisection();
  criterion_depth_profile();
  criterion_latency_tps();
  criterion_selector();
  criterion_determinism();

  if (g_failures > 0) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all acceptance criteria passed\n");
  return 0;
}
