// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

#include "speclab/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <json.hpp>

#include "speclab/analytics.hpp"
#include "speclab/csv.hpp"
#include "speclab/parallel.hpp"
#include "speclab/selector.hpp"

namespace speclab {

namespace {

namespace fs = std::filesystem;

std::string provenance(const ExperimentConfig& config) {
  return "config_hash=" + config.hash() + " seed=" + std::to_string(config.seed);
}

std::ofstream open_out(const ExperimentConfig& config, const std::string& name) {
  fs::create_directories(config.out_dir);
  const fs::path path = fs::path(config.out_dir) / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  return out;
}

Categorical random_dist(int vocab, RngStream& rng) {
  std::vector<double> w(static_cast<size_t>(vocab));
  for (double& v : w) v = -std::log(1.0 - rng.uniform());
  return Categorical::normalized(std::move(w));
}

// Enumerates x over V^k with draft weights q^k and accumulates the exact
// first-token marginal of the solver output.
Categorical otlp_first_token_marginal(OtlpMethod method, const Categorical& p,
                                      const Categorical& q, int k) {
  const int v = p.vocab_size();
  std::vector<double> acc(static_cast<size_t>(v), 0.0);
  std::vector<Token> x(static_cast<size_t>(k), 0);
  for (;;) {
    double weight = 1.0;
    for (Token t : x) weight *= q[t];
    if (weight > 0.0) {
      const Categorical out = output_distribution(method, p, q, x);
      for (int t = 0; t < v; ++t) acc[static_cast<size_t>(t)] += weight * out[t];
    }
    int pos = k - 1;
    while (pos >= 0 && x[static_cast<size_t>(pos)] == v - 1) {
      x[static_cast<size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
    ++x[static_cast<size_t>(pos)];
  }
  return Categorical::normalized(std::move(acc));
}

double max_abs_dev(const Categorical& a, const Categorical& b) {
  double dev = 0.0;
  for (int t = 0; t < a.vocab_size(); ++t) dev = std::max(dev, std::abs(a[t] - b[t]));
  return dev;
}

// Random per-context (p, q) tables for contextual single-path enumeration.
class RandomTableModel {
 public:
  RandomTableModel(int vocab, int max_depth, RngStream& rng) : vocab_(vocab) {
    build({}, max_depth, rng);
  }

  const Categorical& at(const std::vector<Token>& ctx) const { return tables_.at(ctx); }

 private:
  void build(const std::vector<Token>& ctx, int remaining, RngStream& rng) {
    tables_.emplace(ctx, random_dist(vocab_, rng));
    if (remaining == 0) return;
    for (Token t = 0; t < vocab_; ++t) {
      std::vector<Token> child = ctx;
      child.push_back(t);
      build(child, remaining - 1, rng);
    }
  }

  int vocab_;
  std::map<std::vector<Token>, Categorical> tables_;
};

// Builds a single-path draft tree with explicit per-node distributions.
DraftTree make_path_tree(const RandomTableModel& p_model, const RandomTableModel& q_model,
                         const std::vector<Token>& path) {
  DraftTree tree({}, ActionTriple{1, 0, static_cast<int>(path.size())}, q_model.at({}));
  std::vector<Token> prefix;
  for (Token t : path) {
    tree.node(prefix).children.push_back(t);
    prefix.push_back(t);
    tree.add_node(prefix, q_model.at(prefix));
  }
  prefix.clear();
  tree.node(prefix).target_dist = p_model.at(prefix);
  for (Token t : path) {
    prefix.push_back(t);
    tree.node(prefix).target_dist = p_model.at(prefix);
  }
  return tree;
}

// Exact first-token marginal of block verification over all drafted paths.
double bv_first_token_deviation(const RandomTableModel& p_model, const RandomTableModel& q_model,
                                int vocab, int depth) {
  const Categorical& p_root = p_model.at({});
  std::vector<double> first(static_cast<size_t>(vocab), 0.0);

  std::vector<Token> path(static_cast<size_t>(depth), 0);
  for (;;) {
    double weight = 1.0;
    std::vector<Token> prefix;
    for (Token t : path) {
      weight *= q_model.at(prefix)[t];
      prefix.push_back(t);
    }
    if (weight > 0.0) {
      const DraftTree tree = make_path_tree(p_model, q_model, path);
      const BvAnalysis a = bv_analyze(tree);
      first[static_cast<size_t>(path[0])] += weight * a.alive[1];
      const double stop0 = a.stop_prob[0];
      if (stop0 > 0.0) {
        const auto res = bv_residual(p_root, q_model.at({}), 1.0);
        if (!res) return 1.0;  // inconsistent: mass stops at the root with no residual
        for (int t = 0; t < vocab; ++t) {
          first[static_cast<size_t>(t)] += weight * stop0 * (*res)[t];
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

  double dev = 0.0;
  for (int t = 0; t < vocab; ++t) {
    dev = std::max(dev, std::abs(first[static_cast<size_t>(t)] - p_root[t]));
  }
  return dev;
}

Token first_emitted_token(const VerifierOutcome& outcome) {
  return outcome.tau >= 1 ? outcome.accepted_path[0] : outcome.correction_token;
}

struct McTvResult {
  double tv = 0.0;
  int samples = 0;
};

// Empirical first-token frequencies of the full pipeline against the target
// distribution at the root.
McTvResult mc_tv_check(const SyntheticPair& source, const std::vector<Token>& root,
                       const std::string& method, double temperature, double top_p,
                       ActionTriple action, int samples, uint64_t seed, int threads) {
  const auto alias = std::shared_ptr<const PairSource>(std::shared_ptr<void>(), &source);
  const SampledSource sampled(alias, temperature, top_p);
  const RootedPair pair = sampled.at_root(root);
  const Categorical p_root = pair.target->next_dist(root);
  const int vocab = p_root.vocab_size();

  const int chunk = 4096;
  const int n_chunks = (samples + chunk - 1) / chunk;
  std::vector<std::vector<int64_t>> counts(static_cast<size_t>(n_chunks),
                                           std::vector<int64_t>(static_cast<size_t>(vocab), 0));
  parallel_for(n_chunks, threads, [&](int c) {
    auto& local = counts[static_cast<size_t>(c)];
    const int begin = c * chunk;
    const int end = std::min(samples, begin + chunk);
    for (int i = begin; i < end; ++i) {
      const uint64_t s = derive_seed(seed, static_cast<uint64_t>(i));
      DraftTree tree = draft_delayed(pair, root, action, derive_seed(s, 0));
      attach_target_dists(tree, *pair.target);
      RngStream rng(derive_seed(s, 1));
      const VerifierOutcome outcome = method == "bv"
                                          ? verify_block_bv(tree, rng)
                                          : verify_tree(tree, method_from_name(method), rng);
      local[static_cast<size_t>(first_emitted_token(outcome))] += 1;
    }
  });

  std::vector<int64_t> total(static_cast<size_t>(vocab), 0);
  for (const auto& local : counts) {
    for (int t = 0; t < vocab; ++t) total[static_cast<size_t>(t)] += local[static_cast<size_t>(t)];
  }
  McTvResult r;
  r.samples = samples;
  for (int t = 0; t < vocab; ++t) {
    const double freq = static_cast<double>(total[static_cast<size_t>(t)]) / samples;
    r.tv += 0.5 * std::abs(freq - p_root[t]);
  }
  return r;
}

}  // namespace

int cmd_lossless(const ExperimentConfig& config) {
  std::ofstream report = open_out(config, "lossless_report.txt");
  report << "# " << provenance(config) << "\n";
  bool all_pass = true;
  auto record = [&](const std::string& name, bool pass, double value, double bound) {
    all_pass = all_pass && pass;
    const std::string line = std::string(pass ? "[PASS] " : "[FAIL] ") + name + "  value=" +
                             csv_double(value) + " bound=" + csv_double(bound);
    report << line << "\n";
    std::cout << line << "\n";
  };

  const int vocab = std::min(config.lossless.vocab, 3);
  constexpr double kExactTol = 1e-12;
  constexpr double kBvTol = 1e-9;
  constexpr int kMaxK = 2;
  constexpr int kMaxL = 2;

  for (OtlpMethod method : config.otlp_methods()) {
    for (int pair_idx = 0; pair_idx < config.lossless.pairs; ++pair_idx) {
      RngStream rng(derive_seed(config.seed, 0x4c4f5331u, static_cast<uint64_t>(pair_idx)));
      const Categorical p = random_dist(vocab, rng);
      const Categorical q = random_dist(vocab, rng);
      double dev = 0.0;
      for (int k = 1; k <= kMaxK; ++k) {
        dev = std::max(dev, max_abs_dev(otlp_first_token_marginal(method, p, q, k), p));
      }
      record(std::string("exact-first-token ") + method_name(method) + " pair " +
                 std::to_string(pair_idx),
             dev <= kExactTol, dev, kExactTol);
    }
  }

  if (config.has_bv()) {
    for (int pair_idx = 0; pair_idx < config.lossless.pairs; ++pair_idx) {
      RngStream rng(derive_seed(config.seed, 0x4c4f5332u, static_cast<uint64_t>(pair_idx)));
      RandomTableModel p_model(vocab, kMaxL, rng);
      RandomTableModel q_model(vocab, kMaxL, rng);
      const double dev = bv_first_token_deviation(p_model, q_model, vocab, kMaxL);
      record("exact-first-token bv path " + std::to_string(pair_idx), dev <= kBvTol, dev, kBvTol);
    }
  }

  // Monte-Carlo total-variation suite on a larger toy configuration.
  {
    const auto target = make_random_table_provider(
        config.lossless.mc_vocab, derive_seed(config.seed, 0x4c4f5333u), 1.5);
    const SyntheticPair source(target, config.pair.divergence_knob, config.pair.depth_drift);
    const std::vector<Token> root =
        roll_prompts(*target, 1, 4, derive_seed(config.seed, 0x4c4f5334u))[0];
    struct Case {
      double temperature;
      double top_p;
    };
    const std::vector<Case> cases = {{1.0, 1.0}, {0.8, 0.9}};
    for (const std::string& method : config.methods) {
      const ActionTriple action = method == "bv" ? ActionTriple{1, 0, 3} : ActionTriple{2, 1, 2};
      for (size_t ci = 0; ci < cases.size(); ++ci) {
        const McTvResult r = mc_tv_check(
            source, root, method, cases[ci].temperature, cases[ci].top_p, action,
            config.lossless.mc_samples,
            derive_seed(config.seed, 0x4c4f5335u, static_cast<uint64_t>(ci)), config.threads);
        record("mc-tv " + method + " T=" + csv_double(cases[ci].temperature) +
                   " top_p=" + csv_double(cases[ci].top_p) + " N=" + std::to_string(r.samples),
               r.tv <= config.lossless.mc_tv, r.tv, config.lossless.mc_tv);
      }
    }
  }

  return all_pass ? 0 : 1;
}

int cmd_bench(const ExperimentConfig& config) {
  const ConfiguredWorld world = build_world(config);
  const auto prompts = roll_prompts(*world.target, config.bench.roots, config.bench.prompt_len,
                                    derive_seed(config.seed, 0x42454e31u));
  const std::vector<ActionTriple> grid = config.action_grid();
  const std::vector<OtlpMethod> methods = config.otlp_methods();

  struct Row {
    OtlpMethod method;
    double temperature;
    double top_p;
    ActionTriple action;
    double e_block;
    double t_hat;
    double tps;
  };

  struct ConfigSlot {
    std::shared_ptr<SampledSource> sampled;
    double temperature;
    double top_p;
  };
  std::vector<ConfigSlot> sampling_slots;
  for (double t : config.sampling.temperatures) {
    for (double tp : config.sampling.top_ps) {
      sampling_slots.push_back(
          {std::make_shared<SampledSource>(world.source, t, tp), t, tp});
    }
  }

  const size_t n_rows = methods.size() * sampling_slots.size() * grid.size();
  const size_t n_roots = prompts.size();
  std::vector<double> per_task_e(n_rows * n_roots, 0.0);

  const int n_tasks = static_cast<int>(n_rows * n_roots);
  parallel_for(n_tasks, config.threads, [&](int task) {
    const size_t row = static_cast<size_t>(task) / n_roots;
    const size_t root_idx = static_cast<size_t>(task) % n_roots;
    const size_t mi = row / (sampling_slots.size() * grid.size());
    const size_t rest = row % (sampling_slots.size() * grid.size());
    const size_t si = rest / grid.size();
    const size_t ai = rest % grid.size();
    per_task_e[static_cast<size_t>(task)] = estimate_block_efficiency(
        *sampling_slots[si].sampled, prompts[root_idx], grid[ai], methods[mi], config.bench.s,
        derive_seed(config.seed, 0x42454e32u, static_cast<uint64_t>(task)), 1);
  });

  std::vector<Row> rows;
  rows.reserve(n_rows);
  for (size_t mi = 0; mi < methods.size(); ++mi) {
    for (size_t si = 0; si < sampling_slots.size(); ++si) {
      for (size_t ai = 0; ai < grid.size(); ++ai) {
        const size_t row = (mi * sampling_slots.size() + si) * grid.size() + ai;
        double e_mean = 0.0;
        double t_mean = 0.0;
        for (size_t r = 0; r < n_roots; ++r) {
          e_mean += per_task_e[row * n_roots + r];
          t_mean += estimate_forward_time(config.latency,
                                          static_cast<double>(prompts[r].size()), grid[ai]);
        }
        e_mean /= static_cast<double>(n_roots);
        t_mean /= static_cast<double>(n_roots);
        rows.push_back({methods[mi], sampling_slots[si].temperature, sampling_slots[si].top_p,
                        grid[ai], e_mean, t_mean, e_mean / t_mean});
      }
    }
  }

  auto write_rows = [&](std::ostream& out, const std::vector<Row>& rs) {
    out << "# " << provenance(config) << "\n";
    out << "method,temperature,top_p,K,L1,L2,e_block,t_hat,tps\n";
    for (const Row& r : rs) {
      out << method_name(r.method) << ',' << csv_double(r.temperature) << ','
          << csv_double(r.top_p) << ',' << r.action.k << ',' << r.action.l1 << ',' << r.action.l2
          << ',' << csv_double(r.e_block) << ',' << csv_double(r.t_hat) << ','
          << csv_double(r.tps) << "\n";
    }
  };

  {
    std::ofstream out = open_out(config, "bench.csv");
    write_rows(out, rows);
  }
  {
    // Static-best action per (method, sampling configuration).
    std::vector<Row> best;
    for (size_t mi = 0; mi < methods.size(); ++mi) {
      for (size_t si = 0; si < sampling_slots.size(); ++si) {
        const Row* top = nullptr;
        for (const Row& r : rows) {
          if (r.method != methods[mi] || r.temperature != sampling_slots[si].temperature ||
              r.top_p != sampling_slots[si].top_p) {
            continue;
          }
          if (top == nullptr || r.tps > top->tps ||
              (r.tps == top->tps && r.action < top->action)) {
            top = &r;
          }
        }
        if (top) best.push_back(*top);
      }
    }
    std::ofstream out = open_out(config, "bench_best.csv");
    write_rows(out, best);
  }

  if (config.bench.dump_trees > 0 && !sampling_slots.empty() && !grid.empty()) {
    std::ofstream out = open_out(config, "trees.jsonl");
    out << nlohmann::ordered_json{{"format", "speclab-trees"},
                                  {"config_hash", config.hash()},
                                  {"seed", config.seed}}
               .dump()
        << "\n";
    const RootedPair pair = sampling_slots[0].sampled->at_root(prompts[0]);
    for (int i = 0; i < config.bench.dump_trees; ++i) {
      DraftTree tree = draft_delayed(pair, prompts[0], grid.back(),
                                     derive_seed(config.seed, 0x42454e33u, static_cast<uint64_t>(i)));
      attach_target_dists(tree, *pair.target);
      dump_tree_jsonl(tree, out);
    }
  }

  std::cout << "bench: wrote " << rows.size() << " rows to " << config.out_dir << "/bench.csv\n";
  return 0;
}

int cmd_profile(const ExperimentConfig& config) {
  const ConfiguredWorld world = build_world(config);
  const auto roots = roll_prompts(*world.target, config.profile.roots, config.profile.prompt_len,
                                  derive_seed(config.seed, 0x50524f31u));
  const SampledSource sampled(world.source, config.sampling.temperatures[0],
                              config.sampling.top_ps[0]);
  const DepthProfile profile =
      depth_profile(sampled, roots, config.profile.max_depth, config.profile.k_values,
                    config.otlp_methods(), derive_seed(config.seed, 0x50524f32u), config.threads);
  std::ofstream out = open_out(config, "profile.csv");
  write_depth_profile_csv(profile, out, provenance(config));
  std::cout << "profile: wrote " << config.out_dir << "/profile.csv\n";
  return 0;
}

int cmd_trace(const ExperimentConfig& config) {
  const ConfiguredWorld world = build_world(config);
  const auto prompts = roll_prompts(*world.target, config.trace.prompts, config.trace.prompt_len,
                                    derive_seed(config.seed, 0x54524331u));

  TraceGenConfig gen;
  gen.actions = config.action_grid();
  gen.stride = config.trace.stride;
  gen.s = config.trace.s;
  gen.trajectory_len = config.trace.trajectory_len;
  gen.temperatures = config.sampling.temperatures;
  gen.top_ps = config.sampling.top_ps;
  gen.holdout_fraction = config.trace.holdout_fraction;
  if (config.trace.feature_widths.size() != 3) throw ConfigError("trace.feature_widths needs 3 entries");
  gen.feature_widths = {config.trace.feature_widths[0], config.trace.feature_widths[1],
                        config.trace.feature_widths[2]};
  gen.latency = config.latency;
  gen.method = method_from_name(config.trace.method);
  gen.seed = derive_seed(config.seed, 0x54524332u);
  gen.threads = config.threads;
  gen.config_hash = config.hash();

  const TraceDataset dataset = generate_traces(*world.source, prompts, gen);
  fs::create_directories(config.out_dir);
  const std::string path = (fs::path(config.out_dir) / config.trace.out).string();
  dataset.save_jsonl(path);
  std::cout << "trace: wrote " << dataset.records.size() << " records to " << path << "\n";
  return 0;
}

namespace {

std::string resolve_artifact(const ExperimentConfig& config, const std::string& explicit_path,
                             const std::string& fallback_name) {
  if (!explicit_path.empty()) return explicit_path;
  return (fs::path(config.out_dir) / fallback_name).string();
}

}  // namespace

int cmd_train(const ExperimentConfig& config) {
  const std::string dataset_path = resolve_artifact(config, config.train.dataset, "traces.jsonl");
  if (!fs::exists(dataset_path)) {
    throw ConfigError("trace dataset not found: " + dataset_path + " (run `speclab trace` first)");
  }
  const TraceDataset dataset = TraceDataset::load_jsonl(dataset_path);

  TrainConfig tc;
  tc.lr = config.train.lr;
  tc.batch_size = config.train.batch_size;
  tc.epochs = config.train.epochs;
  tc.dropout = config.train.dropout;
  tc.lambda = config.train.lambda;
  tc.alpha_frac = config.train.alpha_frac;
  tc.proj_dim = config.train.proj_dim;
  if (config.train.hidden.size() != 2) throw ConfigError("train.hidden needs 2 entries");
  tc.hidden = {config.train.hidden[0], config.train.hidden[1]};
  tc.seed = derive_seed(config.seed, 0x54524e31u);

  const TrainResult result = train(dataset, tc);
  fs::create_directories(config.out_dir);
  const std::string checkpoint_path = (fs::path(config.out_dir) / config.train.out).string();
  result.bundle.save(checkpoint_path, config.hash(), config.seed);

  nlohmann::ordered_json metrics;
  metrics["config_hash"] = config.hash();
  metrics["seed"] = config.seed;
  metrics["dataset"] = dataset_path;
  metrics["best_epoch"] = result.best_epoch;
  metrics["epoch_train_loss"] = result.epoch_train_loss;
  metrics["epoch_heldout_logratio"] = result.epoch_heldout_logratio;
  std::ofstream mout = open_out(config, "train_metrics.json");
  mout << metrics.dump(2) << "\n";

  std::cout << "train: checkpoint " << checkpoint_path << " best_epoch=" << result.best_epoch
            << "\n";
  return 0;
}

int cmd_eval(const ExperimentConfig& config) {
  const std::string dataset_path = resolve_artifact(config, config.eval.dataset, "traces.jsonl");
  const std::string checkpoint_path =
      resolve_artifact(config, config.eval.checkpoint, "policy.json");
  if (!fs::exists(dataset_path)) throw ConfigError("trace dataset not found: " + dataset_path);
  if (!fs::exists(checkpoint_path)) {
    throw ConfigError("policy checkpoint not found: " + checkpoint_path +
                      " (run `speclab train` first)");
  }

  const TraceDataset dataset = TraceDataset::load_jsonl(dataset_path);
  const PolicyBundle bundle = PolicyBundle::load(checkpoint_path);
  if (bundle.actions != dataset.actions) {
    throw ConfigError("checkpoint and dataset use different action subsets");
  }

  std::vector<const TraceRecord*> records;
  for (const TraceRecord& r : dataset.records) {
    if (config.eval.split == "all" || (config.eval.split == "heldout") == r.heldout) {
      records.push_back(&r);
    }
  }
  if (records.empty()) throw ConfigError("eval split has no records: " + config.eval.split);

  const size_t n_actions = dataset.actions.size();
  const std::vector<double> uniform_pi(n_actions, 1.0 / static_cast<double>(n_actions));

  struct Group {
    int count = 0;
    double selector = 0.0;
    double baseline = 0.0;
    double uniform = 0.0;
  };
  std::map<std::pair<double, double>, Group> groups;

  for (const TraceRecord* r : records) {
    const ActionTriple chosen = select_action(bundle, r->features);
    const size_t ci = static_cast<size_t>(
        std::find(dataset.actions.begin(), dataset.actions.end(), chosen) -
        dataset.actions.begin());
    Group& g = groups[{r->temperature, r->top_p}];
    g.count += 1;
    g.selector += r->e_block[ci] / r->t_hat[ci];
    g.baseline += r->e_block[static_cast<size_t>(r->base_action)] /
                  r->t_hat[static_cast<size_t>(r->base_action)];
    g.uniform += offline_tps(uniform_pi, r->e_block, r->t_hat);
  }

  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  double sel_total = 0.0, base_total = 0.0, uni_total = 0.0;
  int total = 0;
  for (auto& [key, g] : groups) {
    const double sel = g.selector / g.count;
    const double base = g.baseline / g.count;
    const double uni = g.uniform / g.count;
    rows.push_back({{"temperature", key.first},
                    {"top_p", key.second},
                    {"n", g.count},
                    {"selector_tps", sel},
                    {"baseline_tps", base},
                    {"uniform_tps", uni},
                    {"selector_over_baseline", sel / base},
                    {"uniform_over_baseline", uni / base}});
    sel_total += g.selector;
    base_total += g.baseline;
    uni_total += g.uniform;
    total += g.count;
  }

  nlohmann::ordered_json doc;
  doc["config_hash"] = config.hash();
  doc["seed"] = config.seed;
  doc["dataset"] = dataset_path;
  doc["checkpoint"] = checkpoint_path;
  doc["split"] = config.eval.split;
  doc["per_configuration"] = std::move(rows);
  doc["overall"] = {{"n", total},
                    {"selector_tps", sel_total / total},
                    {"baseline_tps", base_total / total},
                    {"uniform_tps", uni_total / total},
                    {"selector_over_baseline", (sel_total / total) / (base_total / total)},
                    {"uniform_over_baseline", (uni_total / total) / (base_total / total)}};

  std::ofstream out = open_out(config, config.eval.out);
  out << doc.dump(2) << "\n";
  std::cout << "eval: selector/baseline = "
            << csv_double((sel_total / total) / (base_total / total)) << " on " << total
            << " records (" << config.eval.split << ")\n";
  return 0;
}

}  // namespace speclab
