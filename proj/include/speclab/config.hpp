// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "speclab/action.hpp"
#include "speclab/latency.hpp"
#include "speclab/toy_models.hpp"
#include "speclab/verifiers.hpp"

namespace speclab {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// One experiment description. JSON file keys mirror the field paths below;
// CLI flags override individual keys.
struct ExperimentConfig {
  uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir = "out";
  int threads = 0;  // 0: OpenMP default

  // Toy model source: a corpus-trained Markov model, or a seeded random
  // next-token table when no corpus is given.
  struct Corpus {
    std::string path;  // empty: synthetic
    std::string tokenizer = "byte";
  } corpus;
  struct Synthetic {
    int vocab_size = 12;
    double concentration = 1.5;
  } synthetic;
  struct Markov {
    int order = 2;
    double smoothing_alpha = 0.5;
  } markov;
  struct Pair {
    double divergence_knob = 0.1;
    double depth_drift = 0.02;
  } pair;

  struct Sampling {
    std::vector<double> temperatures{1.0};
    std::vector<double> top_ps{1.0};
  } sampling;

  std::vector<std::string> methods{"nss", "naive", "spectr", "specinfer", "bv"};

  struct Actions {
    std::vector<int> k{1, 2, 4};
    std::vector<int> l1{0, 1, 2, 4};
    std::vector<int> l2{0, 2, 4, 8};
  } actions;

  LatencyModel latency;

  struct Lossless {
    int pairs = 20;
    int vocab = 3;
    int mc_samples = 1000000;
    double mc_tv = 5e-3;
    int mc_vocab = 16;
  } lossless;

  struct Bench {
    int roots = 8;
    int s = 4;
    int prompt_len = 8;
    int stride = 16;
    int dump_trees = 0;
  } bench;

  struct Profile {
    int roots = 2000;
    int max_depth = 8;
    std::vector<int> k_values{1, 2, 4};
    int prompt_len = 8;
  } profile;

  struct Trace {
    int prompts = 32;
    int trajectory_len = 64;
    int stride = 16;
    int s = 4;
    int prompt_len = 8;
    double holdout_fraction = 0.2;
    std::vector<int> feature_widths{8, 8, 8};
    std::string method = "specinfer";
    std::string out = "traces.jsonl";
  } trace;

  struct Train {
    double lr = 1e-3;
    int batch_size = 256;
    int epochs = 20;
    double dropout = 0.1;
    double lambda = 1.0;
    double alpha_frac = 0.2;
    int proj_dim = 128;
    std::vector<int> hidden{512, 32};
    std::string dataset;  // default: <out_dir>/traces.jsonl
    std::string out = "policy.json";
  } train;

  struct Eval {
    std::string split = "heldout";  // heldout | train | all
    std::string dataset;
    std::string checkpoint;  // default: <out_dir>/policy.json
    std::string out = "eval_report.json";
  } eval;

  // Action grid as triples, in lexicographic order.
  std::vector<ActionTriple> action_grid() const;
  std::vector<OtlpMethod> otlp_methods() const;  // methods minus "bv"
  bool has_bv() const;

  // FNV-1a hash of the canonical serialized form, as 16 hex chars.
  std::string hash() const;
  std::string to_json_string() const;
};

// Loads the file (when non-empty), then applies dotted-path overrides such
// as "sampling.temperatures=[0.2,1.0]". Values are parsed as JSON, falling
// back to string. Throws ConfigError on unknown keys, malformed values,
// missing referenced paths, empty grids, or a missing seed.
ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides);

// The toy target model described by the config (corpus Markov or synthetic
// random table) wrapped in the configured SyntheticPair.
struct ConfiguredWorld {
  std::shared_ptr<const NextTokenProvider> target;
  std::shared_ptr<const SyntheticPair> source;
  int vocab_size = 0;
};
ConfiguredWorld build_world(const ExperimentConfig& config);

// Autoregressive prompt rolls from the target model, one derived stream per
// prompt.
std::vector<std::vector<Token>> roll_prompts(const NextTokenProvider& target, int count,
                                             int prompt_len, uint64_t seed);

// Seeded random next-token table: one distribution per preceding token plus
// a root distribution; concentration > 1 sharpens, < 1 flattens.
std::shared_ptr<const NextTokenProvider> make_random_table_provider(int vocab_size, uint64_t seed,
                                                                    double concentration);

}  // namespace speclab
