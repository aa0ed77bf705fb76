// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "speclab/analytics.hpp"
#include "speclab/latency.hpp"
#include "speclab/mlp.hpp"

namespace speclab {

struct EmptyDatasetError : std::runtime_error {
  explicit EmptyDatasetError(const std::string& what) : std::runtime_error(what) {}
};
struct IncompleteActionTableError : std::runtime_error {
  explicit IncompleteActionTableError(const std::string& what) : std::runtime_error(what) {}
};

// Scalar feature order is fixed and versioned; standardization statistics are
// persisted with the policy checkpoint.
inline constexpr std::array<const char*, 11> kScalarFeatureNames = {
    "entropy_p_prev", "entropy_q_prev", "entropy_q_root", "kl_pq_prev",
    "kl_qp_prev",     "l1_prev",        "context_length", "temperature",
    "top_p",          "draft_latency",  "target_latency"};

constexpr int kScalarFeatureDim = static_cast<int>(kScalarFeatureNames.size());

// Divergence features are capped so nucleus-truncated supports cannot inject
// infinities into standardization.
constexpr double kKlFeatureCap = 30.0;

struct FeatureVector {
  std::vector<double> h_p_prev;
  std::vector<double> h_q_prev;
  std::vector<double> h_q_cur;
  std::vector<double> scalars;
};

// Root-level features available before drafting: hidden blocks (zero-filled
// when the provider exposes none), uncertainty scalars at the previous token
// and root, sampling parameters, and per-pass latency estimates.
FeatureVector build_features(const RootedPair& raw_pair, TokenSpan root_context,
                             double temperature, double top_p, const LatencyModel& latency,
                             const std::array<int, 3>& block_widths);

struct TraceRecord {
  int64_t root_id = 0;
  int context_length = 0;
  FeatureVector features;
  std::vector<double> e_block;  // per-action block-efficiency estimate, >= 1
  std::vector<double> t_hat;    // per-action wall-time estimate, > 0 seconds
  double temperature = 1.0;
  double top_p = 1.0;
  int base_action = -1;  // index into TraceDataset::actions
  bool heldout = false;
};

struct TraceDataset {
  std::vector<ActionTriple> actions;
  std::array<int, 3> feature_widths{};
  OtlpMethod method = OtlpMethod::kSpecInfer;
  int s = 4;
  int stride = 16;
  double holdout_fraction = 0.2;
  LatencyModel latency;
  uint64_t seed = 0;
  std::string config_hash;
  std::vector<TraceRecord> records;

  void save_jsonl(const std::string& path) const;
  static TraceDataset load_jsonl(const std::string& path);
};

// Offline throughput of a soft policy on one record:
// (sum_a pi(a) E[tau+1 | a]) / (sum_a pi(a) T_hat(a)).
double offline_tps(std::span<const double> pi, std::span<const double> e_block,
                   std::span<const double> t_hat);

// Policy weights plus everything needed to reproduce its decisions.
struct PolicyBundle {
  PolicyNet net;
  Standardizer scalar_stats;
  std::vector<ActionTriple> actions;

  void save(const std::string& path, const std::string& config_hash = "",
            uint64_t seed = 0) const;
  static PolicyBundle load(const std::string& path);
};

// Mean of -log(TPS_pi / TPS_base) over the batch, plus lambda times the mean
// of the top alpha_frac fraction of squared baseline-regression penalties.
// Dropout is disabled; this is the evaluation form of the objective.
double training_loss(const PolicyNet& net, const Standardizer& scalar_stats,
                     const std::vector<const TraceRecord*>& batch,
                     const std::vector<ActionTriple>& actions, double lambda, double alpha_frac);

// Same objective with the parameter gradient accumulated into grad (sized
// like net.params(), zeroed by the caller). Dropout is off, so the value is
// deterministic and finite-difference checkable.
double training_loss_with_grad(const PolicyNet& net, const Standardizer& scalar_stats,
                               const std::vector<const TraceRecord*>& batch,
                               const std::vector<ActionTriple>& actions, double lambda,
                               double alpha_frac, std::vector<double>& grad);

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 256;
  int epochs = 20;
  double dropout = 0.1;
  double lambda = 1.0;
  double alpha_frac = 0.2;
  int proj_dim = 128;
  std::array<int, 2> hidden{512, 32};
  uint64_t seed = 0;
};

struct TrainResult {
  PolicyBundle bundle;
  std::vector<double> epoch_train_loss;
  std::vector<double> epoch_heldout_logratio;
  int best_epoch = -1;  // -1 when epochs == 0
};

// Adam on minibatches of the train split; keeps the epoch checkpoint with the
// best held-out mean log(TPS_pi / TPS_base). Deterministic for a fixed seed.
TrainResult train(const TraceDataset& dataset, const TrainConfig& config);

// Highest-probability supported action; ties break lexicographically by
// (K, L1, L2). Inference path, dropout off.
ActionTriple select_action(const PolicyBundle& bundle, const FeatureVector& features);

struct TraceGenConfig {
  std::vector<ActionTriple> actions;
  int stride = 16;
  int s = 4;
  int trajectory_len = 64;
  std::vector<double> temperatures{1.0};
  std::vector<double> top_ps{1.0};
  double holdout_fraction = 0.2;
  std::array<int, 3> feature_widths{8, 8, 8};
  LatencyModel latency;
  OtlpMethod method = OtlpMethod::kSpecInfer;
  uint64_t seed = 0;
  int threads = 1;
  std::string config_hash;
};

// Rolls target trajectories from each prompt under every sampling
// configuration, takes a root every `stride` tokens, and fills per-action
// block-efficiency and wall-time estimates. The static baseline action per
// sampling configuration is the (K, 0, L) subset action with the best mean
// offline TPS on the train split.
TraceDataset generate_traces(const PairSource& source,
                             const std::vector<std::vector<Token>>& prompts,
                             const TraceGenConfig& config);
TraceDataset generate_traces_serial(const PairSource& source,
                                    const std::vector<std::vector<Token>>& prompts,
                                    TraceGenConfig config);

}  // namespace speclab
