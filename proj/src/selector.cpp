// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

#include "speclab/selector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "speclab/parallel.hpp"

namespace speclab {

namespace {

std::vector<double> block_or_zeros(const NextTokenProvider& provider, TokenSpan ctx, int width) {
  auto fb = provider.feature_block(ctx);
  if (!fb) return std::vector<double>(static_cast<size_t>(width), 0.0);
  if (static_cast<int>(fb->size()) != width) {
    throw std::invalid_argument("feature block width mismatch");
  }
  return *std::move(fb);
}

double capped_kl(const Categorical& p, const Categorical& q) {
  return std::min(kl(p, q), kKlFeatureCap);
}

}  // namespace

FeatureVector build_features(const RootedPair& raw_pair, TokenSpan root_context,
                             double temperature, double top_p, const LatencyModel& latency,
                             const std::array<int, 3>& block_widths) {
  // The "previous token" context; an empty root degenerates to the root
  // itself so every feature stays defined.
  TokenSpan prev = root_context.empty() ? root_context : root_context.first(root_context.size() - 1);

  const Categorical p_prev =
      apply_sampling_params(raw_pair.target->next_dist(prev), temperature, top_p);
  const Categorical q_prev =
      apply_sampling_params(raw_pair.draft->next_dist(prev), temperature, top_p);
  const Categorical q_root =
      apply_sampling_params(raw_pair.draft->next_dist(root_context), temperature, top_p);

  FeatureVector f;
  f.h_p_prev = block_or_zeros(*raw_pair.target, prev, block_widths[0]);
  f.h_q_prev = block_or_zeros(*raw_pair.draft, prev, block_widths[1]);
  f.h_q_cur = block_or_zeros(*raw_pair.draft, root_context, block_widths[2]);
  const double len = static_cast<double>(root_context.size());
  f.scalars = {entropy(p_prev),
               entropy(q_prev),
               entropy(q_root),
               capped_kl(p_prev, q_prev),
               capped_kl(q_prev, p_prev),
               l1(p_prev, q_prev),
               len,
               temperature,
               top_p,
               latency.t_q(len),
               latency.t_p(len)};
  return f;
}

double offline_tps(std::span<const double> pi, std::span<const double> e_block,
                   std::span<const double> t_hat) {
  if (pi.size() != e_block.size() || pi.size() != t_hat.size()) {
    throw std::invalid_argument("policy/action table size mismatch");
  }
  double e = 0.0;
  double t = 0.0;
  for (size_t a = 0; a < pi.size(); ++a) {
    e += pi[a] * e_block[a];
    t += pi[a] * t_hat[a];
  }
  if (t <= 0.0) throw std::invalid_argument("non-positive expected wall time");
  return e / t;
}

namespace {

void validate_record(const TraceRecord& r, size_t n_actions) {
  if (r.e_block.size() != n_actions || r.t_hat.size() != n_actions) {
    throw IncompleteActionTableError("record " + std::to_string(r.root_id) +
                                     " is missing per-action entries");
  }
  for (size_t a = 0; a < n_actions; ++a) {
    if (!(r.e_block[a] >= 1.0) || !(r.t_hat[a] > 0.0)) {
      throw IncompleteActionTableError("record " + std::to_string(r.root_id) +
                                       " has an invalid action entry");
    }
  }
  if (r.base_action < 0 || r.base_action >= static_cast<int>(n_actions)) {
    throw IncompleteActionTableError("record " + std::to_string(r.root_id) +
                                     " has no baseline action");
  }
}

struct RecordEval {
  double tps = 0.0;
  double base_tps = 0.0;
  double ratio = 0.0;
  double penalty = 0.0;  // max(1 - ratio, 0)^2
  std::vector<double> pi;
};

RecordEval eval_record(const PolicyNet& net, const Standardizer& stats, const TraceRecord& r,
                       bool train, RngStream* rng, PolicyNet::Cache* cache) {
  RecordEval ev;
  const std::vector<double> s = stats.apply(r.features.scalars);
  const std::vector<double> z =
      net.forward(r.features.h_p_prev, r.features.h_q_prev, r.features.h_q_cur, s, train, rng,
                  cache);
  ev.pi = softmax(z);
  ev.tps = offline_tps(ev.pi, r.e_block, r.t_hat);
  ev.base_tps = r.e_block[static_cast<size_t>(r.base_action)] /
                r.t_hat[static_cast<size_t>(r.base_action)];
  ev.ratio = ev.tps / ev.base_tps;
  const double gap = std::max(1.0 - ev.ratio, 0.0);
  ev.penalty = gap * gap;
  return ev;
}

size_t penalty_head_count(size_t batch_size, double alpha_frac) {
  const double want = std::ceil(alpha_frac * static_cast<double>(batch_size));
  return std::max<size_t>(1, static_cast<size_t>(want));
}

// Indices of the largest alpha_frac fraction of penalty terms.
std::vector<size_t> top_penalty_indices(const std::vector<double>& penalties, double alpha_frac) {
  std::vector<size_t> idx(penalties.size());
  std::iota(idx.begin(), idx.end(), 0);
  const size_t head = penalty_head_count(penalties.size(), alpha_frac);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<ptrdiff_t>(head), idx.end(),
                    [&](size_t a, size_t b) {
                      if (penalties[a] != penalties[b]) return penalties[a] > penalties[b];
                      return a < b;
                    });
  idx.resize(head);
  return idx;
}

}  // namespace

double training_loss(const PolicyNet& net, const Standardizer& scalar_stats,
                     const std::vector<const TraceRecord*>& batch,
                     const std::vector<ActionTriple>& actions, double lambda, double alpha_frac) {
  if (batch.empty()) throw EmptyDatasetError("empty batch");
  double main_term = 0.0;
  std::vector<double> penalties(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    validate_record(*batch[i], actions.size());
    const RecordEval ev = eval_record(net, scalar_stats, *batch[i], false, nullptr, nullptr);
    main_term += -std::log(ev.ratio);
    penalties[i] = ev.penalty;
  }
  main_term /= static_cast<double>(batch.size());

  double penalty_term = 0.0;
  if (lambda > 0.0) {
    const auto top = top_penalty_indices(penalties, alpha_frac);
    for (size_t i : top) penalty_term += penalties[i];
    penalty_term = lambda * penalty_term / static_cast<double>(top.size());
  }
  return main_term + penalty_term;
}

namespace {

// Fused loss + parameter gradient over one minibatch. Dropout masks are
// drawn from dropout_rng when non-null.
double batch_loss_and_grad(const PolicyNet& net, const Standardizer& stats,
                           const std::vector<const TraceRecord*>& batch, double lambda,
                           double alpha_frac, RngStream* dropout_rng, std::vector<double>& grad) {
  const size_t b = batch.size();
  std::vector<PolicyNet::Cache> caches(b);
  std::vector<RecordEval> evals(b);
  for (size_t i = 0; i < b; ++i) {
    evals[i] =
        eval_record(net, stats, *batch[i], dropout_rng != nullptr, dropout_rng, &caches[i]);
  }

  std::vector<double> penalties(b);
  for (size_t i = 0; i < b; ++i) penalties[i] = evals[i].penalty;
  std::vector<size_t> top;
  if (lambda > 0.0) top = top_penalty_indices(penalties, alpha_frac);

  double loss = 0.0;
  std::vector<double> dtps(b, 0.0);
  for (size_t i = 0; i < b; ++i) {
    loss += -std::log(evals[i].ratio) / static_cast<double>(b);
    dtps[i] += (-1.0 / evals[i].tps) / static_cast<double>(b);
  }
  for (size_t i : top) {
    loss += lambda * penalties[i] / static_cast<double>(top.size());
    const double gap = std::max(1.0 - evals[i].ratio, 0.0);
    dtps[i] += lambda * (-2.0 * gap / evals[i].base_tps) / static_cast<double>(top.size());
  }

  for (size_t i = 0; i < b; ++i) {
    const TraceRecord& r = *batch[i];
    const std::vector<double>& pi = evals[i].pi;
    const size_t n = pi.size();
    // dTPS/dpi_a = (E_a - TPS * T_a) / (sum_a pi_a T_a)
    double t_mix = 0.0;
    for (size_t a = 0; a < n; ++a) t_mix += pi[a] * r.t_hat[a];
    std::vector<double> dpi(n);
    for (size_t a = 0; a < n; ++a) {
      dpi[a] = dtps[i] * (r.e_block[a] - evals[i].tps * r.t_hat[a]) / t_mix;
    }
    double inner = 0.0;
    for (size_t a = 0; a < n; ++a) inner += pi[a] * dpi[a];
    std::vector<double> dlogits(n);
    for (size_t a = 0; a < n; ++a) dlogits[a] = pi[a] * (dpi[a] - inner);
    net.backward(caches[i], dlogits, grad);
  }
  return loss;
}

}  // namespace

double training_loss_with_grad(const PolicyNet& net, const Standardizer& scalar_stats,
                               const std::vector<const TraceRecord*>& batch,
                               const std::vector<ActionTriple>& actions, double lambda,
                               double alpha_frac, std::vector<double>& grad) {
  if (batch.empty()) throw EmptyDatasetError("empty batch");
  for (const TraceRecord* r : batch) validate_record(*r, actions.size());
  return batch_loss_and_grad(net, scalar_stats, batch, lambda, alpha_frac, nullptr, grad);
}

namespace {

double heldout_mean_logratio(const PolicyNet& net, const Standardizer& stats,
                             const std::vector<const TraceRecord*>& records) {
  double sum = 0.0;
  for (const TraceRecord* r : records) {
    const RecordEval ev = eval_record(net, stats, *r, false, nullptr, nullptr);
    sum += std::log(ev.ratio);
  }
  return sum / static_cast<double>(records.size());
}

}  // namespace

TrainResult train(const TraceDataset& dataset, const TrainConfig& config) {
  if (dataset.records.empty()) throw EmptyDatasetError("dataset has no records");
  for (const TraceRecord& r : dataset.records) validate_record(r, dataset.actions.size());

  std::vector<const TraceRecord*> train_split;
  std::vector<const TraceRecord*> heldout_split;
  for (const TraceRecord& r : dataset.records) {
    (r.heldout ? heldout_split : train_split).push_back(&r);
  }
  if (train_split.empty()) throw EmptyDatasetError("train split is empty");
  if (heldout_split.empty()) throw EmptyDatasetError("held-out split is empty");

  std::vector<std::vector<double>> scalar_rows;
  scalar_rows.reserve(train_split.size());
  for (const TraceRecord* r : train_split) scalar_rows.push_back(r->features.scalars);
  Standardizer stats = Standardizer::fit(scalar_rows);

  PolicyNet::Shape shape;
  shape.block_widths = dataset.feature_widths;
  shape.scalar_dim = kScalarFeatureDim;
  shape.proj_dim = config.proj_dim;
  shape.hidden = config.hidden;
  shape.n_actions = static_cast<int>(dataset.actions.size());
  shape.dropout = config.dropout;

  PolicyNet net(shape, derive_seed(config.seed, 0));
  TrainResult result{PolicyBundle{net, stats, dataset.actions}, {}, {}, -1};

  AdamOptimizer opt;
  opt.lr = config.lr;
  RngStream shuffle_rng(derive_seed(config.seed, 1));
  RngStream dropout_rng(derive_seed(config.seed, 2));

  std::vector<size_t> order(train_split.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad(net.params().size(), 0.0);

  double best_metric = 0.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
    }
    double epoch_loss = 0.0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
      const size_t stop = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      std::vector<const TraceRecord*> batch;
      batch.reserve(stop - start);
      for (size_t i = start; i < stop; ++i) batch.push_back(train_split[order[i]]);
      std::fill(grad.begin(), grad.end(), 0.0);
      epoch_loss += batch_loss_and_grad(net, stats, batch, config.lambda, config.alpha_frac,
                                        &dropout_rng, grad);
      opt.step(net.params(), grad);
      ++batches;
    }
    result.epoch_train_loss.push_back(epoch_loss / std::max(batches, 1));

    const double metric = heldout_mean_logratio(net, stats, heldout_split);
    result.epoch_heldout_logratio.push_back(metric);
    if (result.best_epoch < 0 || metric > best_metric) {
      best_metric = metric;
      result.best_epoch = epoch;
      result.bundle.net = net;
    }
  }
  result.bundle.scalar_stats = stats;
  result.bundle.actions = dataset.actions;
  return result;
}

ActionTriple select_action(const PolicyBundle& bundle, const FeatureVector& features) {
  const std::vector<double> s = bundle.scalar_stats.apply(features.scalars);
  const std::vector<double> z =
      bundle.net.logits(features.h_p_prev, features.h_q_prev, features.h_q_cur, s);
  const std::vector<double> pi = softmax(z);
  size_t best = 0;
  for (size_t a = 1; a < pi.size(); ++a) {
    if (pi[a] > pi[best] ||
        (pi[a] == pi[best] && bundle.actions[a] < bundle.actions[best])) {
      best = a;
    }
  }
  return bundle.actions[best];
}

// ---------------------------------------------------------------------------
// Trace generation
// ---------------------------------------------------------------------------

namespace {

bool is_heldout_root(uint64_t seed, int64_t root_id, double holdout_fraction) {
  const uint64_t u = derive_seed(seed, 0x48454c44u, static_cast<uint64_t>(root_id));
  return static_cast<double>(u >> 11) * 0x1.0p-53 < holdout_fraction;
}

}  // namespace

TraceDataset generate_traces_serial(const PairSource& source,
                                    const std::vector<std::vector<Token>>& prompts,
                                    TraceGenConfig config) {
  config.threads = 1;
  return generate_traces(source, prompts, config);
}

TraceDataset generate_traces(const PairSource& source,
                             const std::vector<std::vector<Token>>& prompts,
                             const TraceGenConfig& config) {
  if (config.stride < 1) throw std::invalid_argument("stride must be >= 1");
  if (config.actions.empty()) throw std::invalid_argument("empty action subset");
  if (prompts.empty()) throw EmptyDatasetError("no prompts");

  TraceDataset ds;
  ds.actions = config.actions;
  ds.feature_widths = config.feature_widths;
  ds.method = config.method;
  ds.s = config.s;
  ds.stride = config.stride;
  ds.holdout_fraction = config.holdout_fraction;
  ds.latency = config.latency;
  ds.seed = config.seed;
  ds.config_hash = config.config_hash;

  struct SamplingConfig {
    double temperature;
    double top_p;
  };
  std::vector<SamplingConfig> grid;
  for (double t : config.temperatures) {
    for (double tp : config.top_ps) grid.push_back({t, tp});
  }

  const int n_roots_per_traj = std::max(1, config.trajectory_len / config.stride);
  const int n_tasks = static_cast<int>(prompts.size() * grid.size());
  std::vector<std::vector<TraceRecord>> task_records(static_cast<size_t>(n_tasks));

  // Non-owning alias so the sampled wrapper can hold a shared_ptr.
  const std::shared_ptr<const PairSource> source_alias(std::shared_ptr<const PairSource>(),
                                                       &source);

  parallel_for(n_tasks, config.threads, [&](int task) {
    const size_t prompt_idx = static_cast<size_t>(task) / grid.size();
    const size_t grid_idx = static_cast<size_t>(task) % grid.size();
    const SamplingConfig sc = grid[grid_idx];
    const SampledSource sampled(source_alias, sc.temperature, sc.top_p);

    // Roll one target trajectory.
    RngStream traj_rng(derive_seed(config.seed, 1, static_cast<uint64_t>(task)));
    std::vector<Token> trajectory = prompts[prompt_idx];
    const size_t prompt_len = trajectory.size();
    {
      const RootedPair pair = sampled.at_root(trajectory);
      for (int i = 0; i < config.trajectory_len; ++i) {
        trajectory.push_back(sample(pair.target->next_dist(trajectory), traj_rng));
      }
    }

    auto& records = task_records[static_cast<size_t>(task)];
    for (int j = 0; j < n_roots_per_traj; ++j) {
      const size_t root_len = prompt_len + static_cast<size_t>(j) * static_cast<size_t>(config.stride);
      const std::vector<Token> root(trajectory.begin(),
                                    trajectory.begin() + static_cast<ptrdiff_t>(root_len));
      TraceRecord r;
      r.root_id = static_cast<int64_t>(task) * n_roots_per_traj + j;
      r.context_length = static_cast<int>(root.size());
      r.temperature = sc.temperature;
      r.top_p = sc.top_p;
      const RootedPair raw = source.at_root(root);
      r.features = build_features(raw, root, sc.temperature, sc.top_p, config.latency,
                                  config.feature_widths);
      r.e_block.resize(config.actions.size());
      r.t_hat.resize(config.actions.size());
      for (size_t ai = 0; ai < config.actions.size(); ++ai) {
        const ActionTriple action = config.actions[ai];
        r.e_block[ai] = estimate_block_efficiency(
            sampled, root, action, config.method, config.s,
            derive_seed(config.seed, 2, static_cast<uint64_t>(r.root_id), static_cast<uint64_t>(ai)),
            1);
        r.t_hat[ai] = estimate_forward_time(config.latency,
                                            static_cast<double>(r.context_length), action);
      }
      r.heldout = is_heldout_root(config.seed, r.root_id, config.holdout_fraction);
      records.push_back(std::move(r));
    }
  });

  for (auto& records : task_records) {
    for (auto& r : records) ds.records.push_back(std::move(r));
  }

  // Static baseline per sampling configuration: best mean train-split TPS
  // among the (K, 0, L) actions of the subset.
  std::vector<size_t> static_candidates;
  for (size_t ai = 0; ai < ds.actions.size(); ++ai) {
    if (ds.actions[ai].l1 == 0) static_candidates.push_back(ai);
  }
  if (static_candidates.empty()) {
    throw std::invalid_argument("action subset has no (K, 0, L) baseline candidates");
  }
  for (const auto& sc : grid) {
    std::vector<size_t> members;
    std::vector<size_t> train_members;
    for (size_t i = 0; i < ds.records.size(); ++i) {
      const TraceRecord& r = ds.records[i];
      if (r.temperature == sc.temperature && r.top_p == sc.top_p) {
        members.push_back(i);
        if (!r.heldout) train_members.push_back(i);
      }
    }
    if (members.empty()) continue;
    const auto& fit_on = train_members.empty() ? members : train_members;
    size_t best = static_candidates[0];
    double best_tps = -1.0;
    for (size_t ai : static_candidates) {
      double mean_tps = 0.0;
      for (size_t i : fit_on) mean_tps += ds.records[i].e_block[ai] / ds.records[i].t_hat[ai];
      mean_tps /= static_cast<double>(fit_on.size());
      if (mean_tps > best_tps ||
          (mean_tps == best_tps && ds.actions[ai] < ds.actions[best])) {
        best_tps = mean_tps;
        best = ai;
      }
    }
    for (size_t i : members) ds.records[i].base_action = static_cast<int>(best);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

constexpr int kTraceFormatVersion = 1;
constexpr int kPolicyFormatVersion = 1;

nlohmann::ordered_json action_to_json(const ActionTriple& a) {
  return nlohmann::ordered_json::array({a.k, a.l1, a.l2});
}

ActionTriple action_from_json(const nlohmann::json& j) {
  return ActionTriple{j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>()};
}

}  // namespace

void TraceDataset::save_jsonl(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);

  nlohmann::ordered_json header;
  header["format"] = "speclab-traces";
  header["version"] = kTraceFormatVersion;
  nlohmann::ordered_json actions_json = nlohmann::ordered_json::array();
  for (const ActionTriple& a : actions) actions_json.push_back(action_to_json(a));
  header["actions"] = std::move(actions_json);
  header["feature_widths"] = feature_widths;
  header["scalar_names"] = kScalarFeatureNames;
  header["method"] = method_name(method);
  header["s"] = s;
  header["stride"] = stride;
  header["holdout_fraction"] = holdout_fraction;
  header["latency"] = {{"a_p", latency.a_p}, {"b_p", latency.b_p}, {"a_q", latency.a_q},
                       {"b_q", latency.b_q}};
  header["seed"] = seed;
  header["config_hash"] = config_hash;
  out << header.dump() << "\n";

  for (const TraceRecord& r : records) {
    nlohmann::ordered_json rec;
    rec["root_id"] = r.root_id;
    rec["context_length"] = r.context_length;
    rec["h_p_prev"] = r.features.h_p_prev;
    rec["h_q_prev"] = r.features.h_q_prev;
    rec["h_q_cur"] = r.features.h_q_cur;
    rec["scalars"] = r.features.scalars;
    rec["e_block"] = r.e_block;
    rec["t_hat"] = r.t_hat;
    rec["temperature"] = r.temperature;
    rec["top_p"] = r.top_p;
    rec["base_action"] = r.base_action;
    rec["heldout"] = r.heldout;
    out << rec.dump() << "\n";
  }
}

TraceDataset TraceDataset::load_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty trace dataset: " + path);

  nlohmann::json header = nlohmann::json::parse(line);
  if (header.at("format") != "speclab-traces" || header.at("version") != kTraceFormatVersion) {
    throw std::runtime_error("unsupported trace dataset file");
  }
  TraceDataset ds;
  for (const auto& a : header.at("actions")) ds.actions.push_back(action_from_json(a));
  ds.feature_widths = header.at("feature_widths").get<std::array<int, 3>>();
  ds.method = method_from_name(header.at("method").get<std::string>());
  ds.s = header.at("s").get<int>();
  ds.stride = header.at("stride").get<int>();
  ds.holdout_fraction = header.at("holdout_fraction").get<double>();
  ds.latency.a_p = header.at("latency").at("a_p").get<double>();
  ds.latency.b_p = header.at("latency").at("b_p").get<double>();
  ds.latency.a_q = header.at("latency").at("a_q").get<double>();
  ds.latency.b_q = header.at("latency").at("b_q").get<double>();
  ds.seed = header.at("seed").get<uint64_t>();
  ds.config_hash = header.at("config_hash").get<std::string>();

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json rec = nlohmann::json::parse(line);
    TraceRecord r;
    r.root_id = rec.at("root_id").get<int64_t>();
    r.context_length = rec.at("context_length").get<int>();
    r.features.h_p_prev = rec.at("h_p_prev").get<std::vector<double>>();
    r.features.h_q_prev = rec.at("h_q_prev").get<std::vector<double>>();
    r.features.h_q_cur = rec.at("h_q_cur").get<std::vector<double>>();
    r.features.scalars = rec.at("scalars").get<std::vector<double>>();
    r.e_block = rec.at("e_block").get<std::vector<double>>();
    r.t_hat = rec.at("t_hat").get<std::vector<double>>();
    r.temperature = rec.at("temperature").get<double>();
    r.top_p = rec.at("top_p").get<double>();
    r.base_action = rec.at("base_action").get<int>();
    r.heldout = rec.at("heldout").get<bool>();
    ds.records.push_back(std::move(r));
  }
  return ds;
}

void PolicyBundle::save(const std::string& path, const std::string& config_hash,
                        uint64_t seed) const {
  nlohmann::ordered_json doc;
  doc["format"] = "speclab-policy";
  doc["version"] = kPolicyFormatVersion;
  doc["config_hash"] = config_hash;
  doc["seed"] = seed;
  const PolicyNet::Shape& sh = net.shape();
  doc["shape"] = {{"block_widths", sh.block_widths}, {"scalar_dim", sh.scalar_dim},
                  {"proj_dim", sh.proj_dim},         {"hidden", sh.hidden},
                  {"n_actions", sh.n_actions},       {"dropout", sh.dropout}};
  nlohmann::ordered_json actions_json = nlohmann::ordered_json::array();
  for (const ActionTriple& a : actions) actions_json.push_back(action_to_json(a));
  doc["actions"] = std::move(actions_json);
  doc["scalar_names"] = kScalarFeatureNames;
  doc["standardizer"] = {{"mean", scalar_stats.mean}, {"stddev", scalar_stats.stddev}};
  nlohmann::ordered_json segs = nlohmann::ordered_json::array();
  for (const auto& s : net.segments()) {
    segs.push_back({{"name", s.name}, {"rows", s.rows}, {"cols", s.cols}});
  }
  doc["segments"] = std::move(segs);
  doc["params"] = net.params();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << doc.dump();
}

PolicyBundle PolicyBundle::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  nlohmann::json doc = nlohmann::json::parse(buf.str());
  if (doc.at("format") != "speclab-policy" || doc.at("version") != kPolicyFormatVersion) {
    throw std::runtime_error("unsupported policy checkpoint file");
  }

  PolicyNet::Shape sh;
  sh.block_widths = doc.at("shape").at("block_widths").get<std::array<int, 3>>();
  sh.scalar_dim = doc.at("shape").at("scalar_dim").get<int>();
  sh.proj_dim = doc.at("shape").at("proj_dim").get<int>();
  sh.hidden = doc.at("shape").at("hidden").get<std::array<int, 2>>();
  sh.n_actions = doc.at("shape").at("n_actions").get<int>();
  sh.dropout = doc.at("shape").at("dropout").get<double>();

  PolicyNet net(sh, 0);
  std::vector<double> params = doc.at("params").get<std::vector<double>>();
  if (params.size() != net.params().size()) {
    throw std::runtime_error("checkpoint parameter count mismatch");
  }
  net.params() = std::move(params);

  Standardizer stats;
  stats.mean = doc.at("standardizer").at("mean").get<std::vector<double>>();
  stats.stddev = doc.at("standardizer").at("stddev").get<std::vector<double>>();

  std::vector<ActionTriple> acts;
  for (const auto& a : doc.at("actions")) acts.push_back(action_from_json(a));
  return PolicyBundle{std::move(net), std::move(stats), std::move(acts)};
}

}  // namespace speclab
