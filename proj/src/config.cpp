// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

#include "speclab/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace speclab {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json config_to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["seed"] = c.seed_set ? ordered_json(c.seed) : ordered_json(nullptr);
  j["out_dir"] = c.out_dir;
  j["threads"] = c.threads;
  j["corpus"] = {{"path", c.corpus.path}, {"tokenizer", c.corpus.tokenizer}};
  j["synthetic"] = {{"vocab_size", c.synthetic.vocab_size},
                    {"concentration", c.synthetic.concentration}};
  j["markov"] = {{"order", c.markov.order}, {"smoothing_alpha", c.markov.smoothing_alpha}};
  j["pair"] = {{"divergence_knob", c.pair.divergence_knob}, {"depth_drift", c.pair.depth_drift}};
  j["sampling"] = {{"temperatures", c.sampling.temperatures}, {"top_ps", c.sampling.top_ps}};
  j["methods"] = c.methods;
  j["actions"] = {{"k", c.actions.k}, {"l1", c.actions.l1}, {"l2", c.actions.l2}};
  j["latency"] = {{"a_p", c.latency.a_p}, {"b_p", c.latency.b_p}, {"a_q", c.latency.a_q},
                  {"b_q", c.latency.b_q}};
  j["lossless"] = {{"pairs", c.lossless.pairs},
                   {"vocab", c.lossless.vocab},
                   {"mc_samples", c.lossless.mc_samples},
                   {"mc_tv", c.lossless.mc_tv},
                   {"mc_vocab", c.lossless.mc_vocab}};
  j["bench"] = {{"roots", c.bench.roots},
                {"s", c.bench.s},
                {"prompt_len", c.bench.prompt_len},
                {"stride", c.bench.stride},
                {"dump_trees", c.bench.dump_trees}};
  j["profile"] = {{"roots", c.profile.roots},
                  {"max_depth", c.profile.max_depth},
                  {"k_values", c.profile.k_values},
                  {"prompt_len", c.profile.prompt_len}};
  j["trace"] = {{"prompts", c.trace.prompts},
                {"trajectory_len", c.trace.trajectory_len},
                {"stride", c.trace.stride},
                {"s", c.trace.s},
                {"prompt_len", c.trace.prompt_len},
                {"holdout_fraction", c.trace.holdout_fraction},
                {"feature_widths", c.trace.feature_widths},
                {"method", c.trace.method},
                {"out", c.trace.out}};
  j["train"] = {{"lr", c.train.lr},
                {"batch_size", c.train.batch_size},
                {"epochs", c.train.epochs},
                {"dropout", c.train.dropout},
                {"lambda", c.train.lambda},
                {"alpha_frac", c.train.alpha_frac},
                {"proj_dim", c.train.proj_dim},
                {"hidden", c.train.hidden},
                {"dataset", c.train.dataset},
                {"out", c.train.out}};
  j["eval"] = {{"split", c.eval.split},
               {"dataset", c.eval.dataset},
               {"checkpoint", c.eval.checkpoint},
               {"out", c.eval.out}};
  return j;
}

ExperimentConfig config_from_json(const ordered_json& j) {
  ExperimentConfig c;
  if (!j.at("seed").is_null()) {
    c.seed = j.at("seed").get<uint64_t>();
    c.seed_set = true;
  }
  c.out_dir = j.at("out_dir").get<std::string>();
  c.threads = j.at("threads").get<int>();
  c.corpus.path = j.at("corpus").at("path").get<std::string>();
  c.corpus.tokenizer = j.at("corpus").at("tokenizer").get<std::string>();
  c.synthetic.vocab_size = j.at("synthetic").at("vocab_size").get<int>();
  c.synthetic.concentration = j.at("synthetic").at("concentration").get<double>();
  c.markov.order = j.at("markov").at("order").get<int>();
  c.markov.smoothing_alpha = j.at("markov").at("smoothing_alpha").get<double>();
  c.pair.divergence_knob = j.at("pair").at("divergence_knob").get<double>();
  c.pair.depth_drift = j.at("pair").at("depth_drift").get<double>();
  c.sampling.temperatures = j.at("sampling").at("temperatures").get<std::vector<double>>();
  c.sampling.top_ps = j.at("sampling").at("top_ps").get<std::vector<double>>();
  c.methods = j.at("methods").get<std::vector<std::string>>();
  c.actions.k = j.at("actions").at("k").get<std::vector<int>>();
  c.actions.l1 = j.at("actions").at("l1").get<std::vector<int>>();
  c.actions.l2 = j.at("actions").at("l2").get<std::vector<int>>();
  c.latency.a_p = j.at("latency").at("a_p").get<double>();
  c.latency.b_p = j.at("latency").at("b_p").get<double>();
  c.latency.a_q = j.at("latency").at("a_q").get<double>();
  c.latency.b_q = j.at("latency").at("b_q").get<double>();
  c.lossless.pairs = j.at("lossless").at("pairs").get<int>();
  c.lossless.vocab = j.at("lossless").at("vocab").get<int>();
  c.lossless.mc_samples = j.at("lossless").at("mc_samples").get<int>();
  c.lossless.mc_tv = j.at("lossless").at("mc_tv").get<double>();
  c.lossless.mc_vocab = j.at("lossless").at("mc_vocab").get<int>();
  c.bench.roots = j.at("bench").at("roots").get<int>();
  c.bench.s = j.at("bench").at("s").get<int>();
  c.bench.prompt_len = j.at("bench").at("prompt_len").get<int>();
  c.bench.stride = j.at("bench").at("stride").get<int>();
  c.bench.dump_trees = j.at("bench").at("dump_trees").get<int>();
  c.profile.roots = j.at("profile").at("roots").get<int>();
  c.profile.max_depth = j.at("profile").at("max_depth").get<int>();
  c.profile.k_values = j.at("profile").at("k_values").get<std::vector<int>>();
  c.profile.prompt_len = j.at("profile").at("prompt_len").get<int>();
  c.trace.prompts = j.at("trace").at("prompts").get<int>();
  c.trace.trajectory_len = j.at("trace").at("trajectory_len").get<int>();
  c.trace.stride = j.at("trace").at("stride").get<int>();
  c.trace.s = j.at("trace").at("s").get<int>();
  c.trace.prompt_len = j.at("trace").at("prompt_len").get<int>();
  c.trace.holdout_fraction = j.at("trace").at("holdout_fraction").get<double>();
  c.trace.feature_widths = j.at("trace").at("feature_widths").get<std::vector<int>>();
  c.trace.method = j.at("trace").at("method").get<std::string>();
  c.trace.out = j.at("trace").at("out").get<std::string>();
  c.train.lr = j.at("train").at("lr").get<double>();
  c.train.batch_size = j.at("train").at("batch_size").get<int>();
  c.train.epochs = j.at("train").at("epochs").get<int>();
  c.train.dropout = j.at("train").at("dropout").get<double>();
  c.train.lambda = j.at("train").at("lambda").get<double>();
  c.train.alpha_frac = j.at("train").at("alpha_frac").get<double>();
  c.train.proj_dim = j.at("train").at("proj_dim").get<int>();
  c.train.hidden = j.at("train").at("hidden").get<std::vector<int>>();
  c.train.dataset = j.at("train").at("dataset").get<std::string>();
  c.train.out = j.at("train").at("out").get<std::string>();
  c.eval.split = j.at("eval").at("split").get<std::string>();
  c.eval.dataset = j.at("eval").at("dataset").get<std::string>();
  c.eval.checkpoint = j.at("eval").at("checkpoint").get<std::string>();
  c.eval.out = j.at("eval").at("out").get<std::string>();
  return c;
}

// Recursively folds user keys into the defaults, rejecting unknown paths so
// typos fail loudly instead of silently using defaults.
void merge_into(ordered_json& base, const json& user, const std::string& prefix) {
  if (!user.is_object()) throw ConfigError("config section is not an object: " + prefix);
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key: " + path);
    if (base.at(key).is_object() && value.is_object()) {
      merge_into(base.at(key), value, path);
    } else {
      base.at(key) = value;
    }
  }
}

void apply_override(ordered_json& base, const std::string& spec) {
  const size_t eq = spec.find('=');
  if (eq == std::string::npos) throw ConfigError("override must look like key=value: " + spec);
  const std::string path = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);

  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;  // bare strings need no quotes
  }

  ordered_json* node = &base;
  std::string remaining = path;
  std::string walked;
  for (;;) {
    const size_t dot = remaining.find('.');
    const std::string key = remaining.substr(0, dot);
    walked = walked.empty() ? key : walked + "." + key;
    if (!node->contains(key)) throw ConfigError("unknown config key: " + walked);
    if (dot == std::string::npos) {
      node->at(key) = value;
      return;
    }
    node = &node->at(key);
    remaining = remaining.substr(dot + 1);
  }
}

void validate(const ExperimentConfig& c) {
  if (!c.seed_set) throw ConfigError("seed is required (config key \"seed\" or --seed)");
  if (!c.corpus.path.empty() && !std::filesystem::exists(c.corpus.path)) {
    throw ConfigError("corpus path does not exist: " + c.corpus.path);
  }
  if (c.corpus.tokenizer != "byte" && c.corpus.tokenizer != "word") {
    throw ConfigError("corpus.tokenizer must be byte or word");
  }
  if (c.sampling.temperatures.empty() || c.sampling.top_ps.empty()) {
    throw ConfigError("sampling grid must be non-empty");
  }
  if (c.methods.empty()) throw ConfigError("methods must be non-empty");
  for (const std::string& m : c.methods) {
    if (m == "bv") continue;
    try {
      method_from_name(m);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (c.actions.k.empty() || c.actions.l1.empty() || c.actions.l2.empty()) {
    throw ConfigError("action grid must be non-empty");
  }
  for (int k : c.actions.k) {
    if (k < 1) throw ConfigError("actions.k entries must be >= 1");
  }
  if (c.eval.split != "heldout" && c.eval.split != "train" && c.eval.split != "all") {
    throw ConfigError("eval.split must be heldout, train, or all");
  }
  try {
    method_from_name(c.trace.method);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

std::vector<ActionTriple> ExperimentConfig::action_grid() const {
  std::vector<ActionTriple> grid;
  for (int k : actions.k) {
    for (int l1 : actions.l1) {
      for (int l2 : actions.l2) grid.push_back({k, l1, l2});
    }
  }
  return grid;
}

std::vector<OtlpMethod> ExperimentConfig::otlp_methods() const {
  std::vector<OtlpMethod> out;
  for (const std::string& m : methods) {
    if (m != "bv") out.push_back(method_from_name(m));
  }
  return out;
}

bool ExperimentConfig::has_bv() const {
  for (const std::string& m : methods) {
    if (m == "bv") return true;
  }
  return false;
}

std::string ExperimentConfig::to_json_string() const { return config_to_json(*this).dump(2); }

std::string ExperimentConfig::hash() const {
  // Runtime-only knobs do not change results, so they stay out of the
  // experiment identity: reruns with a different thread count or output
  // directory must produce byte-identical files.
  ordered_json j = config_to_json(*this);
  j.erase("threads");
  j.erase("out_dir");
  const std::string text = j.dump();
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides) {
  ordered_json merged = config_to_json(ExperimentConfig{});
  if (!path.empty()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json user;
    try {
      user = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config parse error: ") + e.what());
    }
    merge_into(merged, user, "");
  }
  for (const std::string& o : overrides) apply_override(merged, o);

  ExperimentConfig config;
  try {
    config = config_from_json(merged);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config type error: ") + e.what());
  }
  validate(config);
  return config;
}

namespace {

class RandomTableProvider : public NextTokenProvider {
 public:
  RandomTableProvider(int vocab, uint64_t seed, double concentration) : vocab_(vocab) {
    RngStream rng(seed);
    auto draw = [&]() {
      std::vector<double> w(static_cast<size_t>(vocab_));
      // Exponential draws give a flat Dirichlet; concentration reshapes it
      // through the temperature transform.
      for (double& v : w) v = -std::log(1.0 - rng.uniform());
      Categorical flat = Categorical::normalized(std::move(w));
      return apply_sampling_params(flat, 1.0 / concentration, 1.0);
    };
    root_ = std::make_unique<Categorical>(draw());
    rows_.reserve(static_cast<size_t>(vocab_));
    for (int t = 0; t < vocab_; ++t) rows_.push_back(draw());
  }

  Categorical next_dist(TokenSpan context) const override {
    if (context.empty()) return *root_;
    return rows_[static_cast<size_t>(context.back())];
  }

  int vocab_size() const override { return vocab_; }

 private:
  int vocab_;
  std::unique_ptr<Categorical> root_;
  std::vector<Categorical> rows_;
};

}  // namespace

std::shared_ptr<const NextTokenProvider> make_random_table_provider(int vocab_size, uint64_t seed,
                                                                    double concentration) {
  if (vocab_size < 2) throw std::invalid_argument("vocab_size must be >= 2");
  if (concentration <= 0.0) throw std::invalid_argument("concentration must be positive");
  return std::make_shared<RandomTableProvider>(vocab_size, seed, concentration);
}

ConfiguredWorld build_world(const ExperimentConfig& config) {
  ConfiguredWorld world;
  if (!config.corpus.path.empty()) {
    std::ifstream in(config.corpus.path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    const TokenizerMode mode =
        config.corpus.tokenizer == "byte" ? TokenizerMode::kByte : TokenizerMode::kWhitespaceWord;
    const TokenizedCorpus corpus = tokenize(buf.str(), mode);
    world.target = std::make_shared<MarkovModel>(train_markov(
        corpus.tokens, config.markov.order, config.markov.smoothing_alpha, corpus.vocab_size));
  } else {
    world.target = make_random_table_provider(config.synthetic.vocab_size,
                                              derive_seed(config.seed, 0x746f79u),
                                              config.synthetic.concentration);
  }
  world.vocab_size = world.target->vocab_size();
  world.source = std::make_shared<SyntheticPair>(world.target, config.pair.divergence_knob,
                                                 config.pair.depth_drift);
  return world;
}

std::vector<std::vector<Token>> roll_prompts(const NextTokenProvider& target, int count,
                                             int prompt_len, uint64_t seed) {
  std::vector<std::vector<Token>> prompts;
  prompts.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    RngStream rng(derive_seed(seed, 0x70726f6du, static_cast<uint64_t>(i)));
    std::vector<Token> ctx;
    for (int j = 0; j < prompt_len; ++j) {
      ctx.push_back(sample(target.next_dist(ctx), rng));
    }
    prompts.push_back(std::move(ctx));
  }
  return prompts;
}

}  // namespace speclab
