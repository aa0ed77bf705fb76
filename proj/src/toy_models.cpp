// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

#include "speclab/toy_models.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace speclab {

TokenizedCorpus tokenize(const std::string& text, TokenizerMode mode) {
  TokenizedCorpus out;
  if (mode == TokenizerMode::kByte) {
    std::set<unsigned char> alphabet(text.begin(), text.end());
    std::unordered_map<unsigned char, Token> id;
    Token next = 0;
    for (unsigned char c : alphabet) id[c] = next++;
    out.tokens.reserve(text.size());
    for (unsigned char c : text) out.tokens.push_back(id[c]);
    out.vocab_size = next;
    return out;
  }

  std::vector<std::string> words;
  std::istringstream in(text);
  std::string w;
  while (in >> w) words.push_back(w);
  std::set<std::string> alphabet(words.begin(), words.end());
  std::unordered_map<std::string, Token> id;
  Token next = 0;
  for (const auto& s : alphabet) id[s] = next++;
  out.tokens.reserve(words.size());
  for (const auto& s : words) out.tokens.push_back(id[s]);
  out.vocab_size = next;
  return out;
}

MarkovModel train_markov(TokenSpan corpus, int order, double smoothing_alpha, int vocab_size) {
  if (order < 0) throw std::invalid_argument("order must be non-negative");
  if (static_cast<int>(corpus.size()) <= order) throw CorpusTooShortError();

  int vocab = vocab_size;
  if (vocab < 0) {
    Token max_id = 0;
    for (Token t : corpus) max_id = std::max(max_id, t);
    vocab = max_id + 1;
  }

  MarkovModel model(order, vocab, smoothing_alpha);
  for (int k = 0; k <= order; ++k) {
    for (size_t i = static_cast<size_t>(k); i < corpus.size(); ++i) {
      std::vector<Token> suffix(corpus.begin() + (i - k), corpus.begin() + i);
      auto& row = model.counts_[suffix];
      if (row.empty()) row.assign(static_cast<size_t>(vocab), 0);
      row[static_cast<size_t>(corpus[i])] += 1;
    }
  }
  return model;
}

Categorical MarkovModel::next_dist(TokenSpan context) const {
  const int longest = std::min<int>(order_, static_cast<int>(context.size()));
  for (int k = longest; k >= 0; --k) {
    std::vector<Token> suffix(context.end() - k, context.end());
    auto it = counts_.find(suffix);
    if (it == counts_.end()) continue;
    std::vector<double> w(static_cast<size_t>(vocab_));
    for (int t = 0; t < vocab_; ++t) {
      w[static_cast<size_t>(t)] = static_cast<double>(it->second[static_cast<size_t>(t)]) + alpha_;
    }
    auto dist = Categorical::try_normalized(std::move(w));
    if (dist) return *std::move(dist);
  }
  return Categorical::uniform(vocab_);
}

namespace {
constexpr int kMarkovFormatVersion = 1;
}

std::string MarkovModel::to_json_string() const {
  nlohmann::ordered_json doc;
  doc["format"] = "speclab-markov";
  doc["version"] = kMarkovFormatVersion;
  doc["order"] = order_;
  doc["vocab_size"] = vocab_;
  doc["smoothing_alpha"] = alpha_;

  // Sorted contexts keep serialization byte-stable across runs.
  std::map<std::vector<Token>, const std::vector<uint64_t>*> sorted;
  for (const auto& [ctx, row] : counts_) sorted[ctx] = &row;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& [ctx, row] : sorted) {
    nlohmann::ordered_json entry;
    entry["context"] = ctx;
    entry["counts"] = *row;
    rows.push_back(std::move(entry));
  }
  doc["rows"] = std::move(rows);
  return doc.dump(2);
}

MarkovModel MarkovModel::from_json_string(const std::string& text) {
  nlohmann::json doc = nlohmann::json::parse(text);
  if (doc.at("format") != "speclab-markov" || doc.at("version") != kMarkovFormatVersion) {
    throw std::runtime_error("unsupported markov model file");
  }
  MarkovModel model(doc.at("order").get<int>(), doc.at("vocab_size").get<int>(),
                    doc.at("smoothing_alpha").get<double>());
  for (const auto& entry : doc.at("rows")) {
    std::vector<Token> ctx = entry.at("context").get<std::vector<Token>>();
    model.counts_[ctx] = entry.at("counts").get<std::vector<uint64_t>>();
  }
  return model;
}

void MarkovModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << to_json_string();
}

MarkovModel MarkovModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_string(buf.str());
}

namespace {

// Draft provider view: mixes the target toward uniform noise, with the
// mixing weight growing past the trajectory root.
class MixedDraftProvider : public NextTokenProvider {
 public:
  MixedDraftProvider(std::shared_ptr<const NextTokenProvider> target, double knob, double drift,
                     size_t root_len)
      : target_(std::move(target)), knob_(knob), drift_(drift), root_len_(root_len) {}

  Categorical next_dist(TokenSpan context) const override {
    const double depth =
        context.size() > root_len_ ? static_cast<double>(context.size() - root_len_) : 0.0;
    const double m = std::min(1.0, knob_ + drift_ * depth);
    Categorical p = target_->next_dist(context);
    const int v = p.vocab_size();
    std::vector<double> w(static_cast<size_t>(v));
    const double u = 1.0 / static_cast<double>(v);
    for (int t = 0; t < v; ++t) {
      w[static_cast<size_t>(t)] = (1.0 - m) * p[t] + m * u;
    }
    return Categorical::normalized(std::move(w));
  }

  int vocab_size() const override { return target_->vocab_size(); }

 private:
  std::shared_ptr<const NextTokenProvider> target_;
  double knob_;
  double drift_;
  size_t root_len_;
};

}  // namespace

SyntheticPair::SyntheticPair(std::shared_ptr<const NextTokenProvider> target,
                             double divergence_knob, double depth_drift)
    : target_(std::move(target)), knob_(divergence_knob), drift_(depth_drift) {
  if (knob_ < 0.0 || knob_ > 1.0) throw std::invalid_argument("divergence_knob must be in [0,1]");
  if (drift_ < 0.0) throw std::invalid_argument("depth_drift must be non-negative");
}

RootedPair SyntheticPair::at_root(TokenSpan root_context) const {
  return {target_,
          std::make_shared<MixedDraftProvider>(target_, knob_, drift_, root_context.size())};
}

SyntheticPair make_pair(std::shared_ptr<const NextTokenProvider> target, double divergence_knob,
                        double depth_drift) {
  return SyntheticPair(std::move(target), divergence_knob, depth_drift);
}

}  // namespace speclab
