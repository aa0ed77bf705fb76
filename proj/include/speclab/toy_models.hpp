// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "speclab/dist.hpp"

namespace speclab {

// Next-token distribution provider. Plays the role of a target or draft
// language model without any neural network. Implementations are read-only
// after construction and safe for concurrent queries.
class NextTokenProvider {
 public:
  virtual ~NextTokenProvider() = default;

  // Deterministic in the context.
  virtual Categorical next_dist(TokenSpan context) const = 0;

  // Hidden-state style feature block; absent for toy providers. The selector
  // substitutes zero vectors of its declared width.
  virtual std::optional<std::vector<double>> feature_block(TokenSpan /*context*/) const {
    return std::nullopt;
  }

  virtual int vocab_size() const = 0;
};

struct CorpusTooShortError : std::runtime_error {
  CorpusTooShortError() : std::runtime_error("corpus shorter than model order") {}
};

enum class TokenizerMode { kByte, kWhitespaceWord };

// Dense token ids assigned from 0 in sorted order of the surface forms the
// corpus induces.
struct TokenizedCorpus {
  std::vector<Token> tokens;
  int vocab_size = 0;
};

TokenizedCorpus tokenize(const std::string& text, TokenizerMode mode);

struct VecTokenHash {
  size_t operator()(const std::vector<Token>& v) const {
    uint64_t h = 0x9e3779b97f4a7c15ULL;
    for (Token t : v) h = splitmix64(h ^ static_cast<uint64_t>(static_cast<uint32_t>(t)));
    return static_cast<size_t>(h);
  }
};

// Count-based n-gram model with backoff: an unseen suffix falls back to the
// next shorter suffix, ultimately to the unigram table.
// next_dist(ctx) is proportional to counts(suffix) + smoothing_alpha.
class MarkovModel : public NextTokenProvider {
 public:
  Categorical next_dist(TokenSpan context) const override;
  int vocab_size() const override { return vocab_; }
  int order() const { return order_; }
  double smoothing_alpha() const { return alpha_; }

  // Single structured, versioned file; round-trips bit-exactly.
  void save(const std::string& path) const;
  static MarkovModel load(const std::string& path);
  std::string to_json_string() const;
  static MarkovModel from_json_string(const std::string& text);

  friend MarkovModel train_markov(TokenSpan corpus, int order, double smoothing_alpha,
                                  int vocab_size);

 private:
  MarkovModel(int order, int vocab, double alpha) : order_(order), vocab_(vocab), alpha_(alpha) {}

  int order_ = 0;
  int vocab_ = 0;
  double alpha_ = 0.0;
  std::unordered_map<std::vector<Token>, std::vector<uint64_t>, VecTokenHash> counts_;
};

// Trains on all k-grams for k = 0..order. vocab_size < 0 infers the
// vocabulary from the corpus. Throws CorpusTooShortError unless
// corpus length > order.
MarkovModel train_markov(TokenSpan corpus, int order, double smoothing_alpha,
                         int vocab_size = -1);

// A (target, draft) provider pair rooted at a specific context. Drafting and
// analytics operate on this view.
struct RootedPair {
  std::shared_ptr<const NextTokenProvider> target;
  std::shared_ptr<const NextTokenProvider> draft;
};

// Anything that can produce a provider pair for a given draft root.
class PairSource {
 public:
  virtual ~PairSource() = default;
  virtual RootedPair at_root(TokenSpan root_context) const = 0;
  virtual int vocab_size() const = 0;
};

// Draft = (1 - m) * target + m * uniform with
// m = min(1, divergence_knob + depth_drift * depth(ctx)), where depth counts
// tokens past the trajectory root. divergence_knob = 0 and depth_drift = 0
// make the draft identical to the target.
class SyntheticPair : public PairSource {
 public:
  SyntheticPair(std::shared_ptr<const NextTokenProvider> target, double divergence_knob,
                double depth_drift);

  RootedPair at_root(TokenSpan root_context) const override;
  int vocab_size() const override { return target_->vocab_size(); }

  const NextTokenProvider& target() const { return *target_; }
  std::shared_ptr<const NextTokenProvider> target_ptr() const { return target_; }
  double divergence_knob() const { return knob_; }
  double depth_drift() const { return drift_; }

 private:
  std::shared_ptr<const NextTokenProvider> target_;
  double knob_;
  double drift_;
};

SyntheticPair make_pair(std::shared_ptr<const NextTokenProvider> target, double divergence_knob,
                        double depth_drift);

// Wraps a provider with temperature / nucleus transforms applied on top.
class SampledProvider : public NextTokenProvider {
 public:
  SampledProvider(std::shared_ptr<const NextTokenProvider> base, double temperature, double top_p)
      : base_(std::move(base)), temperature_(temperature), top_p_(top_p) {}

  Categorical next_dist(TokenSpan context) const override {
    return apply_sampling_params(base_->next_dist(context), temperature_, top_p_);
  }
  std::optional<std::vector<double>> feature_block(TokenSpan context) const override {
    return base_->feature_block(context);
  }
  int vocab_size() const override { return base_->vocab_size(); }

 private:
  std::shared_ptr<const NextTokenProvider> base_;
  double temperature_;
  double top_p_;
};

// Applies one sampling configuration to both sides of a pair source.
class SampledSource : public PairSource {
 public:
  SampledSource(std::shared_ptr<const PairSource> base, double temperature, double top_p)
      : base_(std::move(base)), temperature_(temperature), top_p_(top_p) {}

  RootedPair at_root(TokenSpan root_context) const override {
    RootedPair raw = base_->at_root(root_context);
    return {std::make_shared<SampledProvider>(raw.target, temperature_, top_p_),
            std::make_shared<SampledProvider>(raw.draft, temperature_, top_p_)};
  }
  int vocab_size() const override { return base_->vocab_size(); }

 private:
  std::shared_ptr<const PairSource> base_;
  double temperature_;
  double top_p_;
};

// Two independent providers as a pair; the draft ignores the root.
class TwoProviderSource : public PairSource {
 public:
  TwoProviderSource(std::shared_ptr<const NextTokenProvider> target,
                    std::shared_ptr<const NextTokenProvider> draft)
      : target_(std::move(target)), draft_(std::move(draft)) {}

  RootedPair at_root(TokenSpan /*root_context*/) const override { return {target_, draft_}; }
  int vocab_size() const override { return target_->vocab_size(); }

 private:
  std::shared_ptr<const NextTokenProvider> target_;
  std::shared_ptr<const NextTokenProvider> draft_;
};

}  // namespace speclab
