// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "speclab/rng.hpp"

namespace speclab {

using Token = int32_t;
using TokenSpan = std::span<const Token>;

// Signals that a residual (or weight vector) carries no mass. Callers must
// distinguish this from data corruption: an all-zero residual means the
// upstream acceptance was certain, not that the input was malformed.
struct AllZeroError : std::runtime_error {
  AllZeroError() : std::runtime_error("all-zero weight vector") {}
};

// Probability vector over a finite vocabulary of dense token ids.
// Immutable after construction; entries are non-negative and sum to 1
// within 1e-12. All probabilities are kept in linear space.
class Categorical {
 public:
  // Builds from non-negative weights, dividing by their sum.
  // Throws AllZeroError when every entry is zero.
  static Categorical normalized(std::vector<double> weights);

  // Non-throwing variant for hot paths that must branch on emptiness.
  static std::optional<Categorical> try_normalized(std::vector<double> weights);

  static Categorical point_mass(int vocab_size, Token token);
  static Categorical uniform(int vocab_size);

  int vocab_size() const { return static_cast<int>(p_.size()); }
  double operator[](Token t) const { return p_[static_cast<size_t>(t)]; }
  const std::vector<double>& probs() const { return p_; }

 private:
  explicit Categorical(std::vector<double> p) : p_(std::move(p)) {}
  std::vector<double> p_;
};

Categorical normalize(std::vector<double> weights);

// Normalized max(p - q, 0). Throws AllZeroError when p == q exactly.
Categorical positive_residual(const Categorical& p, const Categorical& q);
std::optional<Categorical> try_positive_residual(const Categorical& p, const Categorical& q);

// Temperature then nucleus truncation. temperature == 0 returns a point mass
// on the argmax (lowest token id wins ties). Nucleus keeps the smallest
// prefix of tokens, sorted by descending probability then ascending id,
// whose cumulative mass reaches top_p, and renormalizes.
Categorical apply_sampling_params(const Categorical& p, double temperature, double top_p);

// Natural-log entropy; 0 * log 0 := 0.
double entropy(const Categorical& p);

// KL(p || q); +infinity when support(p) is not contained in support(q).
double kl(const Categorical& p, const Categorical& q);

// Sum of absolute differences, in [0, 2].
double l1(const Categorical& p, const Categorical& q);

Token sample(const Categorical& p, RngStream& rng);

}  // namespace speclab
