// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

#include "speclab/dist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace speclab {

namespace {

// Weights within round-off of zero are clamped; anything more negative is a
// caller bug.
constexpr double kNegativeTolerance = 1e-12;

double checked_sum(std::vector<double>& w) {
  double sum = 0.0;
  for (double& v : w) {
    if (v < 0.0) {
      if (v < -kNegativeTolerance) {
        throw std::invalid_argument("negative weight in distribution");
      }
      v = 0.0;
    }
    sum += v;
  }
  return sum;
}

}  // namespace

Categorical Categorical::normalized(std::vector<double> weights) {
  double sum = checked_sum(weights);
  if (sum <= 0.0) throw AllZeroError();
  for (double& v : weights) v /= sum;
  return Categorical(std::move(weights));
}

std::optional<Categorical> Categorical::try_normalized(std::vector<double> weights) {
  double sum = checked_sum(weights);
  if (sum <= 0.0) return std::nullopt;
  for (double& v : weights) v /= sum;
  return Categorical(std::move(weights));
}

Categorical Categorical::point_mass(int vocab_size, Token token) {
  std::vector<double> p(static_cast<size_t>(vocab_size), 0.0);
  p.at(static_cast<size_t>(token)) = 1.0;
  return Categorical(std::move(p));
}

Categorical Categorical::uniform(int vocab_size) {
  std::vector<double> p(static_cast<size_t>(vocab_size),
                        1.0 / static_cast<double>(vocab_size));
  return Categorical(std::move(p));
}

Categorical normalize(std::vector<double> weights) {
  return Categorical::normalized(std::move(weights));
}

Categorical positive_residual(const Categorical& p, const Categorical& q) {
  auto r = try_positive_residual(p, q);
  if (!r) throw AllZeroError();
  return *std::move(r);
}

std::optional<Categorical> try_positive_residual(const Categorical& p, const Categorical& q) {
  if (p.vocab_size() != q.vocab_size()) {
    throw std::invalid_argument("vocab size mismatch");
  }
  std::vector<double> w(p.probs());
  for (size_t i = 0; i < w.size(); ++i) {
    w[i] = std::max(w[i] - q.probs()[i], 0.0);
  }
  return Categorical::try_normalized(std::move(w));
}

Categorical apply_sampling_params(const Categorical& p, double temperature, double top_p) {
  if (temperature < 0.0) throw std::invalid_argument("temperature must be non-negative");
  if (top_p <= 0.0 || top_p > 1.0) throw std::invalid_argument("top_p must be in (0, 1]");
  const int v = p.vocab_size();
  if (temperature == 0.0) {
    Token best = 0;
    for (Token t = 1; t < v; ++t) {
      if (p[t] > p[best]) best = t;
    }
    return Categorical::point_mass(v, best);
  }

  std::vector<double> w(static_cast<size_t>(v));
  const double inv_t = 1.0 / temperature;
  for (int t = 0; t < v; ++t) {
    w[static_cast<size_t>(t)] = p[t] > 0.0 ? std::pow(p[t], inv_t) : 0.0;
  }
  Categorical scaled = Categorical::normalized(std::move(w));
  if (top_p >= 1.0) return scaled;

  std::vector<Token> order(static_cast<size_t>(v));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Token a, Token b) {
    if (scaled[a] != scaled[b]) return scaled[a] > scaled[b];
    return a < b;
  });

  std::vector<double> kept(static_cast<size_t>(v), 0.0);
  double cum = 0.0;
  for (Token t : order) {
    kept[static_cast<size_t>(t)] = scaled[t];
    cum += scaled[t];
    // Round-off tolerance so exact-boundary prefixes (0.7 + 0.2 vs 0.9) cut
    // where real arithmetic would.
    if (cum >= top_p - 1e-12) break;
  }
  return Categorical::normalized(std::move(kept));
}

double entropy(const Categorical& p) {
  double h = 0.0;
  for (double v : p.probs()) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

double kl(const Categorical& p, const Categorical& q) {
  if (p.vocab_size() != q.vocab_size()) {
    throw std::invalid_argument("vocab size mismatch");
  }
  double d = 0.0;
  for (int t = 0; t < p.vocab_size(); ++t) {
    if (p[t] > 0.0) {
      if (q[t] <= 0.0) return std::numeric_limits<double>::infinity();
      d += p[t] * std::log(p[t] / q[t]);
    }
  }
  return d;
}

double l1(const Categorical& p, const Categorical& q) {
  if (p.vocab_size() != q.vocab_size()) {
    throw std::invalid_argument("vocab size mismatch");
  }
  double d = 0.0;
  for (int t = 0; t < p.vocab_size(); ++t) {
    d += std::abs(p[t] - q[t]);
  }
  return d;
}

Token sample(const Categorical& p, RngStream& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  Token last_positive = -1;
  for (Token t = 0; t < p.vocab_size(); ++t) {
    if (p[t] <= 0.0) continue;
    last_positive = t;
    cum += p[t];
    if (u < cum) return t;
  }
  // Round-off can leave cum marginally below 1; the draw belongs to the last
  // token with positive mass.
  return last_positive;
}

}  // namespace speclab
