// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

#include "speclab/latency.hpp"

#include <chrono>
#include <stdexcept>

namespace speclab {

double estimate_forward_time(const LatencyModel& latency, double context_length,
                             ActionTriple action) {
  if (context_length < 0.0) throw std::invalid_argument("context_length must be non-negative");
  double total = 0.0;
  for (int j = 0; j < action.l1; ++j) {
    total += latency.t_q(context_length + j);
  }
  for (int j = 0; j < action.l2; ++j) {
    total += latency.t_q(context_length + action.l1 + static_cast<double>(j) * action.k);
  }
  total += latency.t_p(context_length + action.l1 + static_cast<double>(action.k) * action.l2);
  return total;
}

namespace {

// One timed next_dist call per (length, repeat); returns seconds.
double time_calls(const NextTokenProvider& provider, const std::vector<Token>& ctx, int repeats) {
  const auto start = std::chrono::steady_clock::now();
  for (int r = 0; r < repeats; ++r) {
    volatile double sink = provider.next_dist(ctx)[0];
    (void)sink;
  }
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(stop - start).count() / repeats;
}

void affine_fit(const std::vector<double>& xs, const std::vector<double>& ys, double& a,
                double& b) {
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) {
    b = 0.0;
    a = sy / n;
    return;
  }
  b = (n * sxy - sx * sy) / denom;
  a = (sy - b * sx) / n;
}

}  // namespace

LatencyModel microbenchmark_latency(const NextTokenProvider& target,
                                    const NextTokenProvider& draft,
                                    const std::vector<int>& context_lengths, int repeats,
                                    uint64_t seed) {
  if (context_lengths.empty()) throw std::invalid_argument("no context lengths");
  RngStream rng(seed);
  std::vector<double> xs, tp, tq;
  for (int len : context_lengths) {
    std::vector<Token> ctx(static_cast<size_t>(len));
    for (Token& t : ctx) t = static_cast<Token>(rng.uniform_index(static_cast<size_t>(target.vocab_size())));
    xs.push_back(len);
    tp.push_back(time_calls(target, ctx, repeats));
    tq.push_back(time_calls(draft, ctx, repeats));
  }
  LatencyModel out;
  affine_fit(xs, tp, out.a_p, out.b_p);
  affine_fit(xs, tq, out.a_q, out.b_q);
  // Affine fits of noisy timings can dip negative at short contexts; floor
  // the intercepts to keep t_p, t_q strictly positive.
  out.a_p = std::max(out.a_p, 1e-9);
  out.a_q = std::max(out.a_q, 1e-9);
  out.b_p = std::max(out.b_p, 0.0);
  out.b_q = std::max(out.b_q, 0.0);
  return out;
}

}  // namespace speclab
