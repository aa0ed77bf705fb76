// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "speclab/action.hpp"
#include "speclab/toy_models.hpp"

namespace speclab {

// Affine per-forward-pass wall-time models for the target (t_p) and draft
// (t_q) models, seconds as a function of context length.
struct LatencyModel {
  double a_p = 1e-3;
  double b_p = 1e-6;
  double a_q = 1e-4;
  double b_q = 1e-7;

  double t_p(double length) const { return a_p + b_p * length; }
  double t_q(double length) const { return a_q + b_q * length; }
};

// Wall-clock estimate for drafting a (k, l1, l2) tree and running one target
// pass at context length l:
//   sum_{j<l1} t_q(l + j) + sum_{j<l2} t_q(l + l1 + j*k) + t_p(l + l1 + k*l2).
double estimate_forward_time(const LatencyModel& latency, double context_length,
                             ActionTriple action);

// Least-squares affine fit of measured next_dist wall times at the given
// context lengths. Calibration only; not deterministic across machines.
LatencyModel microbenchmark_latency(const NextTokenProvider& target,
                                    const NextTokenProvider& draft,
                                    const std::vector<int>& context_lengths, int repeats,
                                    uint64_t seed);

}  // namespace speclab
