// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "speclab/rng.hpp"

namespace speclab {

// Categorical policy over drafting actions: three linear projections of the
// hidden-state blocks to a shared width, each layer-normalized, concatenated
// with standardized scalars, then a two-hidden-layer MLP with GELU and
// dropout producing one logit per supported action.
class PolicyNet {
 public:
  struct Shape {
    std::array<int, 3> block_widths{8, 8, 8};
    int scalar_dim = 11;
    int proj_dim = 128;
    std::array<int, 2> hidden{512, 32};
    int n_actions = 1;
    double dropout = 0.1;

    bool operator==(const Shape&) const = default;
  };

  struct Segment {
    std::string name;
    int rows = 0;
    int cols = 0;
    size_t offset = 0;
    size_t size() const { return static_cast<size_t>(rows) * static_cast<size_t>(cols); }
  };

  // Activations of one forward pass, kept for backprop.
  struct Cache {
    std::array<std::vector<double>, 3> block_in;
    std::array<std::vector<double>, 3> proj_out;     // before layer norm
    std::array<std::vector<double>, 3> ln_hat;       // normalized pre-gain
    std::array<double, 3> ln_inv_sigma{};
    std::vector<double> concat;
    std::vector<double> fc1_pre, fc1_act, fc1_drop, fc1_mask;
    std::vector<double> fc2_pre, fc2_act, fc2_drop, fc2_mask;
  };

  PolicyNet(const Shape& shape, uint64_t init_seed);

  // Training-mode forward when train is true (dropout masks drawn from rng);
  // deterministic inference otherwise. cache may be null when no backward
  // pass will follow.
  std::vector<double> forward(std::span<const double> h_p_prev, std::span<const double> h_q_prev,
                              std::span<const double> h_q_cur, std::span<const double> scalars,
                              bool train, RngStream* rng, Cache* cache) const;

  std::vector<double> logits(std::span<const double> h_p_prev, std::span<const double> h_q_prev,
                             std::span<const double> h_q_cur,
                             std::span<const double> scalars) const {
    return forward(h_p_prev, h_q_prev, h_q_cur, scalars, false, nullptr, nullptr);
  }

  // Accumulates d(loss)/d(params) into grad (same layout as params()).
  void backward(const Cache& cache, std::span<const double> dlogits,
                std::vector<double>& grad) const;

  const Shape& shape() const { return shape_; }
  const std::vector<Segment>& segments() const { return segments_; }
  const std::vector<double>& params() const { return params_; }
  std::vector<double>& params() { return params_; }

 private:
  size_t seg_offset(const std::string& name) const;

  Shape shape_;
  std::vector<Segment> segments_;
  std::vector<double> params_;

  // Cached segment offsets, resolved at construction.
  std::array<size_t, 3> proj_w_{}, proj_b_{}, ln_g_{}, ln_b_{};
  size_t fc1_w_ = 0, fc1_b_ = 0, fc2_w_ = 0, fc2_b_ = 0, out_w_ = 0, out_b_ = 0;
};

std::vector<double> softmax(std::span<const double> logits);

// Adam with bias correction; step() consumes one gradient of params' size.
struct AdamOptimizer {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void step(std::vector<double>& params, const std::vector<double>& grad);

  std::vector<double> m, v;
  int64_t t = 0;
};

// Per-feature affine map fitted on the training split; stddev is floored so
// constant features stay finite.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Standardizer fit(const std::vector<std::vector<double>>& rows);
  std::vector<double> apply(std::span<const double> row) const;
};

}  // namespace speclab
