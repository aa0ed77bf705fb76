// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

#include "speclab/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace speclab {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
  const double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return phi + x * pdf;
}

// y = W x + b with W stored row-major (out x in).
void linear_forward(std::span<const double> w, std::span<const double> b,
                    std::span<const double> x, std::vector<double>& y) {
  const size_t out = b.size();
  const size_t in = x.size();
  y.assign(out, 0.0);
  for (size_t o = 0; o < out; ++o) {
    double acc = b[o];
    const double* row = w.data() + o * in;
    for (size_t i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

// Accumulates dW, db and returns dx.
void linear_backward(std::span<const double> w, std::span<const double> x,
                     std::span<const double> dy, double* gw, double* gb,
                     std::vector<double>& dx) {
  const size_t out = dy.size();
  const size_t in = x.size();
  dx.assign(in, 0.0);
  for (size_t o = 0; o < out; ++o) {
    const double* row = w.data() + o * in;
    double* grow = gw + o * in;
    const double d = dy[o];
    gb[o] += d;
    for (size_t i = 0; i < in; ++i) {
      grow[i] += d * x[i];
      dx[i] += d * row[i];
    }
  }
}

}  // namespace

PolicyNet::PolicyNet(const Shape& shape, uint64_t init_seed) : shape_(shape) {
  const int in_dim = 3 * shape.proj_dim + shape.scalar_dim;
  auto add = [&](const std::string& name, int rows, int cols) {
    Segment s{name, rows, cols, params_.size()};
    segments_.push_back(s);
    params_.resize(params_.size() + s.size(), 0.0);
    return s.offset;
  };
  for (int i = 0; i < 3; ++i) {
    const std::string idx = std::to_string(i);
    proj_w_[static_cast<size_t>(i)] = add("proj_w" + idx, shape.proj_dim, shape.block_widths[static_cast<size_t>(i)]);
    proj_b_[static_cast<size_t>(i)] = add("proj_b" + idx, shape.proj_dim, 1);
    ln_g_[static_cast<size_t>(i)] = add("ln_g" + idx, shape.proj_dim, 1);
    ln_b_[static_cast<size_t>(i)] = add("ln_b" + idx, shape.proj_dim, 1);
  }
  fc1_w_ = add("fc1_w", shape.hidden[0], in_dim);
  fc1_b_ = add("fc1_b", shape.hidden[0], 1);
  fc2_w_ = add("fc2_w", shape.hidden[1], shape.hidden[0]);
  fc2_b_ = add("fc2_b", shape.hidden[1], 1);
  out_w_ = add("out_w", shape.n_actions, shape.hidden[1]);
  out_b_ = add("out_b", shape.n_actions, 1);

  // Xavier-uniform weights, unit layer-norm gains, zero biases.
  RngStream rng(init_seed);
  auto init_matrix = [&](size_t offset, int rows, int cols) {
    const double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (size_t i = 0; i < static_cast<size_t>(rows) * static_cast<size_t>(cols); ++i) {
      params_[offset + i] = (2.0 * rng.uniform() - 1.0) * s;
    }
  };
  for (int i = 0; i < 3; ++i) {
    init_matrix(proj_w_[static_cast<size_t>(i)], shape.proj_dim, shape.block_widths[static_cast<size_t>(i)]);
    for (int j = 0; j < shape.proj_dim; ++j) params_[ln_g_[static_cast<size_t>(i)] + static_cast<size_t>(j)] = 1.0;
  }
  init_matrix(fc1_w_, shape.hidden[0], in_dim);
  init_matrix(fc2_w_, shape.hidden[1], shape.hidden[0]);
  init_matrix(out_w_, shape.n_actions, shape.hidden[1]);
}

size_t PolicyNet::seg_offset(const std::string& name) const {
  for (const Segment& s : segments_) {
    if (s.name == name) return s.offset;
  }
  throw std::out_of_range("no parameter segment " + name);
}

std::vector<double> PolicyNet::forward(std::span<const double> h_p_prev,
                                       std::span<const double> h_q_prev,
                                       std::span<const double> h_q_cur,
                                       std::span<const double> scalars, bool train,
                                       RngStream* rng, Cache* cache) const {
  const std::array<std::span<const double>, 3> blocks{h_p_prev, h_q_prev, h_q_cur};
  for (int i = 0; i < 3; ++i) {
    if (static_cast<int>(blocks[static_cast<size_t>(i)].size()) != shape_.block_widths[static_cast<size_t>(i)]) {
      throw std::invalid_argument("feature block width mismatch");
    }
  }
  if (static_cast<int>(scalars.size()) != shape_.scalar_dim) {
    throw std::invalid_argument("scalar feature width mismatch");
  }
  if (train && rng == nullptr) throw std::invalid_argument("training forward needs an rng");

  const int d = shape_.proj_dim;
  std::vector<double> concat;
  concat.reserve(static_cast<size_t>(3 * d) + scalars.size());

  Cache local;
  Cache& c = cache ? *cache : local;

  for (int i = 0; i < 3; ++i) {
    const size_t si = static_cast<size_t>(i);
    c.block_in[si].assign(blocks[si].begin(), blocks[si].end());
    std::span<const double> w(params_.data() + proj_w_[si],
                              static_cast<size_t>(d) * blocks[si].size());
    std::span<const double> b(params_.data() + proj_b_[si], static_cast<size_t>(d));
    linear_forward(w, b, blocks[si], c.proj_out[si]);

    double mean = 0.0;
    for (double v : c.proj_out[si]) mean += v;
    mean /= d;
    double var = 0.0;
    for (double v : c.proj_out[si]) var += (v - mean) * (v - mean);
    var /= d;
    const double inv_sigma = 1.0 / std::sqrt(var + kLayerNormEps);
    c.ln_inv_sigma[si] = inv_sigma;
    c.ln_hat[si].resize(static_cast<size_t>(d));
    const double* g = params_.data() + ln_g_[si];
    const double* lb = params_.data() + ln_b_[si];
    for (int j = 0; j < d; ++j) {
      const double hat = (c.proj_out[si][static_cast<size_t>(j)] - mean) * inv_sigma;
      c.ln_hat[si][static_cast<size_t>(j)] = hat;
      concat.push_back(g[j] * hat + lb[j]);
    }
  }
  concat.insert(concat.end(), scalars.begin(), scalars.end());
  c.concat = concat;

  auto dropout = [&](const std::vector<double>& x, std::vector<double>& masked,
                     std::vector<double>& mask) {
    mask.assign(x.size(), 1.0);
    masked = x;
    if (train && shape_.dropout > 0.0) {
      const double keep = 1.0 - shape_.dropout;
      for (size_t j = 0; j < x.size(); ++j) {
        if (rng->uniform() < shape_.dropout) {
          mask[j] = 0.0;
          masked[j] = 0.0;
        } else {
          mask[j] = 1.0 / keep;
          masked[j] = x[j] / keep;
        }
      }
    }
  };

  {
    std::span<const double> w(params_.data() + fc1_w_,
                              static_cast<size_t>(shape_.hidden[0]) * concat.size());
    std::span<const double> b(params_.data() + fc1_b_, static_cast<size_t>(shape_.hidden[0]));
    linear_forward(w, b, concat, c.fc1_pre);
  }
  c.fc1_act.resize(c.fc1_pre.size());
  for (size_t j = 0; j < c.fc1_pre.size(); ++j) c.fc1_act[j] = gelu(c.fc1_pre[j]);
  dropout(c.fc1_act, c.fc1_drop, c.fc1_mask);

  {
    std::span<const double> w(params_.data() + fc2_w_,
                              static_cast<size_t>(shape_.hidden[1]) * c.fc1_drop.size());
    std::span<const double> b(params_.data() + fc2_b_, static_cast<size_t>(shape_.hidden[1]));
    linear_forward(w, b, c.fc1_drop, c.fc2_pre);
  }
  c.fc2_act.resize(c.fc2_pre.size());
  for (size_t j = 0; j < c.fc2_pre.size(); ++j) c.fc2_act[j] = gelu(c.fc2_pre[j]);
  dropout(c.fc2_act, c.fc2_drop, c.fc2_mask);

  std::vector<double> out;
  {
    std::span<const double> w(params_.data() + out_w_,
                              static_cast<size_t>(shape_.n_actions) * c.fc2_drop.size());
    std::span<const double> b(params_.data() + out_b_, static_cast<size_t>(shape_.n_actions));
    linear_forward(w, b, c.fc2_drop, out);
  }
  return out;
}

void PolicyNet::backward(const Cache& c, std::span<const double> dlogits,
                         std::vector<double>& grad) const {
  if (grad.size() != params_.size()) throw std::invalid_argument("gradient buffer size mismatch");
  const int d = shape_.proj_dim;

  std::vector<double> d_fc2_drop;
  {
    std::span<const double> w(params_.data() + out_w_,
                              static_cast<size_t>(shape_.n_actions) * c.fc2_drop.size());
    linear_backward(w, c.fc2_drop, dlogits, grad.data() + out_w_, grad.data() + out_b_,
                    d_fc2_drop);
  }

  std::vector<double> d_fc2_pre(c.fc2_pre.size());
  for (size_t j = 0; j < d_fc2_pre.size(); ++j) {
    d_fc2_pre[j] = d_fc2_drop[j] * c.fc2_mask[j] * gelu_grad(c.fc2_pre[j]);
  }

  std::vector<double> d_fc1_drop;
  {
    std::span<const double> w(params_.data() + fc2_w_,
                              static_cast<size_t>(shape_.hidden[1]) * c.fc1_drop.size());
    linear_backward(w, c.fc1_drop, d_fc2_pre, grad.data() + fc2_w_, grad.data() + fc2_b_,
                    d_fc1_drop);
  }

  std::vector<double> d_fc1_pre(c.fc1_pre.size());
  for (size_t j = 0; j < d_fc1_pre.size(); ++j) {
    d_fc1_pre[j] = d_fc1_drop[j] * c.fc1_mask[j] * gelu_grad(c.fc1_pre[j]);
  }

  std::vector<double> d_concat;
  {
    std::span<const double> w(params_.data() + fc1_w_,
                              static_cast<size_t>(shape_.hidden[0]) * c.concat.size());
    linear_backward(w, c.concat, d_fc1_pre, grad.data() + fc1_w_, grad.data() + fc1_b_, d_concat);
  }

  for (int i = 0; i < 3; ++i) {
    const size_t si = static_cast<size_t>(i);
    const double* dy = d_concat.data() + static_cast<size_t>(i) * static_cast<size_t>(d);
    const double* g = params_.data() + ln_g_[si];

    double* gg = grad.data() + ln_g_[si];
    double* gb = grad.data() + ln_b_[si];
    std::vector<double> d_hat(static_cast<size_t>(d));
    double sum_dhat = 0.0;
    double sum_dhat_hat = 0.0;
    for (int j = 0; j < d; ++j) {
      const size_t sj = static_cast<size_t>(j);
      gg[j] += dy[j] * c.ln_hat[si][sj];
      gb[j] += dy[j];
      d_hat[sj] = dy[j] * g[j];
      sum_dhat += d_hat[sj];
      sum_dhat_hat += d_hat[sj] * c.ln_hat[si][sj];
    }
    std::vector<double> d_proj(static_cast<size_t>(d));
    const double inv_n = 1.0 / static_cast<double>(d);
    for (int j = 0; j < d; ++j) {
      const size_t sj = static_cast<size_t>(j);
      d_proj[sj] = c.ln_inv_sigma[si] *
                   (d_hat[sj] - inv_n * sum_dhat - inv_n * c.ln_hat[si][sj] * sum_dhat_hat);
    }

    std::span<const double> w(params_.data() + proj_w_[si],
                              static_cast<size_t>(d) * c.block_in[si].size());
    std::vector<double> d_block;
    linear_backward(w, c.block_in[si], d_proj, grad.data() + proj_w_[si],
                    grad.data() + proj_b_[si], d_block);
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  double max = logits[0];
  for (double v : logits) max = std::max(max, v);
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - max);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

void AdamOptimizer::step(std::vector<double>& params, const std::vector<double>& grad) {
  if (m.empty()) {
    m.assign(params.size(), 0.0);
    v.assign(params.size(), 0.0);
  }
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (size_t i = 0; i < params.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

Standardizer Standardizer::fit(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw std::invalid_argument("cannot fit standardizer on empty data");
  const size_t dim = rows[0].size();
  Standardizer s;
  s.mean.assign(dim, 0.0);
  s.stddev.assign(dim, 0.0);
  for (const auto& r : rows) {
    for (size_t i = 0; i < dim; ++i) s.mean[i] += r[i];
  }
  for (double& m : s.mean) m /= static_cast<double>(rows.size());
  for (const auto& r : rows) {
    for (size_t i = 0; i < dim; ++i) {
      const double d = r[i] - s.mean[i];
      s.stddev[i] += d * d;
    }
  }
  for (double& v : s.stddev) {
    v = std::sqrt(v / static_cast<double>(rows.size()));
    if (v < 1e-12) v = 1.0;
  }
  return s;
}

std::vector<double> Standardizer::apply(std::span<const double> row) const {
  std::vector<double> out(row.size());
  for (size_t i = 0; i < row.size(); ++i) out[i] = (row[i] - mean[i]) / stddev[i];
  return out;
}

}  // namespace speclab
