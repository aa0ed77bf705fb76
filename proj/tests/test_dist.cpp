// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "speclab/dist.hpp"

using namespace speclab;

namespace {

Categorical random_dist(int vocab, RngStream& rng) {
  std::vector<double> w(static_cast<size_t>(vocab));
  for (double& v : w) v = -std::log(1.0 - rng.uniform());
  return Categorical::normalized(std::move(w));
}

double sum(const Categorical& c) {
  double s = 0.0;
  for (double v : c.probs()) s += v;
  return s;
}

}  // namespace

TEST_CASE("normalize divides by the sum") {
  const Categorical a = normalize({2.0, 2.0});
  CHECK(a[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(a[1] == doctest::Approx(0.5).epsilon(1e-15));

  const Categorical b = normalize({1.0, 0.0, 0.0});
  CHECK(b[0] == 1.0);

  const Categorical c = normalize({0.2, 0.0});
  CHECK(c[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(c[1] == 0.0);
}

TEST_CASE("normalize signals all-zero input") {
  CHECK_THROWS_AS(normalize({0.0, 0.0}), AllZeroError);
  CHECK_FALSE(Categorical::try_normalized({0.0, 0.0}).has_value());
  CHECK_THROWS_AS(normalize({-0.5, 1.0}), std::invalid_argument);
}

TEST_CASE("positive residual") {
  const Categorical p = normalize({0.6, 0.4});
  const Categorical q = normalize({0.4, 0.6});
  const Categorical r = positive_residual(p, q);
  CHECK(r[0] == 1.0);
  CHECK(r[1] == 0.0);

  const Categorical u = normalize({0.5, 0.5});
  CHECK_THROWS_AS(positive_residual(u, u), AllZeroError);

  const Categorical pm0 = Categorical::point_mass(2, 0);
  const Categorical pm1 = Categorical::point_mass(2, 1);
  const Categorical d = positive_residual(pm0, pm1);
  CHECK(d[0] == 1.0);
}

TEST_CASE("positive residual has zero mass wherever q >= p") {
  RngStream rng(11);
  for (int i = 0; i < 200; ++i) {
    const Categorical p = random_dist(5, rng);
    const Categorical q = random_dist(5, rng);
    const Categorical r = positive_residual(p, q);
    for (int t = 0; t < 5; ++t) {
      if (q[t] >= p[t]) CHECK(r[t] == 0.0);
    }
  }
}

TEST_CASE("sampling params: identity and argmax") {
  const Categorical p = normalize({0.5, 0.5});
  const Categorical same = apply_sampling_params(p, 1.0, 1.0);
  CHECK(std::abs(same[0] - 0.5) <= 1e-12);

  const Categorical arg = apply_sampling_params(p, 0.0, 1.0);
  CHECK(arg[0] == 1.0);  // lowest id wins ties
  CHECK(arg[1] == 0.0);
}

TEST_CASE("sampling params: nucleus prefix") {
  const Categorical p = normalize({0.7, 0.2, 0.1});
  const Categorical cut = apply_sampling_params(p, 1.0, 0.9);
  CHECK(cut[0] == doctest::Approx(7.0 / 9.0).epsilon(1e-14));
  CHECK(cut[1] == doctest::Approx(2.0 / 9.0).epsilon(1e-14));
  CHECK(cut[2] == 0.0);
}

TEST_CASE("sampling params: identity holds across random distributions") {
  RngStream rng(5);
  for (int i = 0; i < 100; ++i) {
    const Categorical p = random_dist(7, rng);
    const Categorical out = apply_sampling_params(p, 1.0, 1.0);
    for (int t = 0; t < 7; ++t) CHECK(std::abs(out[t] - p[t]) <= 1e-12);
    CHECK(std::abs(sum(out) - 1.0) <= 1e-12);
  }
}

TEST_CASE("temperature sharpens and flattens") {
  const Categorical p = normalize({0.7, 0.3});
  const Categorical sharp = apply_sampling_params(p, 0.5, 1.0);
  CHECK(sharp[0] > 0.7);
  const Categorical flat = apply_sampling_params(p, 2.0, 1.0);
  CHECK(flat[0] < 0.7);
  CHECK(flat[0] > 0.5);
}

TEST_CASE("divergences: closed forms and bounds") {
  const Categorical u4 = Categorical::uniform(4);
  CHECK(entropy(u4) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  const Categorical p = normalize({0.3, 0.7});
  CHECK(kl(p, p) == 0.0);

  const Categorical pm0 = Categorical::point_mass(2, 0);
  const Categorical pm1 = Categorical::point_mass(2, 1);
  CHECK(l1(pm0, pm1) == 2.0);
  CHECK(std::isinf(kl(pm0, pm1)));
}

TEST_CASE("divergence ranges over random pairs") {
  RngStream rng(42);
  for (int i = 0; i < 300; ++i) {
    const Categorical p = random_dist(6, rng);
    const Categorical q = random_dist(6, rng);
    CHECK(std::abs(sum(p) - 1.0) <= 1e-12);
    CHECK(l1(p, q) >= 0.0);
    CHECK(l1(p, q) <= 2.0);
    CHECK(kl(p, q) >= 0.0);
    CHECK(entropy(p) >= 0.0);
    CHECK(entropy(p) <= std::log(6.0) + 1e-12);
  }
}

TEST_CASE("sample: point mass and determinism") {
  RngStream rng(3);
  const Categorical pm = Categorical::point_mass(5, 3);
  for (int i = 0; i < 10; ++i) CHECK(sample(pm, rng) == 3);

  const Categorical p = normalize({0.2, 0.5, 0.3});
  RngStream a(99);
  RngStream b(99);
  for (int i = 0; i < 100; ++i) CHECK(sample(p, a) == sample(p, b));
}

TEST_CASE("sample: frequencies within binomial bound") {
  const Categorical p = normalize({1.0, 1.0});
  RngStream rng(2024);
  const int n = 1000000;
  int ones = 0;
  for (int i = 0; i < n; ++i) ones += sample(p, rng);
  const double freq = static_cast<double>(ones) / n;
  CHECK(std::abs(freq - 0.5) < 0.002);  // 4 sigma = 0.002
}
