// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

// Compares the serial reference kernels against their OpenMP counterparts
// and checks that both produce identical results.

#include <chrono>
#include <cstdio>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "speclab/analytics.hpp"
#include "speclab/config.hpp"
#include "speclab/selector.hpp"

using namespace speclab;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

template <typename F>
double timed(F&& f) {
  const double start = now_seconds();
  f();
  return now_seconds() - start;
}

void report(const char* kernel, double serial_s, double parallel_s, bool identical) {
  std::printf("%-28s serial %8.3fs  parallel %8.3fs  speedup %5.2fx  identical=%s\n", kernel,
              serial_s, parallel_s, serial_s / parallel_s, identical ? "yes" : "NO");
}

}  // namespace

int main(int argc, char** argv) {
  uint64_t seed = 7;
  int threads = 0;
  for (int i = 1; i < argc - 1; ++i) {
    if (std::strcmp(argv[i], "--seed") == 0) seed = std::strtoull(argv[i + 1], nullptr, 10);
    if (std::strcmp(argv[i], "--threads") == 0) threads = std::atoi(argv[i + 1]);
  }
#ifdef _OPENMP
  std::printf("openmp max threads: %d (requested %d)\n", omp_get_max_threads(), threads);
#endif

  const auto target = make_random_table_provider(24, derive_seed(seed, 1), 1.5);
  const auto source = std::make_shared<SyntheticPair>(target, 0.1, 0.03);
  const auto prompts = roll_prompts(*target, 512, 8, derive_seed(seed, 2));

  {
    DepthProfile serial_out, parallel_out;
    const std::vector<int> ks{1, 2, 4};
    const std::vector<OtlpMethod> methods{OtlpMethod::kNss, OtlpMethod::kNaive,
                                          OtlpMethod::kSpecTr, OtlpMethod::kSpecInfer};
    const double ts = timed([&] {
      serial_out = depth_profile_serial(*source, prompts, 8, ks, methods, derive_seed(seed, 3));
    });
    const double tp = timed([&] {
      parallel_out = depth_profile(*source, prompts, 8, ks, methods, derive_seed(seed, 3), threads);
    });
    report("depth_profile", ts, tp,
           serial_out.mean_l1 == parallel_out.mean_l1 &&
               serial_out.mean_acceptance == parallel_out.mean_acceptance);
  }

  {
    double serial_out = 0.0, parallel_out = 0.0;
    const ActionTriple action{4, 2, 6};
    const double ts = timed([&] {
      for (int r = 0; r < 64; ++r) {
        serial_out += estimate_block_efficiency_serial(*source, prompts[static_cast<size_t>(r)],
                                                       action, OtlpMethod::kSpecInfer, 64,
                                                       derive_seed(seed, 4, static_cast<uint64_t>(r)));
      }
    });
    const double tp = timed([&] {
      for (int r = 0; r < 64; ++r) {
        parallel_out += estimate_block_efficiency(*source, prompts[static_cast<size_t>(r)], action,
                                                  OtlpMethod::kSpecInfer, 64,
                                                  derive_seed(seed, 4, static_cast<uint64_t>(r)),
                                                  threads);
      }
    });
    report("estimate_block_efficiency", ts, tp, serial_out == parallel_out);
  }

  {
    TraceGenConfig gen;
    gen.actions = {{1, 0, 0}, {1, 0, 4}, {2, 1, 2}, {2, 2, 4}, {4, 0, 4}, {4, 2, 8}};
    gen.stride = 16;
    gen.s = 4;
    gen.trajectory_len = 64;
    gen.seed = derive_seed(seed, 5);
    const std::vector<std::vector<Token>> few(prompts.begin(), prompts.begin() + 96);

    TraceDataset serial_out, parallel_out;
    const double ts = timed([&] { serial_out = generate_traces_serial(*source, few, gen); });
    gen.threads = threads;
    const double tp = timed([&] { parallel_out = generate_traces(*source, few, gen); });
    bool identical = serial_out.records.size() == parallel_out.records.size();
    for (size_t i = 0; identical && i < serial_out.records.size(); ++i) {
      identical = serial_out.records[i].e_block == parallel_out.records[i].e_block &&
                  serial_out.records[i].base_action == parallel_out.records[i].base_action;
    }
    report("generate_traces", ts, tp, identical);
  }

  return 0;
}
