// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "speclab/config.hpp"

namespace speclab {

// Exit codes: 0 success, 1 property failure, 2 usage/config error.
int cmd_lossless(const ExperimentConfig& config);
int cmd_bench(const ExperimentConfig& config);
int cmd_profile(const ExperimentConfig& config);
int cmd_trace(const ExperimentConfig& config);
int cmd_train(const ExperimentConfig& config);
int cmd_eval(const ExperimentConfig& config);

}  // namespace speclab
