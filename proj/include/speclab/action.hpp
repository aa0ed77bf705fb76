// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <string>

namespace speclab {

// Drafting action: branch into k i.i.d. length-l2 continuations after a
// length-l1 trunk.
struct ActionTriple {
  int k = 1;
  int l1 = 0;
  int l2 = 0;

  auto operator<=>(const ActionTriple&) const = default;

  std::string str() const {
    return "(" + std::to_string(k) + "," + std::to_string(l1) + "," + std::to_string(l2) + ")";
  }
};

}  // namespace speclab
