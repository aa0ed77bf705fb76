// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <optional>
#include <unordered_map>
#include <vector>

#include "speclab/action.hpp"
#include "speclab/toy_models.hpp"

namespace speclab {

// One draft tree node, keyed by its token path from the root context.
// Children are ordered and may contain duplicates: the multiplicity of a
// child equals the number of sampled paths passing through it, in drafting
// order.
struct DraftNode {
  std::vector<Token> path;
  std::vector<Token> children;
  Categorical draft_dist;
  std::optional<Categorical> target_dist;
};

class DraftTree {
 public:
  DraftTree(std::vector<Token> root_context, ActionTriple params, Categorical root_draft_dist);

  const std::vector<Token>& root_context() const { return root_context_; }
  ActionTriple params() const { return params_; }

  bool has_node(const std::vector<Token>& path) const { return index_.count(path) > 0; }
  const DraftNode& node(const std::vector<Token>& path) const;
  DraftNode& node(const std::vector<Token>& path);
  const DraftNode& root() const { return nodes_.front(); }

  // Nodes in creation order (root first); the order is deterministic for a
  // fixed seed.
  const std::vector<DraftNode>& nodes() const { return nodes_; }
  size_t node_count() const { return nodes_.size(); }

  // Absolute context of a node: root_context + path.
  std::vector<Token> context_of(const DraftNode& n) const;

  DraftNode& add_node(std::vector<Token> path, Categorical draft_dist);

 private:
  std::vector<Token> root_context_;
  ActionTriple params_;
  std::vector<DraftNode> nodes_;
  std::unordered_map<std::vector<Token>, size_t, VecTokenHash> index_;
};

// Samples a length-l1 trunk from the draft model, then k independent
// length-l2 continuations at the branch node. Stores q(.|path) at every node
// (one extra draft call covers the root). Branch b consumes the derived seed
// derive_seed(seed, 1 + b); the trunk consumes derive_seed(seed, 0).
DraftTree draft_delayed(const RootedPair& pair, TokenSpan root_context, ActionTriple action,
                        uint64_t seed);

// Reference single-path sampler; draft_delayed branch b with seed s follows
// exactly the stream of sample_draft_path(draft, branch_context, l2,
// derive_seed(s, 1 + b)).
std::vector<Token> sample_draft_path(const NextTokenProvider& draft, TokenSpan root_context,
                                     int length, uint64_t seed);

// Populates target_dist at every node, root included. Idempotent; the node
// set is unchanged.
void attach_target_dists(DraftTree& tree, const NextTokenProvider& target);

// One structured record per node: path, children with multiplicity, both
// distributions. Line-delimited.
void dump_tree_jsonl(const DraftTree& tree, std::ostream& out);

}  // namespace speclab
