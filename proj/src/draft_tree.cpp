// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

#include "speclab/draft_tree.hpp"

#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace speclab {

DraftTree::DraftTree(std::vector<Token> root_context, ActionTriple params,
                     Categorical root_draft_dist)
    : root_context_(std::move(root_context)), params_(params) {
  add_node({}, std::move(root_draft_dist));
}

const DraftNode& DraftTree::node(const std::vector<Token>& path) const {
  auto it = index_.find(path);
  if (it == index_.end()) throw std::out_of_range("no such draft tree node");
  return nodes_[it->second];
}

DraftNode& DraftTree::node(const std::vector<Token>& path) {
  auto it = index_.find(path);
  if (it == index_.end()) throw std::out_of_range("no such draft tree node");
  return nodes_[it->second];
}

std::vector<Token> DraftTree::context_of(const DraftNode& n) const {
  std::vector<Token> ctx = root_context_;
  ctx.insert(ctx.end(), n.path.begin(), n.path.end());
  return ctx;
}

DraftNode& DraftTree::add_node(std::vector<Token> path, Categorical draft_dist) {
  auto [it, inserted] = index_.emplace(path, nodes_.size());
  if (!inserted) throw std::logic_error("duplicate draft tree node");
  nodes_.push_back(DraftNode{std::move(path), {}, std::move(draft_dist), std::nullopt});
  return nodes_.back();
}

namespace {

// Appends one drafted token at `path`, creating the child node when the path
// is new. Returns the extended path.
std::vector<Token> extend(DraftTree& tree, const NextTokenProvider& draft,
                          const std::vector<Token>& path, RngStream& rng) {
  DraftNode& n = tree.node(path);
  const Token t = sample(n.draft_dist, rng);
  n.children.push_back(t);
  std::vector<Token> child_path = path;
  child_path.push_back(t);
  if (!tree.has_node(child_path)) {
    std::vector<Token> ctx = tree.root_context();
    ctx.insert(ctx.end(), child_path.begin(), child_path.end());
    tree.add_node(child_path, draft.next_dist(ctx));
  }
  return child_path;
}

}  // namespace

DraftTree draft_delayed(const RootedPair& pair, TokenSpan root_context, ActionTriple action,
                        uint64_t seed) {
  if (action.k < 1 || action.l1 < 0 || action.l2 < 0) {
    throw std::invalid_argument("invalid drafting action " + action.str());
  }
  const NextTokenProvider& draft = *pair.draft;
  std::vector<Token> root(root_context.begin(), root_context.end());
  DraftTree tree(root, action, draft.next_dist(root_context));

  RngStream trunk_rng(derive_seed(seed, 0));
  std::vector<Token> branch_path;
  for (int i = 0; i < action.l1; ++i) {
    branch_path = extend(tree, draft, branch_path, trunk_rng);
  }

  for (int b = 0; b < action.k; ++b) {
    RngStream branch_rng(derive_seed(seed, 1 + static_cast<uint64_t>(b)));
    std::vector<Token> path = branch_path;
    for (int j = 0; j < action.l2; ++j) {
      path = extend(tree, draft, path, branch_rng);
    }
  }
  return tree;
}

std::vector<Token> sample_draft_path(const NextTokenProvider& draft, TokenSpan root_context,
                                     int length, uint64_t seed) {
  RngStream rng(seed);
  std::vector<Token> ctx(root_context.begin(), root_context.end());
  std::vector<Token> path;
  for (int i = 0; i < length; ++i) {
    const Token t = sample(draft.next_dist(ctx), rng);
    path.push_back(t);
    ctx.push_back(t);
  }
  return path;
}

void attach_target_dists(DraftTree& tree, const NextTokenProvider& target) {
  for (size_t i = 0; i < tree.nodes().size(); ++i) {
    DraftNode& n = tree.node(tree.nodes()[i].path);
    n.target_dist = target.next_dist(tree.context_of(n));
  }
}

void dump_tree_jsonl(const DraftTree& tree, std::ostream& out) {
  for (const DraftNode& n : tree.nodes()) {
    nlohmann::ordered_json rec;
    rec["path"] = n.path;
    nlohmann::ordered_json children = nlohmann::ordered_json::array();
    // Children in drafting order, collapsed into (token, multiplicity) runs.
    std::vector<std::pair<Token, int>> runs;
    for (Token t : n.children) {
      bool found = false;
      for (auto& [tok, mult] : runs) {
        if (tok == t) {
          ++mult;
          found = true;
          break;
        }
      }
      if (!found) runs.emplace_back(t, 1);
    }
    for (const auto& [tok, mult] : runs) children.push_back({tok, mult});
    rec["children"] = std::move(children);
    rec["q"] = n.draft_dist.probs();
    if (n.target_dist) {
      rec["p"] = n.target_dist->probs();
    } else {
      rec["p"] = nullptr;
    }
    out << rec.dump() << "\n";
  }
}

}  // namespace speclab
