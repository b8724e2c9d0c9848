#pragma once

// Reasoning tree built from path events. Node ids are insertion-order
// naturals, so the label map is the identity on 0..size()-1 and the root is 0.

#include "var/grammar.hpp"

#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <variant>
#include <utility>
#include <vector>

namespace var {

struct NodeId {
  std::uint64_t value = 0;

  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

inline constexpr NodeId kRoot{0};

enum class NodeKind { Internal, DoneLeaf, BacktrackLeaf };

struct TreeNode {
  NodeId id;
  std::string proposition;
  std::optional<NodeId> parent;
  std::vector<NodeId> children;
  NodeKind kind = NodeKind::Internal;
  /// Only meaningful for BacktrackLeaf.
  NodeId target;

  bool terminal() const noexcept { return kind != NodeKind::Internal; }
};

enum class TreeErrorKind {
  FinalizedTree,
  FrontierIsTerminal,
  FrontierHasChildren,
  DoneAtRoot,
  NotAnAncestor,
  UnknownId,
};

inline const char* tree_error_name(TreeErrorKind k) noexcept {
  switch (k) {
    case TreeErrorKind::FinalizedTree: return "FinalizedTree";
    case TreeErrorKind::FrontierIsTerminal: return "FrontierIsTerminal";
    case TreeErrorKind::FrontierHasChildren: return "FrontierHasChildren";
    case TreeErrorKind::DoneAtRoot: return "DoneAtRoot";
    case TreeErrorKind::NotAnAncestor: return "NotAnAncestor";
    case TreeErrorKind::UnknownId: return "UnknownId";
  }
  return "?";
}

class TreeError : public std::logic_error {
 public:
  TreeError(TreeErrorKind kind, const std::string& what)
      : std::logic_error(std::string(tree_error_name(kind)) + ": " + what), kind_(kind) {}

  TreeErrorKind kind() const noexcept { return kind_; }

 private:
  TreeErrorKind kind_;
};

struct PathEntry {
  NodeId id;
  std::string proposition;

  friend bool operator==(const PathEntry&, const PathEntry&) = default;
};

/// Returned by extract_cot when the tree has no done leaf.
struct NotSolved {};

class ReasoningTree {
 public:
  explicit ReasoningTree(std::string root_proposition = {}) {
    nodes_.push_back(TreeNode{kRoot, std::move(root_proposition), std::nullopt, {},
                              NodeKind::Internal, kRoot});
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  NodeId frontier() const noexcept { return frontier_; }
  bool finalized() const noexcept { return finalized_; }
  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }

  const TreeNode& node(NodeId id) const {
    if (id.value >= nodes_.size()) {
      throw TreeError(TreeErrorKind::UnknownId, "no node " + std::to_string(id.value));
    }
    return nodes_[id.value];
  }

  std::size_t depth(NodeId id) const {
    std::size_t d = 0;
    for (auto p = node(id).parent; p; p = nodes_[p->value].parent) ++d;
    return d;
  }

  /// Appends a fresh Internal child to the frontier and moves the frontier to it.
  NodeId extend(std::string proposition) {
    require_open();
    const TreeNode& f = nodes_[frontier_.value];
    if (f.terminal()) throw TreeError(TreeErrorKind::FrontierIsTerminal, "frontier is a leaf");
    const NodeId id{nodes_.size()};
    nodes_.push_back(
        TreeNode{id, std::move(proposition), frontier_, {}, NodeKind::Internal, kRoot});
    nodes_[frontier_.value].children.push_back(id);
    frontier_ = id;
    return id;
  }

  /// Turns the frontier into the single done leaf and finalizes the tree.
  void mark_done() {
    require_open();
    require_leaf_frontier();
    if (frontier_ == kRoot) throw TreeError(TreeErrorKind::DoneAtRoot, "root cannot be a solution");
    nodes_[frontier_.value].kind = NodeKind::DoneLeaf;
    finalized_ = true;
  }

  /// Turns the frontier into a backtrack leaf pointing at `target`, a strict
  /// ancestor, and resets the frontier to `target`.
  void mark_backtrack(NodeId target) {
    require_open();
    if (target.value >= nodes_.size() || !is_strict_ancestor(target, frontier_)) {
      throw TreeError(TreeErrorKind::NotAnAncestor,
                      std::to_string(target.value) + " is not a strict ancestor of " +
                          std::to_string(frontier_.value));
    }
    require_leaf_frontier();
    TreeNode& f = nodes_[frontier_.value];
    f.kind = NodeKind::BacktrackLeaf;
    f.target = target;
    frontier_ = target;
  }

  bool is_strict_ancestor(NodeId candidate, NodeId of) const {
    for (auto p = node(of).parent; p; p = nodes_[p->value].parent) {
      if (*p == candidate) return true;
    }
    return false;
  }

  /// Root-first path to the parent of `id`.
  std::vector<NodeId> ancestors(NodeId id) const {
    std::vector<NodeId> out;
    for (auto p = node(id).parent; p; p = nodes_[p->value].parent) out.push_back(*p);
    return {out.rbegin(), out.rend()};
  }

  /// Root-to-frontier propositions; the only context handed to policies.
  std::vector<PathEntry> active_path() const {
    std::vector<PathEntry> out;
    for (NodeId id : ancestors(frontier_)) out.push_back({id, nodes_[id.value].proposition});
    out.push_back({frontier_, nodes_[frontier_.value].proposition});
    return out;
  }

  std::size_t count_backtrack_leaves() const noexcept {
    std::size_t n = 0;
    for (const auto& v : nodes_) n += v.kind == NodeKind::BacktrackLeaf;
    return n;
  }

  std::size_t count_done_leaves() const noexcept {
    std::size_t n = 0;
    for (const auto& v : nodes_) n += v.kind == NodeKind::DoneLeaf;
    return n;
  }

  /// Propositions from the first step to the done leaf.
  std::variant<std::vector<std::string>, NotSolved> extract_cot() const {
    if (!finalized_) return NotSolved{};
    std::vector<std::string> cot;
    for (NodeId id : ancestors(frontier_)) {
      if (id != kRoot) cot.push_back(nodes_[id.value].proposition);
    }
    cot.push_back(nodes_[frontier_.value].proposition);
    return cot;
  }

  /// Full exploration history in generation order.
  std::vector<grammar::ThinkEvent> to_think_events() const {
    return events_from(kRoot);
  }

 private:
  void require_open() const {
    if (finalized_) throw TreeError(TreeErrorKind::FinalizedTree, "tree is finalized");
  }

  void require_leaf_frontier() const {
    const TreeNode& f = nodes_[frontier_.value];
    if (f.terminal()) throw TreeError(TreeErrorKind::FrontierIsTerminal, "frontier is a leaf");
    if (!f.children.empty()) {
      throw TreeError(TreeErrorKind::FrontierHasChildren,
                      "node " + std::to_string(frontier_.value) + " already has children");
    }
  }

  // Children are created in id order and a subtree is always finished
  // (closed by a backtrack or done) before its parent gets the next child, so
  // a pre-order walk in child order reproduces generation order.
  std::vector<grammar::ThinkEvent> events_from(NodeId id) const {
    std::vector<grammar::ThinkEvent> out;
    for (NodeId c : nodes_[id.value].children) {
      const TreeNode& child = nodes_[c.value];
      out.push_back(grammar::ThinkEvent::step(c.value, child.proposition));
      auto sub = events_from(c);
      out.insert(out.end(), std::make_move_iterator(sub.begin()),
                 std::make_move_iterator(sub.end()));
      if (child.kind == NodeKind::BacktrackLeaf) {
        out.push_back(grammar::ThinkEvent::backtrack_to(child.target.value));
      } else if (child.kind == NodeKind::DoneLeaf) {
        out.push_back(grammar::ThinkEvent::done());
      }
    }
    return out;
  }

  std::vector<TreeNode> nodes_;
  NodeId frontier_ = kRoot;
  bool finalized_ = false;
};

/// Rebuilds a tree from think events. Step labels are mapped to fresh ids in
/// order of appearance, so documents with non-consecutive labels replay too.
/// Throws TreeError on protocol violations.
inline ReasoningTree replay(const std::vector<grammar::ThinkEvent>& events,
                            std::string root_proposition = {}) {
  ReasoningTree tree(std::move(root_proposition));
  std::unordered_map<std::uint64_t, NodeId> ids{{0, kRoot}};
  for (const auto& e : events) {
    switch (e.kind) {
      case grammar::ThinkEvent::Kind::Step:
        ids[e.label] = tree.extend(e.proposition);
        break;
      case grammar::ThinkEvent::Kind::BacktrackTo: {
        auto it = ids.find(e.target());
        if (it == ids.end()) {
          throw TreeError(TreeErrorKind::UnknownId, "no node labelled " + std::to_string(e.target()));
        }
        tree.mark_backtrack(it->second);
        break;
      }
      case grammar::ThinkEvent::Kind::Done:
        tree.mark_done();
        break;
    }
  }
  return tree;
}

/// Same shape, kinds, targets and propositions.
inline bool isomorphic(const ReasoningTree& a, const ReasoningTree& b) {
  if (a.size() != b.size() || a.frontier() != b.frontier() || a.finalized() != b.finalized()) {
    return false;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a.nodes()[i];
    const auto& y = b.nodes()[i];
    if (x.parent != y.parent || x.children != y.children || x.kind != y.kind ||
        x.proposition != y.proposition) {
      return false;
    }
    if (x.kind == NodeKind::BacktrackLeaf && x.target != y.target) return false;
  }
  return true;
}

}  // namespace var
