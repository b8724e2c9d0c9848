#pragma once

// Budgeted depth-first construction of a reasoning tree.
//
// Each node keeps an attempt counter. Rejected extensions, protocol
// violations and rejected finishes charge the frontier; an accepted backtrack
// charges its target (the child subtree was a failed attempt of the target).
// When a node's counter reaches the budget the engine either forces a
// backtrack to the parent or, with forced backtracks disabled, halts.

#include "var/proposal.hpp"
#include "var/reward.hpp"
#include "var/rng.hpp"
#include "var/tree.hpp"

#include <concepts>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace var {

struct SearchConfig {
  std::size_t t_max = 10;
  std::size_t budget_b = 3;
  Thresholds thresholds;
  /// Node-creation cap; 0 selects 10 * budget_b * t_max.
  std::size_t max_total_expansions = 0;
  std::uint64_t seed = 0;
  /// false: budget or depth exhaustion never produces a synthetic backtrack.
  /// This is the setting the probability bound is stated for.
  bool forced_backtracks = true;
  /// Experimental: hand the whole tree to the policy, not just the active path.
  bool full_tree_context = false;

  std::size_t expansion_cap() const noexcept {
    return max_total_expansions ? max_total_expansions : 10 * budget_b * t_max;
  }

  void validate() const {
    if (t_max < 2) throw std::invalid_argument("t_max must be at least 2");
    if (budget_b < 1) throw std::invalid_argument("budget_b must be at least 1");
    thresholds.validate();
  }
};

/// (B - 1)(T_max - 1): the backtrack-leaf ceiling for recovery-reliable policies.
constexpr std::size_t leaf_bound(std::size_t t_max, std::size_t budget_b) noexcept {
  return (budget_b - 1) * (t_max - 1);
}

struct PolicyContext {
  std::span<const PathEntry> path;
  /// Attempts already charged at the frontier.
  std::size_t attempt = 0;
  std::size_t depth = 0;
  std::size_t t_max = 0;
  /// Set only when SearchConfig::full_tree_context is on.
  const ReasoningTree* tree = nullptr;
};

template <class P>
concept Policy = requires(P& p, const PolicyContext& ctx, Rng& rng) {
  { p.propose(ctx, rng) } -> std::convertible_to<StepProposal>;
};

enum class SearchStatus { Solved, BudgetExhausted, GlobalCapReached };

inline const char* status_name(SearchStatus s) noexcept {
  switch (s) {
    case SearchStatus::Solved: return "Solved";
    case SearchStatus::BudgetExhausted: return "BudgetExhausted";
    case SearchStatus::GlobalCapReached: return "GlobalCapReached";
  }
  return "?";
}

struct SearchStats {
  std::size_t expansions = 0;  ///< node creations, markers included
  std::size_t marker_nodes = 0;  ///< empty leaves made by forced backtracks
  std::size_t backtracks = 0;  ///< accepted policy backtracks
  std::size_t forced_backtracks = 0;
  std::size_t protocol_violations = 0;
  std::size_t rejected = 0;  ///< validator rejections
  std::size_t max_depth_reached = 0;
  std::size_t policy_steps = 0;

  friend bool operator==(const SearchStats&, const SearchStats&) = default;
};

struct SearchOutcome {
  ReasoningTree tree;
  SearchStatus status = SearchStatus::BudgetExhausted;
  std::vector<std::string> cot;  ///< empty unless Solved
  SearchStats stats;
};

inline bool same_outcome(const SearchOutcome& a, const SearchOutcome& b) {
  return a.status == b.status && a.cot == b.cot && a.stats == b.stats && isomorphic(a.tree, b.tree);
}

/// One policy proposal and what the engine made of it.
struct SearchEvent {
  std::size_t step = 0;
  std::size_t depth = 0;
  NodeId node;
  StepProposal proposal;
  std::string verdict;
  std::size_t attempt = 0;

  friend bool operator==(const SearchEvent&, const SearchEvent&) = default;
};

struct SearchTrace {
  SearchOutcome outcome;
  std::vector<SearchEvent> events;
};

namespace detail {

template <Policy P, StepValidator V>
class SearchRun {
 public:
  SearchRun(P& policy, V& validator, const SearchConfig& config, std::string root,
            std::vector<SearchEvent>* log)
      : policy_(policy), validator_(validator), cfg_(config), log_(log), rng_(config.seed) {
    cfg_.validate();
    out_.tree = ReasoningTree(std::move(root));
    attempts_.push_back(0);
  }

  SearchOutcome run() {
    while (!end_) step();
    out_.status = *end_;
    if (*end_ == SearchStatus::Solved) {
      out_.cot = std::get<std::vector<std::string>>(out_.tree.extract_cot());
    }
    return std::move(out_);
  }

 private:
  ReasoningTree& tree() { return out_.tree; }

  void step() {
    const NodeId f = tree().frontier();
    const std::vector<PathEntry> path = tree().active_path();
    const std::size_t depth = path.size() - 1;
    PolicyContext ctx{path, attempts_[f.value], depth, cfg_.t_max,
                      cfg_.full_tree_context ? &out_.tree : nullptr};
    StepProposal proposal = policy_.propose(ctx, rng_);
    ++out_.stats.policy_steps;
    SearchEvent ev{step_++, depth, f, proposal, {}, attempts_[f.value]};

    auto violation = [&](const char* what) {
      ev.verdict = std::string("violation:") + what;
      ++out_.stats.protocol_violations;
    };

    switch (proposal.kind) {
      case StepProposal::Kind::Extend: {
        if (depth >= cfg_.t_max) {
          violation("depth_limit");
          record(std::move(ev));
          if (cfg_.forced_backtracks) {
            force_backtrack(f);
          } else {
            charge(f);
          }
          return;
        }
        const Verdict v = validate_step(path, proposal, cfg_.thresholds, validator_);
        if (!v.pass()) {
          ev.verdict = std::string("rejected:") + fail_reason_name(v.reason);
          ++out_.stats.rejected;
          record(std::move(ev));
          charge(f);
          return;
        }
        if (!create_node(std::move(proposal.proposition))) {
          ev.verdict = "halted:cap";
          record(std::move(ev));
          return;
        }
        ev.verdict = "accepted";
        record(std::move(ev));
        return;
      }
      case StepProposal::Kind::BacktrackTo: {
        const NodeId t = proposal.target;
        if (t.value >= tree().size() || !tree().is_strict_ancestor(t, f)) {
          violation("not_ancestor");
          record(std::move(ev));
          charge(f);
          return;
        }
        if (!tree().node(f).children.empty()) {
          violation("not_leaf");
          record(std::move(ev));
          charge(f);
          return;
        }
        if (!cfg_.forced_backtracks && attempts_[t.value] + 1 >= cfg_.budget_b) {
          // No attempt left at the target to retry with.
          ev.verdict = "halted:budget";
          record(std::move(ev));
          end_ = SearchStatus::BudgetExhausted;
          return;
        }
        tree().mark_backtrack(t);
        ++out_.stats.backtracks;
        ev.verdict = "accepted";
        record(std::move(ev));
        charge(t);
        return;
      }
      case StepProposal::Kind::Finish: {
        if (f == kRoot) {
          violation("finish_at_root");
          record(std::move(ev));
          charge(f);
          return;
        }
        if (!tree().node(f).children.empty()) {
          violation("not_leaf");
          record(std::move(ev));
          charge(f);
          return;
        }
        const Verdict v = validate_step(path, proposal, cfg_.thresholds, validator_);
        if (!v.pass()) {
          ev.verdict = std::string("rejected:") + fail_reason_name(v.reason);
          ++out_.stats.rejected;
          record(std::move(ev));
          charge(f);
          return;
        }
        tree().mark_done();
        ev.verdict = "accepted";
        record(std::move(ev));
        end_ = SearchStatus::Solved;
        return;
      }
    }
  }

  void record(SearchEvent ev) {
    if (log_) log_->push_back(std::move(ev));
  }

  bool create_node(std::string proposition) {
    if (out_.stats.expansions >= cfg_.expansion_cap()) {
      end_ = SearchStatus::GlobalCapReached;
      return false;
    }
    const NodeId id = tree().extend(std::move(proposition));
    attempts_.push_back(0);
    ++out_.stats.expansions;
    out_.stats.max_depth_reached = std::max(out_.stats.max_depth_reached, tree().depth(id));
    return true;
  }

  // Charges one failed attempt to `node`, which is always the frontier.
  void charge(NodeId node) {
    if (++attempts_[node.value] < cfg_.budget_b) return;
    if (!cfg_.forced_backtracks) {
      end_ = SearchStatus::BudgetExhausted;
      return;
    }
    force_backtrack(node);
  }

  // Abandons the frontier for its parent. A childless frontier becomes the
  // backtrack leaf itself; otherwise an empty marker child carries it.
  void force_backtrack(NodeId f) {
    const auto parent = tree().node(f).parent;
    if (!parent) {
      end_ = SearchStatus::BudgetExhausted;
      return;
    }
    if (!tree().node(f).children.empty()) {
      if (!create_node({})) return;
      ++out_.stats.marker_nodes;
    }
    tree().mark_backtrack(*parent);
    ++out_.stats.forced_backtracks;
    charge(*parent);
  }

  P& policy_;
  V& validator_;
  SearchConfig cfg_;
  std::vector<SearchEvent>* log_;
  Rng rng_;
  SearchOutcome out_;
  std::vector<std::size_t> attempts_;
  std::size_t step_ = 0;
  std::optional<SearchStatus> end_;
};

}  // namespace detail

template <Policy P, StepValidator V>
SearchOutcome run_search(P& policy, V& validator, const SearchConfig& config, std::string root) {
  return detail::SearchRun<P, V>(policy, validator, config, std::move(root), nullptr).run();
}

/// run_search plus the ordered proposal log.
template <Policy P, StepValidator V>
SearchTrace trace_search(P& policy, V& validator, const SearchConfig& config, std::string root) {
  SearchTrace trace;
  trace.outcome =
      detail::SearchRun<P, V>(policy, validator, config, std::move(root), &trace.events).run();
  return trace;
}

/// Replays a fixed proposal list; once it runs out every step proposes Finish,
/// which the engine charges until the budget ends the run.
class ScriptedPolicy {
 public:
  explicit ScriptedPolicy(std::vector<StepProposal> script) : script_(std::move(script)) {}

  static ScriptedPolicy from_events(const std::vector<SearchEvent>& events) {
    std::vector<StepProposal> s;
    s.reserve(events.size());
    for (const auto& e : events) s.push_back(e.proposal);
    return ScriptedPolicy(std::move(s));
  }

  StepProposal propose(const PolicyContext&, Rng&) {
    if (next_ < script_.size()) return script_[next_++];
    return StepProposal::finish();
  }

 private:
  std::vector<StepProposal> script_;
  std::size_t next_ = 0;
};

}  // namespace var
