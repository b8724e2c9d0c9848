#include "var/lemma.hpp"
#include "var/search.hpp"

#include <gtest/gtest.h>

using namespace var;

namespace {

/// Extends along a fixed chain, then finishes.
struct ChainPolicy {
  std::vector<std::string> chain;
  StepProposal propose(const PolicyContext& ctx, Rng&) {
    if (ctx.depth < chain.size()) return StepProposal::extend(chain[ctx.depth]);
    return StepProposal::finish();
  }
};

/// Extends "a" at the root; proposes "bad" everywhere else.
struct StuckPolicy {
  StepProposal propose(const PolicyContext& ctx, Rng&) {
    return StepProposal::extend(ctx.depth == 0 ? "a" : "bad");
  }
};

struct RejectBad {
  StepAssessment assess(std::span<const PathEntry>, const StepProposal& p) const {
    StepAssessment a;
    if (p.kind == StepProposal::Kind::Extend) a.semantic = p.proposition == "bad" ? 0.0 : 1.0;
    return a;
  }
};

/// Uniformly random proposals, including illegal ones.
struct RandomPolicy {
  StepProposal propose(const PolicyContext& ctx, Rng& rng) {
    switch (rng.below(4)) {
      case 0:
      case 1: return StepProposal::extend(rng.bernoulli(0.3) ? "bad" : "s");
      case 2: return StepProposal::backtrack_to(NodeId{rng.below(ctx.path.back().id.value + 2)});
      default: return StepProposal::finish();
    }
  }
};

std::vector<std::string> verdicts(const SearchTrace& t) {
  std::vector<std::string> v;
  for (const auto& e : t.events) v.push_back(e.verdict);
  return v;
}

std::size_t count_verdicts(const SearchTrace& t, std::string_view prefix) {
  std::size_t n = 0;
  for (const auto& e : t.events) n += e.verdict.rfind(prefix, 0) == 0;
  return n;
}

// Every proposal ends in exactly one verdict class.
void expect_event_identity(const SearchTrace& t) {
  const auto& s = t.outcome.stats;
  ASSERT_EQ(t.events.size(), s.policy_steps);
  const std::size_t solved = t.outcome.status == SearchStatus::Solved ? 1 : 0;
  const std::size_t accepted_extends = s.expansions - s.marker_nodes;
  EXPECT_EQ(count_verdicts(t, "accepted"), accepted_extends + s.backtracks + solved);
  EXPECT_EQ(count_verdicts(t, "rejected:"), s.rejected);
  EXPECT_EQ(count_verdicts(t, "violation:"), s.protocol_violations);
  EXPECT_EQ(s.policy_steps, accepted_extends + s.backtracks + solved + s.rejected + s.protocol_violations +
                                count_verdicts(t, "halted:"));
}

}  // namespace

TEST(Search, CorrectChainSolvesWithoutBacktracks) {
  ChainPolicy p{{"s1", "s2", "s3"}};
  PermissiveValidator v;
  SearchConfig c;
  c.t_max = 5;
  c.budget_b = 3;
  const auto t = trace_search(p, v, c, "Q");
  EXPECT_EQ(t.outcome.status, SearchStatus::Solved);
  EXPECT_EQ(t.outcome.cot, (std::vector<std::string>{"s1", "s2", "s3"}));
  EXPECT_EQ(t.outcome.tree.count_backtrack_leaves(), 0u);
  EXPECT_EQ(t.outcome.stats.backtracks + t.outcome.stats.forced_backtracks, 0u);
  EXPECT_TRUE(t.outcome.tree.finalized());
  expect_event_identity(t);
}

TEST(Search, StuckAtDepthOneHandTrace) {
  StuckPolicy p;
  RejectBad v;
  SearchConfig c;
  c.t_max = 5;
  c.budget_b = 2;
  const auto t = trace_search(p, v, c, "Q");
  EXPECT_EQ(t.outcome.status, SearchStatus::BudgetExhausted);
  EXPECT_EQ(verdicts(t), (std::vector<std::string>{"accepted", "rejected:semantic", "rejected:semantic", "accepted",
                                                   "rejected:semantic", "rejected:semantic"}));
  const auto& tree = t.outcome.tree;
  ASSERT_EQ(tree.size(), 3u);
  EXPECT_EQ(tree.node(NodeId{1}).kind, NodeKind::BacktrackLeaf);
  EXPECT_EQ(tree.node(NodeId{2}).kind, NodeKind::BacktrackLeaf);
  EXPECT_EQ(tree.count_backtrack_leaves(), 2u);
  EXPECT_LE(tree.count_backtrack_leaves(), leaf_bound(5, 2));
  EXPECT_EQ(t.outcome.stats.forced_backtracks, 2u);
  EXPECT_EQ(t.outcome.stats.rejected, 4u);
  EXPECT_EQ(t.events[2].attempt, 1u);
  EXPECT_TRUE(t.outcome.cot.empty());
  expect_event_identity(t);
}

TEST(Search, DepthLimitForcesBacktrack) {
  struct Deep {
    StepProposal propose(const PolicyContext&, Rng&) { return StepProposal::extend("x"); }
  } p;
  PermissiveValidator v;
  SearchConfig c;
  c.t_max = 3;
  c.budget_b = 2;
  const auto t = trace_search(p, v, c, "Q");
  EXPECT_EQ(t.outcome.status, SearchStatus::BudgetExhausted);
  EXPECT_LE(t.outcome.stats.max_depth_reached, 3u);
  EXPECT_GT(count_verdicts(t, "violation:depth_limit"), 0u);
  expect_event_identity(t);

  c.forced_backtracks = false;
  const auto l = trace_search(p, v, c, "Q");
  EXPECT_EQ(l.outcome.status, SearchStatus::BudgetExhausted);
  EXPECT_EQ(count_verdicts(l, "violation:depth_limit"), 2u);
  EXPECT_EQ(l.outcome.tree.count_backtrack_leaves(), 0u);
}

TEST(Search, ViolationsChargeTheFrontier) {
  ScriptedPolicy p({StepProposal::finish(), StepProposal::extend("a"), StepProposal::backtrack_to(NodeId{1}),
                    StepProposal::backtrack_to(NodeId{7}), StepProposal::extend("b"),
                    StepProposal::backtrack_to(NodeId{1}), StepProposal::backtrack_to(kRoot),
                    StepProposal::finish()});
  PermissiveValidator v;
  SearchConfig c;
  c.budget_b = 5;
  const auto t = trace_search(p, v, c, "Q");
  EXPECT_EQ(verdicts(t), (std::vector<std::string>{"violation:finish_at_root", "accepted", "violation:not_ancestor",
                                                   "violation:not_ancestor", "accepted", "accepted",
                                                   "violation:not_leaf", "violation:not_leaf",
                                                   // node 1 ran out; the script is spent and finishes at the root
                                                   "violation:finish_at_root", "violation:finish_at_root",
                                                   "violation:finish_at_root"}));
  EXPECT_EQ(t.events[3].attempt, 1u);
  EXPECT_EQ(t.events[6].node, NodeId{1});
  EXPECT_EQ(t.events[6].attempt, 3u);  // two violations plus the accepted backtrack into it
  EXPECT_EQ(t.outcome.stats.marker_nodes, 1u);
  EXPECT_EQ(t.outcome.status, SearchStatus::BudgetExhausted);
  expect_event_identity(t);
}

TEST(Search, ForcedBacktrackFromInnerNodeUsesMarker) {
  ScriptedPolicy p({StepProposal::extend("a"), StepProposal::extend("b"), StepProposal::backtrack_to(NodeId{1}),
                    StepProposal::extend("bad")});
  RejectBad v;
  SearchConfig c;
  c.budget_b = 2;
  const auto t = trace_search(p, v, c, "Q");
  const auto& tree = t.outcome.tree;
  ASSERT_EQ(tree.size(), 4u);
  EXPECT_EQ(tree.node(NodeId{3}).proposition, "");
  EXPECT_EQ(tree.node(NodeId{3}).parent, NodeId{1});
  EXPECT_EQ(tree.node(NodeId{3}).kind, NodeKind::BacktrackLeaf);
  EXPECT_EQ(tree.node(NodeId{3}).target, kRoot);
  EXPECT_EQ(t.outcome.stats.marker_nodes, 1u);
  EXPECT_EQ(t.outcome.status, SearchStatus::BudgetExhausted);
  EXPECT_TRUE(isomorphic(replay(tree.to_think_events(), "Q"), tree));
  expect_event_identity(t);
}

TEST(Search, LemmaModeHaltsBeforeExhaustingBacktrack) {
  ScriptedPolicy p({StepProposal::extend("w1"), StepProposal::backtrack_to(kRoot), StepProposal::extend("w2"),
                    StepProposal::backtrack_to(kRoot)});
  PermissiveValidator v;
  SearchConfig c;
  c.budget_b = 2;
  c.forced_backtracks = false;
  const auto t = trace_search(p, v, c, "Q");
  EXPECT_EQ(verdicts(t), (std::vector<std::string>{"accepted", "accepted", "accepted", "halted:budget"}));
  EXPECT_EQ(t.outcome.status, SearchStatus::BudgetExhausted);
  EXPECT_EQ(t.outcome.tree.count_backtrack_leaves(), 1u);
  expect_event_identity(t);
}

TEST(Search, GlobalCap) {
  struct Deep {
    StepProposal propose(const PolicyContext&, Rng&) { return StepProposal::extend("x"); }
  } p;
  PermissiveValidator v;
  SearchConfig c;
  c.t_max = 100;
  c.max_total_expansions = 3;
  const auto t = trace_search(p, v, c, "Q");
  EXPECT_EQ(t.outcome.status, SearchStatus::GlobalCapReached);
  EXPECT_EQ(t.outcome.tree.size(), 4u);
  EXPECT_EQ(t.events.back().verdict, "halted:cap");
  EXPECT_EQ(SearchConfig{}.expansion_cap(), 10u * 3u * 10u);
}

TEST(Search, ContextOnlyCarriesTreeWhenAsked) {
  struct Probe {
    bool saw_tree = false;
    StepProposal propose(const PolicyContext& ctx, Rng&) {
      saw_tree = saw_tree || ctx.tree != nullptr;
      return ctx.depth == 0 ? StepProposal::extend("a") : StepProposal::finish();
    }
  };
  PermissiveValidator v;
  SearchConfig c;
  Probe p1;
  run_search(p1, v, c, "Q");
  EXPECT_FALSE(p1.saw_tree);
  c.full_tree_context = true;
  Probe p2;
  run_search(p2, v, c, "Q");
  EXPECT_TRUE(p2.saw_tree);
}

TEST(Search, ConfigValidation) {
  PermissiveValidator v;
  ChainPolicy p{{"a"}};
  SearchConfig c;
  c.t_max = 1;
  EXPECT_THROW(run_search(p, v, c, "Q"), std::invalid_argument);
  c.t_max = 2;
  c.budget_b = 0;
  EXPECT_THROW(run_search(p, v, c, "Q"), std::invalid_argument);
}

TEST(Search, RandomPoliciesTerminateAndKeepInvariants) {
  RejectBad v;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    SearchConfig c;
    c.seed = seed;
    c.t_max = 2 + seed % 6;
    c.budget_b = 1 + seed % 4;
    c.forced_backtracks = seed % 2 == 0;
    RandomPolicy p;
    const auto t = trace_search(p, v, c, "Q");
    const std::size_t step_bound = (c.expansion_cap() + 1) * (c.budget_b + 1) + 1;
    EXPECT_LE(t.outcome.stats.policy_steps, step_bound);
    EXPECT_LE(t.outcome.stats.expansions, c.expansion_cap());
    EXPECT_LE(t.outcome.stats.max_depth_reached, c.t_max);
    EXPECT_EQ(t.outcome.status == SearchStatus::Solved, t.outcome.tree.finalized());
    EXPECT_TRUE(isomorphic(replay(t.outcome.tree.to_think_events(), "Q"), t.outcome.tree));
    if (t.outcome.status == SearchStatus::Solved) {
      EXPECT_FALSE(grammar::check_protocol(t.outcome.tree.to_think_events()));
    }
    expect_event_identity(t);
  }
}

TEST(Search, DeterministicAndReplayable) {
  lemma::SyntheticPolicyParams params;
  params.gamma = 0.5;
  params.epsilon = 0.05;
  params.t_corr = 6;
  PlantedChainValidator v{lemma::planted_chain(6), false};
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SearchConfig c;
    c.t_max = 7;
    c.budget_b = 4;
    c.seed = seed;
    c.forced_backtracks = seed % 2 == 1;
    lemma::SyntheticPolicy p1(params), p2(params);
    const auto a = trace_search(p1, v, c, "Q");
    const auto b = trace_search(p2, v, c, "Q");
    ASSERT_TRUE(same_outcome(a.outcome, b.outcome));
    ASSERT_EQ(a.events, b.events);
    auto scripted = ScriptedPolicy::from_events(a.events);
    const auto r = trace_search(scripted, v, c, "Q");
    ASSERT_TRUE(same_outcome(a.outcome, r.outcome));
    ASSERT_EQ(a.events, r.events);
    expect_event_identity(a);
  }
}

TEST(Search, LemmaModeLeafBoundHoldsForRecoveringPolicies) {
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    Rng meta(seed);
    const std::size_t t_max = 3 + meta.below(8);
    lemma::SyntheticPolicyParams params;
    params.gamma = meta.uniform(0.05, 0.95);
    params.epsilon = meta.uniform(0.0, 0.3);
    params.t_corr = 1 + meta.below(t_max - 1);
    params.recovery = meta.bernoulli(0.5) ? lemma::Recovery::exact() : lemma::Recovery::undershoot(meta.below(4));
    SearchConfig c;
    c.t_max = t_max;
    c.budget_b = 1 + meta.below(6);
    c.seed = seed;
    c.forced_backtracks = false;
    lemma::SyntheticPolicy p(params);
    PlantedChainValidator v{lemma::planted_chain(params.t_corr), false};
    const auto out = run_search(p, v, c, "Q");
    ASSERT_LE(out.tree.count_backtrack_leaves(), leaf_bound(t_max, c.budget_b)) << "seed " << seed;
  }
}
