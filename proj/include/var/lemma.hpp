#pragma once

// Synthetic policies that satisfy the forward-progress and recovery
// conditions by construction, the closed forms for the error tolerance and
// exploration budget, and Monte-Carlo drivers that check the success bound
// and the backtrack-leaf bound against the search engine.

#include "var/reward.hpp"
#include "var/rng.hpp"
#include "var/search.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace var::lemma {

/// Two-sided 99% normal quantile.
inline constexpr double kZ99 = 2.5758293035489004;

struct DerivedParams {
  double epsilon = 0.0;
  std::size_t budget_b = 1;
};

inline void check_domain(double gamma, double delta, std::size_t t_max) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::domain_error("gamma must lie in (0, 1)");
  if (!(delta > 0.0 && delta < 0.5)) throw std::domain_error("delta must lie in (0, 0.5)");
  if (t_max < 2) throw std::domain_error("t_max must be at least 2");
}

/// epsilon = gamma * delta / (2 t_max), B = ceil(ln(t_max / delta) / gamma).
inline DerivedParams derive_params(double gamma, double delta, std::size_t t_max) {
  check_domain(gamma, delta, t_max);
  const double t = static_cast<double>(t_max);
  DerivedParams p;
  p.epsilon = gamma * delta / (2.0 * t);
  p.budget_b = static_cast<std::size_t>(std::ceil(std::log(t / delta) / gamma));
  return p;
}

/// Probability of advancing one correct node within `budget_b` attempts,
/// with p_s = gamma(1 - eps) and p_f = (1 - gamma)(1 - eps):
/// p_s (1 - p_f^B) / (1 - p_f).
inline double closed_form_p_adv(double gamma, double epsilon, std::size_t budget_b) {
  const double p_s = gamma * (1.0 - epsilon);
  const double p_f = (1.0 - gamma) * (1.0 - epsilon);
  const double b = static_cast<double>(budget_b);
  if (p_f >= 1.0) return p_s * b;
  // 1 - p_f^B computed as -expm1(B log p_f) to keep precision when p_f^B ~ 1.
  const double tail = p_f > 0.0 ? -std::expm1(b * std::log(p_f)) : 1.0;
  return p_s * tail / (1.0 - p_f);
}

inline double p_succ_lower_bound(double delta) {
  if (!(delta > 0.0 && delta < 0.5)) throw std::domain_error("delta must lie in (0, 0.5)");
  return 1.0 - 4.0 * delta;
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

struct Interval {
  double low = 0.0;
  double high = 1.0;
};

/// Wilson score interval.
inline Interval wilson_interval(std::size_t successes, std::size_t n, double z = kZ99) {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

/// Score test of H0: rate == p0. Accepts iff p0 lies in the score interval.
inline bool score_test_accepts(std::size_t successes, std::size_t n, double p0, double z = kZ99) {
  const double p = static_cast<double>(successes) / static_cast<double>(n);
  const double se = std::sqrt(p0 * (1.0 - p0) / static_cast<double>(n));
  if (se == 0.0) return p == p0;
  return std::abs(p - p0) <= z * se;
}

/// Pooled two-proportion z statistic.
inline double two_proportion_z(std::size_t s1, std::size_t n1, std::size_t s2, std::size_t n2) {
  const double a = static_cast<double>(s1) / static_cast<double>(n1);
  const double b = static_cast<double>(s2) / static_cast<double>(n2);
  const double pooled = static_cast<double>(s1 + s2) / static_cast<double>(n1 + n2);
  const double se =
      std::sqrt(pooled * (1.0 - pooled) * (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2)));
  if (se == 0.0) return 0.0;
  return (a - b) / se;
}

// ---------------------------------------------------------------------------
// Synthetic policy
// ---------------------------------------------------------------------------

/// Where a recovering policy lands.
///  Exact: on the deviation node (the last correct node).
///  Undershoot: on the deviation node, after up to `max_extra` additional
///    wasted steps down the abandoned branch.
///  Overshoot: with probability `prob`, `depth` levels above the deviation
///    node (clamped at the root); otherwise exact.
struct Recovery {
  enum class Kind { Exact, Undershoot, Overshoot };

  Kind kind = Kind::Exact;
  std::size_t max_extra = 0;
  double prob = 0.0;
  std::size_t depth = 0;

  static Recovery exact() { return {}; }
  static Recovery undershoot(std::size_t max_extra) { return {Kind::Undershoot, max_extra, 0.0, 0}; }
  static Recovery overshoot(double prob, std::size_t depth) {
    return {Kind::Overshoot, 0, prob, depth};
  }

  /// Modes under which the leaf bound is asserted.
  bool bounded() const noexcept { return kind != Kind::Overshoot; }

  std::string label() const {
    switch (kind) {
      case Kind::Exact: return "exact";
      case Kind::Undershoot: return "undershoot:" + std::to_string(max_extra);
      case Kind::Overshoot: {
        char buf[64];
        std::snprintf(buf, sizeof buf, "overshoot:%g:%zu", prob, depth);
        return buf;
      }
    }
    return "?";
  }
};

/// Whether the forward-progress failure is drawn per attempt or once per node.
enum class EpsilonScope { PerAttempt, PerNode };

struct SyntheticPolicyParams {
  double gamma = 0.5;
  double epsilon = 0.0;
  std::size_t t_corr = 1;
  Recovery recovery;
  EpsilonScope scope = EpsilonScope::PerAttempt;

  void validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(gamma) || !prob(epsilon) || !prob(recovery.prob)) {
      throw std::invalid_argument("synthetic policy probabilities must lie in [0, 1]");
    }
    if (t_corr < 1) throw std::invalid_argument("t_corr must be at least 1");
  }
};

/// The correct chain c1..cT. Wrong steps live in the disjoint w* namespace.
inline std::vector<std::string> planted_chain(std::size_t t_corr) {
  std::vector<std::string> chain;
  chain.reserve(t_corr);
  for (std::size_t i = 1; i <= t_corr; ++i) chain.push_back("c" + std::to_string(i));
  return chain;
}

/// Policy against a planted chain.
///
/// On a correct prefix of length i < T: with probability 1 - eps it is
/// gamma-progressive (correct next step with probability gamma, else a wrong
/// one); with probability eps it emits a wrong step. At i == T it finishes.
/// On a deviated path: with probability 1 - eps it backtracks (target set by
/// the recovery mode), else it keeps extending the wrong branch.
class SyntheticPolicy {
 public:
  explicit SyntheticPolicy(SyntheticPolicyParams params)
      : p_(params), chain_(planted_chain(params.t_corr)) {
    p_.validate();
  }

  const std::vector<std::string>& chain() const noexcept { return chain_; }

  StepProposal propose(const PolicyContext& ctx, Rng& rng) {
    const auto& path = ctx.path;
    const std::size_t depth = path.size() - 1;
    std::size_t prefix = 0;
    while (prefix < depth && prefix < chain_.size() && path[prefix + 1].proposition == chain_[prefix]) {
      ++prefix;
    }

    if (prefix == depth) {
      if (depth == chain_.size()) return StepProposal::finish();
      if (progressive(path.back().id, rng) && rng.bernoulli(p_.gamma)) {
        return StepProposal::extend(chain_[depth]);
      }
      return wrong_step();
    }

    if (p_.recovery.kind == Recovery::Kind::Undershoot) {
      const NodeId first_wrong = path[prefix + 1].id;
      if (first_wrong != delay_anchor_) {
        delay_anchor_ = first_wrong;
        extra_left_ = rng.below(p_.recovery.max_extra + 1);
      }
      if (extra_left_ > 0 && depth < ctx.t_max) {
        --extra_left_;
        return wrong_step();
      }
    }

    if (rng.bernoulli(1.0 - p_.epsilon)) {
      std::size_t land = prefix;
      if (p_.recovery.kind == Recovery::Kind::Overshoot && rng.bernoulli(p_.recovery.prob)) {
        land = prefix > p_.recovery.depth ? prefix - p_.recovery.depth : 0;
      }
      return StepProposal::backtrack_to(path[land].id);
    }
    return wrong_step();
  }

 private:
  bool progressive(NodeId node, Rng& rng) {
    if (p_.scope == EpsilonScope::PerAttempt) return rng.bernoulli(1.0 - p_.epsilon);
    auto [it, fresh] = node_mode_.try_emplace(node.value, true);
    if (fresh) it->second = rng.bernoulli(1.0 - p_.epsilon);
    return it->second;
  }

  StepProposal wrong_step() { return StepProposal::extend("w" + std::to_string(++wrong_count_)); }

  SyntheticPolicyParams p_;
  std::vector<std::string> chain_;
  std::uint64_t wrong_count_ = 0;
  NodeId delay_anchor_{~std::uint64_t{0}};
  std::uint64_t extra_left_ = 0;
  std::unordered_map<std::uint64_t, bool> node_mode_;
};

inline SyntheticPolicy make_synthetic_policy(const SyntheticPolicyParams& params) {
  return SyntheticPolicy(params);
}

/// Correct non-final nodes that were expanded, and how many of them produced
/// the correct next step.
struct AdvanceCount {
  std::size_t expanded = 0;
  std::size_t advanced = 0;
};

inline AdvanceCount count_advances(const ReasoningTree& tree, const std::vector<std::string>& chain) {
  AdvanceCount c;
  // correct[i]: node i lies on a fully correct path; its depth is then its
  // chain position.
  std::vector<std::size_t> pos(tree.size(), 0);
  std::vector<bool> correct(tree.size(), false);
  correct[0] = true;
  for (const auto& v : tree.nodes()) {
    if (!v.parent) continue;
    const std::size_t p = v.parent->value;
    if (correct[p] && pos[p] < chain.size() && v.proposition == chain[pos[p]]) {
      correct[v.id.value] = true;
      pos[v.id.value] = pos[p] + 1;
    }
  }
  for (const auto& v : tree.nodes()) {
    if (!correct[v.id.value] || pos[v.id.value] >= chain.size()) continue;
    ++c.expanded;
    for (NodeId ch : v.children) {
      if (correct[ch.value]) {
        ++c.advanced;
        break;
      }
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Monte-Carlo trials
// ---------------------------------------------------------------------------

struct LemmaConfig {
  double gamma = 0.5;
  double delta = 0.1;
  std::size_t t_max = 10;
  std::size_t t_corr = 9;
  std::size_t n_trials = 10000;

  void validate() const {
    check_domain(gamma, delta, t_max);
    if (t_corr < 1 || t_corr > t_max - 1) throw std::domain_error("t_corr must lie in [1, t_max - 1]");
    if (n_trials == 0) throw std::domain_error("n_trials must be positive");
  }
};

struct TrialOptions {
  std::uint64_t master_seed = 1;
  /// Replaces the derived epsilon (B still comes from derive_params).
  std::optional<double> epsilon_override;
  EpsilonScope scope = EpsilonScope::PerAttempt;
  bool forced_backtracks = false;
};

struct MCEstimate {
  std::size_t trials = 0;
  std::size_t successes = 0;
  double rate = 0.0;
  double ci_low = 0.0;
  double ci_high = 1.0;
  std::size_t max_bt_leaves_observed = 0;
  std::size_t leaf_bound = 0;
  std::size_t leaf_violations = 0;
  double epsilon = 0.0;
  std::size_t budget_b = 0;
  std::size_t total_expansions = 0;
  AdvanceCount advances;
};

inline MCEstimate run_trials(const LemmaConfig& config, const Recovery& recovery,
                             const TrialOptions& options = {}) {
  config.validate();
  const DerivedParams d = derive_params(config.gamma, config.delta, config.t_max);
  SyntheticPolicyParams params;
  params.gamma = config.gamma;
  params.epsilon = options.epsilon_override.value_or(d.epsilon);
  params.t_corr = config.t_corr;
  params.recovery = recovery;
  params.scope = options.scope;

  SearchConfig sc;
  sc.t_max = config.t_max;
  sc.budget_b = d.budget_b;
  sc.forced_backtracks = options.forced_backtracks;

  MCEstimate est;
  est.trials = config.n_trials;
  est.epsilon = params.epsilon;
  est.budget_b = d.budget_b;
  est.leaf_bound = leaf_bound(config.t_max, d.budget_b);

  PlantedChainValidator validator{planted_chain(config.t_corr), false};
  for (std::size_t i = 0; i < config.n_trials; ++i) {
    sc.seed = derive_stream(options.master_seed, i);
    SyntheticPolicy policy(params);
    const SearchOutcome out = run_search(policy, validator, sc, "Q");
    est.successes += out.status == SearchStatus::Solved;
    const std::size_t leaves = out.tree.count_backtrack_leaves();
    est.max_bt_leaves_observed = std::max(est.max_bt_leaves_observed, leaves);
    est.leaf_violations += leaves > est.leaf_bound;
    est.total_expansions += out.stats.expansions;
    const AdvanceCount a = count_advances(out.tree, validator.chain);
    est.advances.expanded += a.expanded;
    est.advances.advanced += a.advanced;
  }
  est.rate = static_cast<double>(est.successes) / static_cast<double>(est.trials);
  const Interval ci = wilson_interval(est.successes, est.trials);
  est.ci_low = ci.low;
  est.ci_high = ci.high;
  return est;
}

/// One estimate per overshoot probability, all at the same depth.
inline std::vector<MCEstimate> overshoot_sweep(const LemmaConfig& config,
                                               const std::vector<double>& overshoot_probs,
                                               std::size_t overshoot_depth,
                                               const TrialOptions& options = {}) {
  std::vector<MCEstimate> out;
  out.reserve(overshoot_probs.size());
  for (double p : overshoot_probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("overshoot probability must lie in [0, 1]");
    out.push_back(run_trials(config, Recovery::overshoot(p, overshoot_depth), options));
  }
  return out;
}

}  // namespace var::lemma
