#pragma once

// Four-component trajectory reward and the step validators the search engine
// uses between expansions.

#include "var/box.hpp"
#include "var/grammar.hpp"
#include "var/proposal.hpp"
#include "var/tree.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <concepts>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace var {

/// Weights on the format, semantic and geometric terms. Accuracy has weight 1.
/// The defaults are configuration choices, not published values.
struct RewardWeights {
  double fmt = 0.5;
  double sem = 0.5;
  double geo = 0.5;

  void validate() const {
    for (double w : {fmt, sem, geo}) {
      if (!std::isfinite(w) || w < 0.0) {
        throw std::invalid_argument("reward weights must be finite and non-negative");
      }
    }
  }
};

struct RewardVector {
  double acc = 0.0;
  double fmt = 0.0;
  double sem = 0.0;
  double geo = 0.0;
  double total = 0.0;

  friend bool operator==(const RewardVector&, const RewardVector&) = default;
};

struct GroundTruth {
  std::string answer;
  std::vector<BoundingBox> boxes;
};

struct Thresholds {
  double theta_sem = 1.0;
  double theta_geo = 0.5;

  void validate() const {
    if (!(theta_sem >= 0.0 && theta_sem <= 1.0 && theta_geo >= 0.0 && theta_geo <= 1.0)) {
      throw std::invalid_argument("thresholds must lie in [0, 1]");
    }
  }
};

class OracleUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Answers a question from the perception text alone.
class AnswerOracle {
 public:
  virtual ~AnswerOracle() = default;
  /// May throw OracleUnavailable.
  virtual std::string answer(std::string_view perception, std::string_view question) = 0;
  /// Whether one instance may serve concurrent scorers.
  virtual bool shareable() const { return false; }
};

/// Fixture lookup keyed by question id. Unknown ids are a configuration error.
class ScriptedOracle final : public AnswerOracle {
 public:
  explicit ScriptedOracle(std::map<std::string, std::string> answers) : answers_(std::move(answers)) {}

  std::string answer(std::string_view, std::string_view question) override {
    auto it = answers_.find(std::string(question));
    if (it == answers_.end()) {
      throw OracleUnavailable("scripted oracle has no answer for '" + std::string(question) + "'");
    }
    return it->second;
  }
  bool shareable() const override { return true; }

 private:
  std::map<std::string, std::string> answers_;
};

/// Always returns the same answer.
class EchoOracle final : public AnswerOracle {
 public:
  explicit EchoOracle(std::string answer) : answer_(std::move(answer)) {}
  std::string answer(std::string_view, std::string_view) override { return answer_; }
  bool shareable() const override { return true; }

 private:
  std::string answer_;
};

/// Synthetic tasks whose sufficiency is decidable by lookup: a question is
/// answerable iff the perception contains its required fact verbatim.
class KeyValueOracle final : public AnswerOracle {
 public:
  struct Task {
    std::string fact;
    std::string answer;
  };

  explicit KeyValueOracle(std::map<std::string, Task> tasks) : tasks_(std::move(tasks)) {}

  std::string answer(std::string_view perception, std::string_view question) override {
    auto it = tasks_.find(std::string(question));
    if (it == tasks_.end() || perception.find(it->second.fact) == std::string_view::npos) {
      return "unknown";
    }
    return it->second.answer;
  }
  bool shareable() const override { return true; }

 private:
  std::map<std::string, Task> tasks_;
};

/// Trim, ASCII case-fold, collapse internal whitespace runs to one space.
inline std::string normalize_answer(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

inline int acc_reward(std::string_view answer, std::string_view gt_answer) {
  return normalize_answer(answer) == normalize_answer(gt_answer) ? 1 : 0;
}

/// Mean of the ground-truth-side best matches (recall) and the
/// prediction-side best matches (precision), halved. Both sets empty scores 1;
/// exactly one empty scores 0.
inline double geo_reward(std::span<const BoundingBox> pred, std::span<const BoundingBox> gt) {
  if (pred.empty() && gt.empty()) return 1.0;
  if (pred.empty() || gt.empty()) return 0.0;
  std::vector<double> best_pred(pred.size(), 0.0);
  double recall = 0.0;
  for (const auto& g : gt) {
    double best = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double v = iou(g, pred[i]);
      best = std::max(best, v);
      best_pred[i] = std::max(best_pred[i], v);
    }
    recall += best;
  }
  double precision = 0.0;
  for (double v : best_pred) precision += v;
  return 0.5 * (recall / static_cast<double>(gt.size()) +
                precision / static_cast<double>(pred.size()));
}

inline int sem_reward(std::string_view perception, std::string_view question,
                      std::string_view gt_answer, AnswerOracle& oracle) {
  return acc_reward(oracle.answer(perception, question), gt_answer);
}

inline RewardVector combine(double acc, double fmt, double sem, double geo, const RewardWeights& w) {
  return RewardVector{acc, fmt, sem, geo, acc + w.fmt * fmt + w.sem * sem + w.geo * geo};
}

/// Scores one trajectory. Unparseable text scores all zero; OracleUnavailable
/// propagates.
inline RewardVector total_reward(std::string_view trajectory_text, std::string_view question,
                                 const GroundTruth& gt, const RewardWeights& weights,
                                 AnswerOracle& oracle) {
  weights.validate();
  const auto parsed = grammar::parse_trajectory(trajectory_text);
  const auto* doc = std::get_if<grammar::TrajectoryDoc>(&parsed);
  if (!doc) return combine(0, 0, 0, 0, weights);
  const double fmt = grammar::check_protocol(doc->think_body) ? 0.0 : 1.0;
  const double acc = acc_reward(doc->answer, gt.answer);
  const double sem = sem_reward(doc->perception, question, gt.answer, oracle);
  const double geo = geo_reward(doc->boxes, gt.boxes);
  return combine(acc, fmt, sem, geo, weights);
}

// ---------------------------------------------------------------------------
// Step validation
// ---------------------------------------------------------------------------

/// Raw judgement from a validator. Scores left empty are not checked.
struct StepAssessment {
  bool coherent = true;
  std::optional<double> semantic;
  std::optional<double> geometric;
  std::string note;
};

enum class FailReason { None, Semantic, Geometric, Logical };

inline const char* fail_reason_name(FailReason r) noexcept {
  switch (r) {
    case FailReason::None: return "none";
    case FailReason::Semantic: return "semantic";
    case FailReason::Geometric: return "geometric";
    case FailReason::Logical: return "logical";
  }
  return "?";
}

struct Verdict {
  FailReason reason = FailReason::None;
  std::string detail;

  bool pass() const noexcept { return reason == FailReason::None; }
  static Verdict ok() { return {}; }
  static Verdict fail(FailReason r, std::string d = {}) { return {r, std::move(d)}; }
};

template <class V>
concept StepValidator = requires(V& v, std::span<const PathEntry> path, const StepProposal& p) {
  { v.assess(path, p) } -> std::convertible_to<StepAssessment>;
};

/// Applies thresholds to a validator's assessment; the first violated
/// criterion wins, in the order semantic, geometric, logical.
template <StepValidator V>
Verdict validate_step(std::span<const PathEntry> path, const StepProposal& proposal,
                      const Thresholds& thresholds, V& validator) {
  const StepAssessment a = validator.assess(path, proposal);
  if (a.semantic && *a.semantic < thresholds.theta_sem) return Verdict::fail(FailReason::Semantic, a.note);
  if (a.geometric && *a.geometric < thresholds.theta_geo) {
    return Verdict::fail(FailReason::Geometric, a.note);
  }
  if (!a.coherent) return Verdict::fail(FailReason::Logical, a.note);
  return Verdict::ok();
}

struct PermissiveValidator {
  StepAssessment assess(std::span<const PathEntry>, const StepProposal&) const { return {}; }
};

/// Knows the one correct chain. A finish is accepted only when the active
/// path spells the whole chain. With `strict_steps`, an extension must also
/// be the next chain element; otherwise wrong steps are admitted and left to
/// the policy to recover from.
struct PlantedChainValidator {
  std::vector<std::string> chain;
  bool strict_steps = true;

  bool on_chain(std::span<const PathEntry> path) const {
    if (path.size() > chain.size() + 1) return false;
    for (std::size_t i = 1; i < path.size(); ++i) {
      if (path[i].proposition != chain[i - 1]) return false;
    }
    return true;
  }

  StepAssessment assess(std::span<const PathEntry> path, const StepProposal& p) const {
    StepAssessment a;
    if (p.kind == StepProposal::Kind::Finish) {
      const bool complete = path.size() == chain.size() + 1 && on_chain(path);
      a.semantic = complete ? 1.0 : 0.0;
      if (!complete) a.note = "path is not the full correct chain";
    } else if (p.kind == StepProposal::Kind::Extend && strict_steps) {
      const std::size_t next = path.size() - 1;
      const bool ok = on_chain(path) && next < chain.size() && chain[next] == p.proposition;
      a.semantic = ok ? 1.0 : 0.0;
      if (!ok) a.note = "proposition is off the correct chain";
    }
    return a;
  }
};

/// Scores the boxes cited inside a proposition against ground-truth boxes.
/// Propositions without boxes are not checked geometrically.
struct GroundedValidator {
  std::vector<BoundingBox> gt_boxes;

  StepAssessment assess(std::span<const PathEntry>, const StepProposal& p) const {
    StepAssessment a;
    if (p.kind != StepProposal::Kind::Extend) return a;
    const auto boxes = grammar::extract_boxes(p.proposition).boxes;
    if (!boxes.empty()) a.geometric = geo_reward(boxes, gt_boxes);
    return a;
  }
};

}  // namespace var
