#pragma once

#include "var/tree.hpp"

#include <string>
#include <utility>

namespace var {

/// What a policy asks the search engine to do next.
struct StepProposal {
  enum class Kind { Extend, BacktrackTo, Finish };

  Kind kind = Kind::Finish;
  std::string proposition;
  NodeId target;

  static StepProposal extend(std::string p) { return {Kind::Extend, std::move(p), kRoot}; }
  static StepProposal backtrack_to(NodeId t) { return {Kind::BacktrackTo, {}, t}; }
  static StepProposal finish() { return {Kind::Finish, {}, kRoot}; }

  friend bool operator==(const StepProposal&, const StepProposal&) = default;
};

inline const char* proposal_kind_name(StepProposal::Kind k) noexcept {
  switch (k) {
    case StepProposal::Kind::Extend: return "extend";
    case StepProposal::Kind::BacktrackTo: return "backtrack";
    case StepProposal::Kind::Finish: return "finish";
  }
  return "?";
}

}  // namespace var
