#pragma once

// Trajectory grammar: tokenizer, parser, canonical serializer, format reward
// and the finite-state mask used for constrained decoding.
//
// Canonical surface syntax:
//
//   <visual_perception>c</visual_perception>
//   <think>
//   <node id=1>first step</node>
//   <backtrack target=0>
//   <node id=2>second step</node>
//   <done>
//   </think>
//   <answer>a</answer>
//
// Boxes appear inside the perception as <box>x_min,y_min,x_max,y_max</box>.

#include "var/box.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

namespace var::grammar {

enum class TokenKind {
  OpenPerception,
  ClosePerception,
  OpenThink,
  CloseThink,
  OpenAnswer,
  CloseAnswer,
  OpenNode,
  CloseNode,
  Backtrack,
  Done,
  OpenBox,
  CloseBox,
  Text,
};

inline std::string_view kind_name(TokenKind k) noexcept {
  switch (k) {
    case TokenKind::OpenPerception: return "OpenPerception";
    case TokenKind::ClosePerception: return "ClosePerception";
    case TokenKind::OpenThink: return "OpenThink";
    case TokenKind::CloseThink: return "CloseThink";
    case TokenKind::OpenAnswer: return "OpenAnswer";
    case TokenKind::CloseAnswer: return "CloseAnswer";
    case TokenKind::OpenNode: return "OpenNode";
    case TokenKind::CloseNode: return "CloseNode";
    case TokenKind::Backtrack: return "Backtrack";
    case TokenKind::Done: return "Done";
    case TokenKind::OpenBox: return "OpenBox";
    case TokenKind::CloseBox: return "CloseBox";
    case TokenKind::Text: return "Text";
  }
  return "?";
}

/// One lexical unit. `value` is the label of an OpenNode or the target of a
/// Backtrack; `text` is only used by Text tokens.
struct Token {
  TokenKind kind = TokenKind::Text;
  std::uint64_t value = 0;
  std::string text;

  static Token of(TokenKind k) { return Token{k, 0, {}}; }
  static Token node(std::uint64_t label) { return Token{TokenKind::OpenNode, label, {}}; }
  static Token backtrack(std::uint64_t target) { return Token{TokenKind::Backtrack, target, {}}; }
  static Token text_of(std::string s) { return Token{TokenKind::Text, 0, std::move(s)}; }

  std::string surface() const {
    switch (kind) {
      case TokenKind::OpenPerception: return "<visual_perception>";
      case TokenKind::ClosePerception: return "</visual_perception>";
      case TokenKind::OpenThink: return "<think>";
      case TokenKind::CloseThink: return "</think>";
      case TokenKind::OpenAnswer: return "<answer>";
      case TokenKind::CloseAnswer: return "</answer>";
      case TokenKind::OpenNode: return "<node id=" + std::to_string(value) + ">";
      case TokenKind::CloseNode: return "</node>";
      case TokenKind::Backtrack: return "<backtrack target=" + std::to_string(value) + ">";
      case TokenKind::Done: return "<done>";
      case TokenKind::OpenBox: return "<box>";
      case TokenKind::CloseBox: return "</box>";
      case TokenKind::Text: return text;
    }
    return {};
  }

  friend bool operator==(const Token&, const Token&) = default;
};

namespace detail {

inline bool is_space(char c) noexcept { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

inline bool is_blank(std::string_view s) noexcept {
  return std::all_of(s.begin(), s.end(), is_space);
}

inline std::string_view trim(std::string_view s) noexcept {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Canonical decimal natural: "0" or no leading zero, must fit in 64 bits.
inline std::optional<std::uint64_t> parse_natural(std::string_view digits) {
  if (digits.empty() || (digits.size() > 1 && digits.front() == '0')) return std::nullopt;
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
  if (ec != std::errc{} || ptr != digits.data() + digits.size()) return std::nullopt;
  return v;
}

// Tries to read a recognized tag at the start of `s`.
inline std::optional<std::pair<Token, std::size_t>> match_tag(std::string_view s) {
  static constexpr std::pair<std::string_view, TokenKind> fixed[] = {
      {"<visual_perception>", TokenKind::OpenPerception},
      {"</visual_perception>", TokenKind::ClosePerception},
      {"<think>", TokenKind::OpenThink},
      {"</think>", TokenKind::CloseThink},
      {"<answer>", TokenKind::OpenAnswer},
      {"</answer>", TokenKind::CloseAnswer},
      {"</node>", TokenKind::CloseNode},
      {"<done>", TokenKind::Done},
      {"<box>", TokenKind::OpenBox},
      {"</box>", TokenKind::CloseBox},
  };
  for (const auto& [lit, kind] : fixed) {
    if (s.substr(0, lit.size()) == lit) return std::pair{Token::of(kind), lit.size()};
  }
  auto numbered = [&](std::string_view prefix,
                      TokenKind kind) -> std::optional<std::pair<Token, std::size_t>> {
    if (s.substr(0, prefix.size()) != prefix) return std::nullopt;
    const std::size_t close = s.find('>', prefix.size());
    if (close == std::string_view::npos) return std::nullopt;
    auto n = parse_natural(s.substr(prefix.size(), close - prefix.size()));
    if (!n) return std::nullopt;
    return std::pair{Token{kind, *n, {}}, close + 1};
  };
  if (auto t = numbered("<node id=", TokenKind::OpenNode)) return t;
  if (auto t = numbered("<backtrack target=", TokenKind::Backtrack)) return t;
  return std::nullopt;
}

}  // namespace detail

/// Total lexer: concatenating surface() of the result reproduces `text`
/// exactly. Anything that is not a recognized tag is Text; adjacent text is
/// merged into one token.
inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::string pending;
  auto flush = [&] {
    if (!pending.empty()) {
      out.push_back(Token::text_of(std::move(pending)));
      pending.clear();
    }
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t lt = text.find('<', i);
    if (lt == std::string_view::npos) {
      pending.append(text.substr(i));
      break;
    }
    pending.append(text.substr(i, lt - i));
    if (auto m = detail::match_tag(text.substr(lt))) {
      flush();
      out.push_back(std::move(m->first));
      i = lt + m->second;
    } else {
      pending.push_back('<');
      i = lt + 1;
    }
  }
  flush();
  return out;
}

struct ThinkEvent {
  enum class Kind { Step, BacktrackTo, Done };

  Kind kind = Kind::Done;
  /// Step label, or the backtrack target.
  std::uint64_t label = 0;
  std::string proposition;

  static ThinkEvent step(std::uint64_t label, std::string proposition) {
    return ThinkEvent{Kind::Step, label, std::move(proposition)};
  }
  static ThinkEvent backtrack_to(std::uint64_t target) {
    return ThinkEvent{Kind::BacktrackTo, target, {}};
  }
  static ThinkEvent done() { return ThinkEvent{Kind::Done, 0, {}}; }

  std::uint64_t target() const noexcept { return label; }

  friend bool operator==(const ThinkEvent&, const ThinkEvent&) = default;
};

/// Parsed trajectory. `boxes` is always extract_boxes(perception).boxes.
struct TrajectoryDoc {
  std::string perception;
  std::vector<BoundingBox> boxes;
  std::vector<ThinkEvent> think_body;
  std::string answer;

  bool solved() const noexcept {
    return !think_body.empty() && think_body.back().kind == ThinkEvent::Kind::Done;
  }

  friend bool operator==(const TrajectoryDoc&, const TrajectoryDoc&) = default;
};

/// Exportable record; see io.hpp.
struct Diagnostic {
  std::size_t index = 0;
  std::string kind;
  std::string message;

  friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

enum class ParseErrorKind {
  UnexpectedToken,
  MissingBlock,
  DanglingThink,
  BadBacktrackTarget,
  DuplicateLabel,
};

inline std::string_view error_name(ParseErrorKind k) noexcept {
  switch (k) {
    case ParseErrorKind::UnexpectedToken: return "UnexpectedToken";
    case ParseErrorKind::MissingBlock: return "MissingBlock";
    case ParseErrorKind::DanglingThink: return "DanglingThink";
    case ParseErrorKind::BadBacktrackTarget: return "BadBacktrackTarget";
    case ParseErrorKind::DuplicateLabel: return "DuplicateLabel";
  }
  return "?";
}

/// First violation found by the parser; `index` is a token index.
struct ParseFailure {
  std::size_t index = 0;
  ParseErrorKind kind = ParseErrorKind::UnexpectedToken;
  std::string message;

  Diagnostic to_diagnostic() const {
    return Diagnostic{index, std::string(error_name(kind)), message};
  }
};

using ParseResult = std::variant<TrajectoryDoc, ParseFailure>;

struct BoxExtraction {
  std::vector<BoundingBox> boxes;
  /// One record per skipped span; index is the byte offset of its <box>.
  std::vector<Diagnostic> diagnostics;
};

namespace detail {

inline std::optional<BoundingBox> parse_box_body(std::string_view body, std::string& why) {
  double v[4];
  std::size_t n = 0;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = body.find(',', start);
    const std::string_view part =
        trim(body.substr(start, comma == std::string_view::npos ? body.npos : comma - start));
    if (n == 4) {
      why = "expected exactly four coordinates";
      return std::nullopt;
    }
    double x = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), x);
    if (part.empty() || ec != std::errc{} || ptr != part.data() + part.size() ||
        !std::isfinite(x)) {
      why = "coordinate '" + std::string(part) + "' is not a finite number";
      return std::nullopt;
    }
    v[n++] = x;
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (n != 4) {
    why = "expected exactly four coordinates";
    return std::nullopt;
  }
  return BoundingBox{v[0], v[1], v[2], v[3]};
}

}  // namespace detail

/// Boxes in document order. Malformed or inverted spans are skipped with a
/// diagnostic; extraction never fails.
inline BoxExtraction extract_boxes(std::string_view perception) {
  BoxExtraction out;
  const auto tokens = tokenize(perception);
  std::size_t offset = 0;
  std::optional<std::size_t> open_at;
  std::string body;
  for (const auto& tok : tokens) {
    const std::string surf = tok.surface();
    if (tok.kind == TokenKind::OpenBox) {
      if (open_at) {
        out.diagnostics.push_back({*open_at, "UnclosedBox", "box opened again before </box>"});
      }
      open_at = offset;
      body.clear();
    } else if (tok.kind == TokenKind::CloseBox) {
      if (!open_at) {
        out.diagnostics.push_back({offset, "StrayCloseBox", "</box> without an opening <box>"});
      } else {
        std::string why;
        if (auto b = detail::parse_box_body(body, why)) {
          if (b->x_min > b->x_max || b->y_min > b->y_max) {
            out.diagnostics.push_back(
                {*open_at, "InvertedBox", "box has x_min > x_max or y_min > y_max"});
          } else {
            out.boxes.push_back(*b);
          }
        } else {
          out.diagnostics.push_back({*open_at, "MalformedBox", why});
        }
        open_at.reset();
      }
    } else if (open_at) {
      body += surf;
    }
    offset += surf.size();
  }
  if (open_at) out.diagnostics.push_back({*open_at, "UnclosedBox", "perception ends inside <box>"});
  return out;
}

/// Parses a complete trajectory. Whitespace between blocks and between think
/// events is ignored; block contents and propositions are trimmed.
inline ParseResult parse_trajectory(const std::vector<Token>& tokens) {
  using K = TokenKind;
  std::size_t i = 0;
  const std::size_t n = tokens.size();
  auto fail = [&](ParseErrorKind kind, std::string msg) -> ParseResult {
    return ParseFailure{std::min(i, n), kind, std::move(msg)};
  };
  auto skip_blank = [&] {
    while (i < n && tokens[i].kind == K::Text && detail::is_blank(tokens[i].text)) ++i;
  };
  auto expect_open = [&](K kind, std::string_view block) -> std::optional<ParseResult> {
    skip_blank();
    if (i >= n) return fail(ParseErrorKind::MissingBlock, "missing " + std::string(block) + " block");
    if (tokens[i].kind != kind) {
      return fail(ParseErrorKind::UnexpectedToken, "expected <" + std::string(block) + ">, got " +
                                                       std::string(kind_name(tokens[i].kind)));
    }
    ++i;
    return std::nullopt;
  };

  TrajectoryDoc doc;

  if (auto f = expect_open(K::OpenPerception, "visual_perception")) return *f;
  {
    std::string content;
    bool in_box = false;
    for (;; ++i) {
      if (i >= n) return fail(ParseErrorKind::MissingBlock, "visual_perception block not closed");
      const Token& t = tokens[i];
      if (t.kind == K::ClosePerception && !in_box) break;
      if (t.kind == K::OpenBox && !in_box) {
        in_box = true;
      } else if (t.kind == K::CloseBox && in_box) {
        in_box = false;
      } else if (t.kind != K::Text) {
        return fail(ParseErrorKind::UnexpectedToken,
                    std::string(kind_name(t.kind)) + " inside visual_perception");
      }
      content += t.surface();
    }
    ++i;
    doc.perception = std::string(detail::trim(content));
  }

  if (auto f = expect_open(K::OpenThink, "think")) return *f;
  {
    std::unordered_set<std::uint64_t> emitted;
    bool have_done = false;
    for (;;) {
      skip_blank();
      if (i >= n) return fail(ParseErrorKind::MissingBlock, "think block not closed");
      const Token& t = tokens[i];
      if (t.kind == K::CloseThink) {
        if (!doc.think_body.empty() && !have_done) {
          return fail(ParseErrorKind::DanglingThink, "non-empty think block has no <done>");
        }
        ++i;
        break;
      }
      if (t.kind == K::OpenNode) {
        if (t.value == 0 || emitted.count(t.value)) {
          return fail(ParseErrorKind::DuplicateLabel,
                      "label " + std::to_string(t.value) + " already in use");
        }
        const std::uint64_t label = t.value;
        std::string content;
        for (++i;; ++i) {
          if (i >= n) return fail(ParseErrorKind::MissingBlock, "node not closed");
          if (tokens[i].kind == K::CloseNode) break;
          if (tokens[i].kind != K::Text) {
            return fail(ParseErrorKind::UnexpectedToken,
                        std::string(kind_name(tokens[i].kind)) + " inside node");
          }
          content += tokens[i].text;
        }
        ++i;
        emitted.insert(label);
        doc.think_body.push_back(ThinkEvent::step(label, std::string(detail::trim(content))));
      } else if (t.kind == K::Backtrack) {
        if (t.value != 0 && !emitted.count(t.value)) {
          return fail(ParseErrorKind::BadBacktrackTarget,
                      "backtrack target " + std::to_string(t.value) + " names no earlier node");
        }
        doc.think_body.push_back(ThinkEvent::backtrack_to(t.value));
        ++i;
      } else if (t.kind == K::Done) {
        have_done = true;
        doc.think_body.push_back(ThinkEvent::done());
        ++i;
      } else {
        return fail(ParseErrorKind::UnexpectedToken,
                    std::string(kind_name(t.kind)) + " inside think");
      }
    }
  }

  if (auto f = expect_open(K::OpenAnswer, "answer")) return *f;
  {
    std::string content;
    for (;; ++i) {
      if (i >= n) return fail(ParseErrorKind::MissingBlock, "answer block not closed");
      if (tokens[i].kind == K::CloseAnswer) break;
      if (tokens[i].kind != K::Text) {
        return fail(ParseErrorKind::UnexpectedToken,
                    std::string(kind_name(tokens[i].kind)) + " inside answer");
      }
      content += tokens[i].text;
    }
    ++i;
    doc.answer = std::string(detail::trim(content));
  }

  skip_blank();
  if (i < n) return fail(ParseErrorKind::UnexpectedToken, "content after </answer>");

  doc.boxes = extract_boxes(doc.perception).boxes;
  return doc;
}

inline ParseResult parse_trajectory(std::string_view text) { return parse_trajectory(tokenize(text)); }

/// Canonical text form. Inverse of parse_trajectory for documents whose
/// strings are already trimmed and tag-free.
inline std::string serialize(const TrajectoryDoc& doc) {
  std::string out;
  out += "<visual_perception>";
  out += doc.perception;
  out += "</visual_perception>\n<think>\n";
  for (const auto& e : doc.think_body) {
    switch (e.kind) {
      case ThinkEvent::Kind::Step:
        out += Token::node(e.label).surface();
        out += e.proposition;
        out += "</node>\n";
        break;
      case ThinkEvent::Kind::BacktrackTo:
        out += Token::backtrack(e.label).surface();
        out += '\n';
        break;
      case ThinkEvent::Kind::Done:
        out += "<done>\n";
        break;
    }
  }
  out += "</think>\n<answer>";
  out += doc.answer;
  out += "</answer>";
  return out;
}

struct ProtocolViolation {
  std::size_t event_index = 0;
  std::string message;
};

/// Search-protocol check over a parsed think body: labels strictly increase,
/// backtracks leave a fresh leaf for a strict ancestor on the current path,
/// <done> closes a fresh non-root leaf and nothing follows it.
inline std::optional<ProtocolViolation> check_protocol(const std::vector<ThinkEvent>& body) {
  std::vector<std::uint64_t> path{0};
  std::uint64_t max_label = 0;
  bool fresh_leaf = false;
  bool done = false;
  for (std::size_t k = 0; k < body.size(); ++k) {
    const auto& e = body[k];
    if (done) return ProtocolViolation{k, "event after <done>"};
    switch (e.kind) {
      case ThinkEvent::Kind::Step:
        if (e.label <= max_label) {
          return ProtocolViolation{k, "label " + std::to_string(e.label) + " is not fresh"};
        }
        max_label = e.label;
        path.push_back(e.label);
        fresh_leaf = true;
        break;
      case ThinkEvent::Kind::BacktrackTo: {
        if (!fresh_leaf) return ProtocolViolation{k, "backtrack must follow a step"};
        const auto it = std::find(path.begin(), path.end() - 1, e.label);
        if (it == path.end() - 1) {
          return ProtocolViolation{
              k, "backtrack target " + std::to_string(e.label) + " is not an ancestor"};
        }
        path.erase(it + 1, path.end());
        fresh_leaf = false;
        break;
      }
      case ThinkEvent::Kind::Done:
        if (!fresh_leaf) return ProtocolViolation{k, "<done> must follow a step"};
        done = true;
        break;
    }
  }
  if (!body.empty() && !done) return ProtocolViolation{body.size(), "missing <done>"};
  return std::nullopt;
}

/// 1 iff the text parses and its think body follows the search protocol.
inline int format_reward(std::string_view text) {
  const auto parsed = parse_trajectory(text);
  const auto* doc = std::get_if<TrajectoryDoc>(&parsed);
  if (!doc) return 0;
  return check_protocol(doc->think_body) ? 0 : 1;
}

// ---------------------------------------------------------------------------
// Constrained decoding mask
// ---------------------------------------------------------------------------

enum class Position {
  BeforePerception,
  InPerception,
  InBox,
  AfterPerception,
  InThink,
  InNode,
  AfterDone,
  AfterThink,
  InAnswer,
  Complete,
};

struct GrammarState {
  Position position = Position::BeforePerception;
  std::unordered_set<std::uint64_t> emitted_labels;
  /// Labels from the root (0) to the frontier.
  std::vector<std::uint64_t> depth_context{0};
  /// The last think event was a Step, so the frontier is a childless node.
  bool fresh_leaf = false;
  std::uint64_t max_label = 0;
};

enum class TextRule { Forbidden, WhitespaceOnly, Any };

/// One admissible token kind. OpenNode admits any label >= min_label;
/// Backtrack admits exactly the listed targets.
struct Continuation {
  TokenKind kind = TokenKind::Text;
  std::uint64_t min_label = 0;
  std::vector<std::uint64_t> targets;
};

struct Continuations {
  std::vector<Continuation> tokens;
  TextRule text = TextRule::Forbidden;

  bool contains(TokenKind k) const {
    if (k == TokenKind::Text) return text != TextRule::Forbidden;
    return std::any_of(tokens.begin(), tokens.end(),
                       [k](const Continuation& c) { return c.kind == k; });
  }

  bool admits(const Token& t) const {
    if (t.kind == TokenKind::Text) {
      return text == TextRule::Any || (text == TextRule::WhitespaceOnly && detail::is_blank(t.text));
    }
    for (const auto& c : tokens) {
      if (c.kind != t.kind) continue;
      if (c.kind == TokenKind::OpenNode) return t.value >= c.min_label;
      if (c.kind == TokenKind::Backtrack) {
        return std::find(c.targets.begin(), c.targets.end(), t.value) != c.targets.end();
      }
      return true;
    }
    return false;
  }
};

inline Continuations valid_continuations(const GrammarState& s) {
  using K = TokenKind;
  Continuations c;
  auto add = [&](K k) { c.tokens.push_back(Continuation{k, 0, {}}); };
  switch (s.position) {
    case Position::BeforePerception:
      add(K::OpenPerception);
      c.text = TextRule::WhitespaceOnly;
      break;
    case Position::InPerception:
      add(K::OpenBox);
      add(K::ClosePerception);
      c.text = TextRule::Any;
      break;
    case Position::InBox:
      add(K::CloseBox);
      c.text = TextRule::Any;
      break;
    case Position::AfterPerception:
      add(K::OpenThink);
      c.text = TextRule::WhitespaceOnly;
      break;
    case Position::InThink:
      c.tokens.push_back(Continuation{K::OpenNode, s.max_label + 1, {}});
      if (s.fresh_leaf) {
        c.tokens.push_back(Continuation{
            K::Backtrack, 0, {s.depth_context.begin(), s.depth_context.end() - 1}});
        add(K::Done);
      }
      if (s.emitted_labels.empty()) add(K::CloseThink);
      c.text = TextRule::WhitespaceOnly;
      break;
    case Position::InNode:
      add(K::CloseNode);
      c.text = TextRule::Any;
      break;
    case Position::AfterDone:
      add(K::CloseThink);
      c.text = TextRule::WhitespaceOnly;
      break;
    case Position::AfterThink:
      add(K::OpenAnswer);
      c.text = TextRule::WhitespaceOnly;
      break;
    case Position::InAnswer:
      add(K::CloseAnswer);
      c.text = TextRule::Any;
      break;
    case Position::Complete:
      c.text = TextRule::WhitespaceOnly;
      break;
  }
  return c;
}

/// State after appending `t`, or nullopt when the mask rejects it.
inline std::optional<GrammarState> advance(GrammarState s, const Token& t) {
  using K = TokenKind;
  if (!valid_continuations(s).admits(t)) return std::nullopt;
  switch (t.kind) {
    case K::Text: break;
    case K::OpenPerception: s.position = Position::InPerception; break;
    case K::OpenBox: s.position = Position::InBox; break;
    case K::CloseBox: s.position = Position::InPerception; break;
    case K::ClosePerception: s.position = Position::AfterPerception; break;
    case K::OpenThink: s.position = Position::InThink; break;
    case K::OpenNode:
      s.emitted_labels.insert(t.value);
      s.max_label = t.value;
      s.depth_context.push_back(t.value);
      s.position = Position::InNode;
      break;
    case K::CloseNode:
      s.fresh_leaf = true;
      s.position = Position::InThink;
      break;
    case K::Backtrack: {
      auto it = std::find(s.depth_context.begin(), s.depth_context.end(), t.value);
      s.depth_context.erase(it + 1, s.depth_context.end());
      s.fresh_leaf = false;
      break;
    }
    case K::Done: s.position = Position::AfterDone; break;
    case K::CloseThink: s.position = Position::AfterThink; break;
    case K::OpenAnswer: s.position = Position::InAnswer; break;
    case K::CloseAnswer: s.position = Position::Complete; break;
  }
  return s;
}

/// Runs `tokens` through the mask from the initial state.
inline std::optional<GrammarState> run_mask(const std::vector<Token>& tokens) {
  std::optional<GrammarState> s = GrammarState{};
  for (const auto& t : tokens) {
    s = advance(std::move(*s), t);
    if (!s) return std::nullopt;
  }
  return s;
}

}  // namespace var::grammar
