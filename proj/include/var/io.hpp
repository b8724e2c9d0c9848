#pragma once

// JSON / JSONL / CSV schemas for everything the workbench reads or writes.
// Writers emit keys in a fixed order and doubles in shortest round-trip form,
// so identical inputs give byte-identical files and every file re-reads.

#include "var/box.hpp"
#include "var/grammar.hpp"
#include "var/lemma.hpp"
#include "var/parity.hpp"
#include "var/reward.hpp"
#include "var/search.hpp"
#include "var/tree.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace var::io {

using Json = nlohmann::ordered_json;

/// Malformed input file or record.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// files
// ---------------------------------------------------------------------------

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw FormatError("write failed for " + path);
}

/// Non-blank lines, each parsed as JSON. Errors name the 1-based line.
inline std::vector<Json> parse_jsonl(std::string_view text, std::string_view what = "input") {
  std::vector<Json> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    const std::string_view line = grammar::detail::trim(text.substr(pos, end - pos));
    if (!line.empty()) {
      try {
        out.push_back(Json::parse(line));
      } catch (const Json::parse_error& e) {
        throw FormatError(std::string(what) + " line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    pos = end + 1;
  }
  return out;
}

inline std::string to_jsonl(const std::vector<Json>& rows) {
  std::string s;
  for (const auto& r : rows) {
    s += r.dump();
    s += '\n';
  }
  return s;
}

/// Shortest decimal that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("double formatting failed");
  return std::string(buf, end);
}

// ---------------------------------------------------------------------------
// grammar
// ---------------------------------------------------------------------------

inline Json to_json(const grammar::Diagnostic& d) {
  return Json{{"index", d.index}, {"kind", d.kind}, {"message", d.message}};
}

inline grammar::Diagnostic diagnostic_from_json(const Json& j) {
  return {j.at("index").get<std::size_t>(), j.at("kind").get<std::string>(),
          j.at("message").get<std::string>()};
}

inline Json diagnostics_json(const std::vector<grammar::Diagnostic>& ds) {
  Json arr = Json::array();
  for (const auto& d : ds) arr.push_back(to_json(d));
  return arr;
}

// ---------------------------------------------------------------------------
// boxes
// ---------------------------------------------------------------------------

inline Json to_json(const BoundingBox& b) { return Json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

inline BoundingBox box_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 4) throw FormatError("box must be [x1,y1,x2,y2]");
  BoundingBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  if (!b.valid()) throw FormatError("box has x1 > x2 or y1 > y2");
  return b;
}

inline std::vector<BoundingBox> boxes_from_json(const Json& j) {
  if (!j.is_array()) throw FormatError("boxes must be an array");
  std::vector<BoundingBox> out;
  for (const auto& b : j) out.push_back(box_from_json(b));
  return out;
}

// ---------------------------------------------------------------------------
// tree snapshot
// ---------------------------------------------------------------------------

inline const char* node_kind_name(NodeKind k) noexcept {
  switch (k) {
    case NodeKind::Internal: return "internal";
    case NodeKind::DoneLeaf: return "done";
    case NodeKind::BacktrackLeaf: return "backtrack";
  }
  return "?";
}

inline Json to_json(const ReasoningTree& t) {
  Json nodes = Json::array();
  for (const auto& n : t.nodes()) {
    Json j{{"id", n.id.value},
           {"parent", n.parent ? Json(n.parent->value) : Json(nullptr)},
           {"kind", node_kind_name(n.kind)}};
    if (n.kind == NodeKind::BacktrackLeaf) j["target"] = n.target.value;
    j["proposition"] = n.proposition;
    nodes.push_back(std::move(j));
  }
  return Json{{"nodes", std::move(nodes)}, {"frontier", t.frontier().value}, {"finalized", t.finalized()}};
}

/// Rebuilds the tree by replaying it in generation order, then checks the
/// snapshot agrees with the result.
inline ReasoningTree tree_from_json(const Json& j) {
  const Json& nodes = j.at("nodes");
  if (!nodes.is_array() || nodes.empty()) throw FormatError("tree snapshot needs a root node");
  struct Raw {
    std::optional<std::uint64_t> parent;
    std::string kind;
    std::uint64_t target = 0;
    std::string proposition;
    std::vector<std::uint64_t> children;
  };
  std::vector<Raw> raw(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Json& n = nodes[i];
    if (n.at("id").get<std::uint64_t>() != i) throw FormatError("node ids must be 0..n-1 in order");
    Raw& r = raw[i];
    if (!n.at("parent").is_null()) r.parent = n.at("parent").get<std::uint64_t>();
    r.kind = n.at("kind").get<std::string>();
    if (r.kind == "backtrack") r.target = n.at("target").get<std::uint64_t>();
    r.proposition = n.at("proposition").get<std::string>();
    if ((i == 0) != !r.parent) throw FormatError("exactly node 0 must be parentless");
    if (r.parent) {
      if (*r.parent >= i) throw FormatError("parent must precede child");
      raw[*r.parent].children.push_back(i);
    }
  }
  std::vector<grammar::ThinkEvent> events;
  auto walk = [&](auto& self, std::uint64_t id) -> void {
    for (std::uint64_t c : raw[id].children) {
      events.push_back(grammar::ThinkEvent::step(c, raw[c].proposition));
      self(self, c);
      if (raw[c].kind == "backtrack") {
        events.push_back(grammar::ThinkEvent::backtrack_to(raw[c].target));
      } else if (raw[c].kind == "done") {
        events.push_back(grammar::ThinkEvent::done());
      } else if (raw[c].kind != "internal") {
        throw FormatError("unknown node kind '" + raw[c].kind + "'");
      }
    }
  };
  walk(walk, 0);
  ReasoningTree t;
  try {
    t = replay(events, raw[0].proposition);
  } catch (const TreeError& e) {
    throw FormatError(std::string("inconsistent tree snapshot: ") + e.what());
  }
  if (t.frontier().value != j.at("frontier").get<std::uint64_t>() ||
      t.finalized() != j.at("finalized").get<bool>()) {
    throw FormatError("snapshot frontier/finalized disagree with its nodes");
  }
  return t;
}

// ---------------------------------------------------------------------------
// proposals and event log
// ---------------------------------------------------------------------------

inline StepProposal proposal_from_json(const Json& j) {
  const std::string kind =
      j.contains("proposal_kind") ? j.at("proposal_kind").get<std::string>() : j.at("kind").get<std::string>();
  if (kind == "extend") return StepProposal::extend(j.at("proposition").get<std::string>());
  if (kind == "backtrack") return StepProposal::backtrack_to(NodeId{j.at("target").get<std::uint64_t>()});
  if (kind == "finish") return StepProposal::finish();
  throw FormatError("unknown proposal kind '" + kind + "'");
}

/// A scripted proposal file: JSON lines, each {kind, proposition?, target?}.
/// Event logs are accepted too (their proposal_kind key is honoured).
inline std::vector<StepProposal> proposals_from_jsonl(std::string_view text) {
  std::vector<StepProposal> out;
  for (const auto& j : parse_jsonl(text, "proposal file")) out.push_back(proposal_from_json(j));
  return out;
}

inline Json to_json(const SearchEvent& e) {
  Json j{{"step", e.step},
         {"depth", e.depth},
         {"node", e.node.value},
         {"proposal_kind", proposal_kind_name(e.proposal.kind)},
         {"verdict", e.verdict},
         {"attempt", e.attempt}};
  if (e.proposal.kind == StepProposal::Kind::Extend) j["proposition"] = e.proposal.proposition;
  if (e.proposal.kind == StepProposal::Kind::BacktrackTo) j["target"] = e.proposal.target.value;
  return j;
}

inline SearchEvent event_from_json(const Json& j) {
  SearchEvent e;
  e.step = j.at("step").get<std::size_t>();
  e.depth = j.at("depth").get<std::size_t>();
  e.node = NodeId{j.at("node").get<std::uint64_t>()};
  e.proposal = proposal_from_json(j);
  e.verdict = j.at("verdict").get<std::string>();
  e.attempt = j.at("attempt").get<std::size_t>();
  return e;
}

inline std::string events_to_jsonl(const std::vector<SearchEvent>& events) {
  std::string s;
  for (const auto& e : events) {
    s += to_json(e).dump();
    s += '\n';
  }
  return s;
}

inline std::vector<SearchEvent> events_from_jsonl(std::string_view text) {
  std::vector<SearchEvent> out;
  for (const auto& j : parse_jsonl(text, "event log")) out.push_back(event_from_json(j));
  return out;
}

inline Json to_json(const SearchStats& s) {
  return Json{{"expansions", s.expansions},
              {"marker_nodes", s.marker_nodes},
              {"backtracks", s.backtracks},
              {"forced_backtracks", s.forced_backtracks},
              {"protocol_violations", s.protocol_violations},
              {"rejected", s.rejected},
              {"max_depth_reached", s.max_depth_reached},
              {"policy_steps", s.policy_steps}};
}

inline SearchStats stats_from_json(const Json& j) {
  SearchStats s;
  s.expansions = j.at("expansions").get<std::size_t>();
  s.marker_nodes = j.at("marker_nodes").get<std::size_t>();
  s.backtracks = j.at("backtracks").get<std::size_t>();
  s.forced_backtracks = j.at("forced_backtracks").get<std::size_t>();
  s.protocol_violations = j.at("protocol_violations").get<std::size_t>();
  s.rejected = j.at("rejected").get<std::size_t>();
  s.max_depth_reached = j.at("max_depth_reached").get<std::size_t>();
  s.policy_steps = j.at("policy_steps").get<std::size_t>();
  return s;
}

inline SearchStatus status_from_name(std::string_view s) {
  for (SearchStatus v : {SearchStatus::Solved, SearchStatus::BudgetExhausted, SearchStatus::GlobalCapReached}) {
    if (s == status_name(v)) return v;
  }
  throw FormatError("unknown search status '" + std::string(s) + "'");
}

inline Json to_json(const SearchOutcome& o) {
  return Json{{"status", status_name(o.status)},
              {"cot", o.cot},
              {"backtrack_leaves", o.tree.count_backtrack_leaves()},
              {"stats", to_json(o.stats)},
              {"tree", to_json(o.tree)}};
}

inline SearchOutcome outcome_from_json(const Json& j) {
  SearchOutcome o;
  o.status = status_from_name(j.at("status").get<std::string>());
  o.cot = j.at("cot").get<std::vector<std::string>>();
  o.stats = stats_from_json(j.at("stats"));
  o.tree = tree_from_json(j.at("tree"));
  return o;
}

// ---------------------------------------------------------------------------
// rewards, annotations, oracle fixtures
// ---------------------------------------------------------------------------

struct Annotation {
  std::optional<std::string> id;
  std::string question;
  GroundTruth truth;

  /// Key used for scripted-oracle lookups.
  const std::string& oracle_key() const { return id ? *id : question; }
};

inline Annotation annotation_from_json(const Json& j) {
  Annotation a;
  if (j.contains("id")) a.id = j.at("id").get<std::string>();
  a.question = j.at("question").get<std::string>();
  a.truth.answer = j.at("answer").get<std::string>();
  a.truth.boxes = boxes_from_json(j.at("boxes"));
  return a;
}

inline Json to_json(const Annotation& a) {
  Json j;
  if (a.id) j["id"] = *a.id;
  j["question"] = a.question;
  j["answer"] = a.truth.answer;
  Json boxes = Json::array();
  for (const auto& b : a.truth.boxes) boxes.push_back(to_json(b));
  j["boxes"] = std::move(boxes);
  return j;
}

inline std::vector<Annotation> annotations_from_jsonl(std::string_view text) {
  std::vector<Annotation> out;
  std::size_t i = 0;
  for (const auto& j : parse_jsonl(text, "annotations")) {
    try {
      out.push_back(annotation_from_json(j));
    } catch (const Json::exception& e) {
      throw FormatError("annotation " + std::to_string(i) + ": " + e.what());
    }
    ++i;
  }
  return out;
}

inline Json to_json(const RewardVector& r) {
  return Json{{"acc", r.acc}, {"fmt", r.fmt}, {"sem", r.sem}, {"geo", r.geo}, {"total", r.total}};
}

inline RewardVector reward_from_json(const Json& j) {
  return {j.at("acc").get<double>(), j.at("fmt").get<double>(), j.at("sem").get<double>(),
          j.at("geo").get<double>(), j.at("total").get<double>()};
}

/// {"q1": "answer", ...}
inline std::map<std::string, std::string> scripted_fixture_from_json(const Json& j) {
  if (!j.is_object()) throw FormatError("scripted oracle fixture must be a JSON object");
  std::map<std::string, std::string> m;
  for (const auto& [k, v] : j.items()) m.emplace(k, v.get<std::string>());
  return m;
}

/// {"question": {"fact": "...", "answer": "..."}, ...}
inline std::map<std::string, KeyValueOracle::Task> kv_fixture_from_json(const Json& j) {
  if (!j.is_object()) throw FormatError("key-value oracle fixture must be a JSON object");
  std::map<std::string, KeyValueOracle::Task> m;
  for (const auto& [k, v] : j.items()) {
    m.emplace(k, KeyValueOracle::Task{v.at("fact").get<std::string>(), v.at("answer").get<std::string>()});
  }
  return m;
}

// ---------------------------------------------------------------------------
// parity
// ---------------------------------------------------------------------------

inline Json to_json(const parity::ParityInstance& p) { return Json{{"n", p.n}, {"pi", p.pi}, {"x", p.x}}; }

inline parity::ParityInstance instance_from_json(const Json& j) {
  parity::ParityInstance p{j.at("n").get<std::size_t>(), j.at("pi").get<std::vector<std::size_t>>(),
                           j.at("x").get<std::vector<int>>()};
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("bad parity instance: ") + e.what());
  }
  return p;
}

inline Json to_json(const parity::VerificationReport& r) {
  Json j = to_json(r.instance);
  j["cost"] = r.cost;
  j["first_move"] = r.first_move;
  j["formula"] = r.formula;
  j["switches"] = r.switches;
  j["expected_switches"] = r.expected_switches;
  j["ok"] = r.ok();
  return j;
}

inline parity::VerificationReport report_from_json(const Json& j) {
  parity::VerificationReport r;
  r.instance = instance_from_json(j);
  r.cost = j.at("cost").get<double>();
  r.first_move = j.at("first_move").get<int>();
  r.formula = j.at("formula").get<int>();
  r.switches = j.at("switches").get<std::size_t>();
  r.expected_switches = j.at("expected_switches").get<std::size_t>();
  return r;
}

// ---------------------------------------------------------------------------
// lemma grid CSV
// ---------------------------------------------------------------------------

struct LemmaRow {
  double gamma = 0.0;
  double delta = 0.0;
  std::size_t t_max = 0;
  double epsilon = 0.0;
  std::size_t budget_b = 0;
  std::size_t trials = 0;
  std::size_t successes = 0;
  double rate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double bound = 0.0;  ///< 1 - 4 delta
  double bound_2delta = 0.0;  ///< 1 - 2 delta, for reference only
  std::size_t max_bt_leaves = 0;
  std::size_t leaf_bound = 0;
  std::string recovery = "exact";
  bool pass = false;

  friend bool operator==(const LemmaRow&, const LemmaRow&) = default;
};

inline constexpr std::string_view kLemmaHeader =
    "gamma,delta,t_max,epsilon,B,trials,successes,rate,ci_low,ci_high,bound,bound_2delta,"
    "max_bt_leaves,leaf_bound,recovery,pass";

/// A cell passes when the upper score limit reaches 1 - 4 delta and no trial
/// broke the leaf bound.
inline LemmaRow lemma_row(const lemma::LemmaConfig& c, const lemma::MCEstimate& e, std::string recovery) {
  LemmaRow r{c.gamma,   c.delta,   c.t_max,   e.epsilon,      e.budget_b,
             e.trials,  e.successes, e.rate,  e.ci_low,       e.ci_high,
             1.0 - 4.0 * c.delta,   1.0 - 2.0 * c.delta,  e.max_bt_leaves_observed,
             e.leaf_bound, std::move(recovery), false};
  r.pass = r.ci_high >= r.bound && e.leaf_violations == 0;
  return r;
}

inline std::string lemma_csv(const std::vector<LemmaRow>& rows) {
  std::string s(kLemmaHeader);
  s += '\n';
  for (const auto& r : rows) {
    if (r.recovery.find_first_of(",\"\n") != std::string::npos) {
      throw std::invalid_argument("recovery label must not need CSV quoting");
    }
    s += format_double(r.gamma) + ',' + format_double(r.delta) + ',' + std::to_string(r.t_max) + ',' +
         format_double(r.epsilon) + ',' + std::to_string(r.budget_b) + ',' + std::to_string(r.trials) + ',' +
         std::to_string(r.successes) + ',' + format_double(r.rate) + ',' + format_double(r.ci_low) + ',' +
         format_double(r.ci_high) + ',' + format_double(r.bound) + ',' + format_double(r.bound_2delta) + ',' +
         std::to_string(r.max_bt_leaves) + ',' + std::to_string(r.leaf_bound) + ',' + r.recovery + ',' +
         (r.pass ? "true" : "false") + '\n';
  }
  return s;
}

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t c = line.find(',', pos);
    out.emplace_back(line.substr(pos, c == std::string_view::npos ? std::string_view::npos : c - pos));
    if (c == std::string_view::npos) return out;
    pos = c + 1;
  }
}

template <class T>
T parse_number(const std::string& s, std::string_view column) {
  T v{};
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) {
    throw FormatError("bad value '" + s + "' in column " + std::string(column));
  }
  return v;
}

}  // namespace detail

inline std::vector<LemmaRow> lemma_rows_from_csv(std::string_view text) {
  std::vector<LemmaRow> rows;
  std::size_t pos = 0;
  bool header = true;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    if (line.empty()) continue;
    if (header) {
      if (line != kLemmaHeader) throw FormatError("unexpected lemma CSV header");
      header = false;
      continue;
    }
    const auto f = detail::split_csv_line(line);
    if (f.size() != 16) throw FormatError("lemma CSV row needs 16 fields");
    using detail::parse_number;
    LemmaRow r;
    r.gamma = parse_number<double>(f[0], "gamma");
    r.delta = parse_number<double>(f[1], "delta");
    r.t_max = parse_number<std::size_t>(f[2], "t_max");
    r.epsilon = parse_number<double>(f[3], "epsilon");
    r.budget_b = parse_number<std::size_t>(f[4], "B");
    r.trials = parse_number<std::size_t>(f[5], "trials");
    r.successes = parse_number<std::size_t>(f[6], "successes");
    r.rate = parse_number<double>(f[7], "rate");
    r.ci_low = parse_number<double>(f[8], "ci_low");
    r.ci_high = parse_number<double>(f[9], "ci_high");
    r.bound = parse_number<double>(f[10], "bound");
    r.bound_2delta = parse_number<double>(f[11], "bound_2delta");
    r.max_bt_leaves = parse_number<std::size_t>(f[12], "max_bt_leaves");
    r.leaf_bound = parse_number<std::size_t>(f[13], "leaf_bound");
    r.recovery = f[14];
    if (f[15] != "true" && f[15] != "false") throw FormatError("pass must be true or false");
    r.pass = f[15] == "true";
    rows.push_back(std::move(r));
  }
  if (header) throw FormatError("empty lemma CSV");
  return rows;
}

// ---------------------------------------------------------------------------
// score summary CSV
// ---------------------------------------------------------------------------

struct ScoreSummary {
  std::size_t records = 0;
  RewardVector mean;

  friend bool operator==(const ScoreSummary&, const ScoreSummary&) = default;
};

inline constexpr std::string_view kScoreHeader = "records,acc,fmt,sem,geo,total";

inline std::string score_summary_csv(const ScoreSummary& s) {
  return std::string(kScoreHeader) + '\n' + std::to_string(s.records) + ',' + format_double(s.mean.acc) +
         ',' + format_double(s.mean.fmt) + ',' + format_double(s.mean.sem) + ',' +
         format_double(s.mean.geo) + ',' + format_double(s.mean.total) + '\n';
}

inline ScoreSummary score_summary_from_csv(std::string_view text) {
  const std::size_t nl = text.find('\n');
  if (nl == std::string_view::npos || text.substr(0, nl) != kScoreHeader) {
    throw FormatError("unexpected score summary header");
  }
  std::string_view row = text.substr(nl + 1);
  if (!row.empty() && row.back() == '\n') row.remove_suffix(1);
  const auto f = detail::split_csv_line(row);
  if (f.size() != 6) throw FormatError("score summary row needs 6 fields");
  using detail::parse_number;
  ScoreSummary s;
  s.records = parse_number<std::size_t>(f[0], "records");
  s.mean = {parse_number<double>(f[1], "acc"), parse_number<double>(f[2], "fmt"),
            parse_number<double>(f[3], "sem"), parse_number<double>(f[4], "geo"),
            parse_number<double>(f[5], "total")};
  return s;
}

}  // namespace var::io
