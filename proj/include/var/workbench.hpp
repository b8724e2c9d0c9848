#pragma once

// Command-line driver: score, search, lemma and parity subcommands over the
// library, with one JSON config file and reproducible seeding.
//
// Config precedence: --config flag, else $VAR_WORKBENCH_CONFIG, else built-in
// defaults; individual flags then override fields of whichever was loaded.
// Exit codes: 0 ok, 1 I/O or parse failure, 2 assertion failure or unsolved
// search, 3 bad arguments.

#include "var/http_oracle.hpp"
#include "var/io.hpp"
#include "var/lemma.hpp"
#include "var/parity.hpp"
#include "var/reward.hpp"
#include "var/search.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

namespace var::workbench {

namespace fs = std::filesystem;
using io::Json;

enum ExitCode : int { kOk = 0, kIoFailure = 1, kAssertionFailure = 2, kBadArguments = 3 };

inline constexpr const char* kConfigEnv = "VAR_WORKBENCH_CONFIG";

/// Invalid value supplied by a flag or the config file.
class BadArguments : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct OracleConfig {
  std::string mode = "scripted";  ///< scripted | kv | http
  std::string endpoint;
  std::string fixture_path;
  long timeout_ms = 5000;
};

struct WorkbenchConfig {
  RewardWeights weights;
  Thresholds thresholds;
  SearchConfig search;
  OracleConfig oracle;
  std::string output_dir = "out";
  std::uint64_t master_seed = 1;

  void validate() const {
    try {
      weights.validate();
      thresholds.validate();
      search.validate();
    } catch (const std::invalid_argument& e) {
      throw BadArguments(e.what());
    }
    if (oracle.mode != "scripted" && oracle.mode != "kv" && oracle.mode != "http") {
      throw BadArguments("oracle.mode must be scripted, kv or http");
    }
    if (oracle.timeout_ms <= 0) throw BadArguments("oracle.timeout_ms must be positive");
    if (!oracle.fixture_path.empty() && !fs::exists(oracle.fixture_path)) {
      throw BadArguments("oracle.fixture_path does not exist: " + oracle.fixture_path);
    }
    if (output_dir.empty()) throw BadArguments("output_dir must not be empty");
  }
};

inline Json to_json(const WorkbenchConfig& c) {
  return Json{{"weights", {{"fmt", c.weights.fmt}, {"sem", c.weights.sem}, {"geo", c.weights.geo}}},
              {"thresholds", {{"theta_sem", c.thresholds.theta_sem}, {"theta_geo", c.thresholds.theta_geo}}},
              {"search",
               {{"t_max", c.search.t_max},
                {"budget_b", c.search.budget_b},
                {"max_total_expansions", c.search.max_total_expansions},
                {"forced_backtracks", c.search.forced_backtracks},
                {"full_tree_context", c.search.full_tree_context}}},
              {"oracle",
               {{"mode", c.oracle.mode},
                {"endpoint", c.oracle.endpoint},
                {"fixture_path", c.oracle.fixture_path},
                {"timeout_ms", c.oracle.timeout_ms}}},
              {"output_dir", c.output_dir},
              {"master_seed", c.master_seed}};
}

namespace detail {

// Copies `key` into `dst` if present; unknown keys are rejected so a typo in
// the config file never silently falls back to a default.
template <class T>
void take(const Json& obj, const char* key, T& dst) {
  if (obj.contains(key)) dst = obj.at(key).get<T>();
}

inline void only_keys(const Json& obj, std::initializer_list<const char*> keys, const std::string& where) {
  if (!obj.is_object()) throw io::FormatError(where + " must be an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.count(k)) throw io::FormatError("unknown config key '" + where + "." + k + "'");
  }
}

}  // namespace detail

/// Relative fixture paths resolve against `base_dir`.
inline WorkbenchConfig config_from_json(const Json& j, const fs::path& base_dir = {}) {
  using detail::only_keys;
  using detail::take;
  WorkbenchConfig c;
  try {
    only_keys(j, {"weights", "thresholds", "search", "oracle", "output_dir", "master_seed"}, "config");
    if (j.contains("weights")) {
      const Json& w = j.at("weights");
      only_keys(w, {"fmt", "sem", "geo"}, "weights");
      take(w, "fmt", c.weights.fmt);
      take(w, "sem", c.weights.sem);
      take(w, "geo", c.weights.geo);
    }
    if (j.contains("thresholds")) {
      const Json& t = j.at("thresholds");
      only_keys(t, {"theta_sem", "theta_geo"}, "thresholds");
      take(t, "theta_sem", c.thresholds.theta_sem);
      take(t, "theta_geo", c.thresholds.theta_geo);
    }
    if (j.contains("search")) {
      const Json& s = j.at("search");
      only_keys(s, {"t_max", "budget_b", "max_total_expansions", "forced_backtracks", "full_tree_context"},
                "search");
      take(s, "t_max", c.search.t_max);
      take(s, "budget_b", c.search.budget_b);
      take(s, "max_total_expansions", c.search.max_total_expansions);
      take(s, "forced_backtracks", c.search.forced_backtracks);
      take(s, "full_tree_context", c.search.full_tree_context);
    }
    if (j.contains("oracle")) {
      const Json& o = j.at("oracle");
      only_keys(o, {"mode", "endpoint", "fixture_path", "timeout_ms"}, "oracle");
      take(o, "mode", c.oracle.mode);
      take(o, "endpoint", c.oracle.endpoint);
      take(o, "fixture_path", c.oracle.fixture_path);
      take(o, "timeout_ms", c.oracle.timeout_ms);
    }
    take(j, "output_dir", c.output_dir);
    take(j, "master_seed", c.master_seed);
  } catch (const Json::exception& e) {
    throw io::FormatError(std::string("config: ") + e.what());
  }
  if (!c.oracle.fixture_path.empty() && fs::path(c.oracle.fixture_path).is_relative() && !base_dir.empty()) {
    c.oracle.fixture_path = (base_dir / c.oracle.fixture_path).string();
  }
  return c;
}

/// `flag_path` wins over the environment variable; with neither, defaults.
inline WorkbenchConfig load_config(const std::string& flag_path) {
  std::string path = flag_path;
  if (path.empty()) {
    if (const char* env = std::getenv(kConfigEnv); env && *env) path = env;
  }
  if (path.empty()) return WorkbenchConfig{};
  Json j;
  try {
    j = Json::parse(io::read_file(path));
  } catch (const Json::parse_error& e) {
    throw io::FormatError("config " + path + ": " + e.what());
  }
  return config_from_json(j, fs::path(path).parent_path());
}

inline std::unique_ptr<AnswerOracle> make_oracle(const OracleConfig& c) {
  if (c.mode == "http") {
    if (c.endpoint.empty()) throw BadArguments("http oracle needs oracle.endpoint");
    try {
      return std::make_unique<HttpOracle>(c.endpoint, c.timeout_ms);
    } catch (const std::invalid_argument& e) {
      throw BadArguments(e.what());
    }
  }
  if (c.fixture_path.empty()) throw BadArguments(c.mode + " oracle needs oracle.fixture_path");
  Json j;
  try {
    j = Json::parse(io::read_file(c.fixture_path));
    if (c.mode == "scripted") return std::make_unique<ScriptedOracle>(io::scripted_fixture_from_json(j));
    if (c.mode == "kv") return std::make_unique<KeyValueOracle>(io::kv_fixture_from_json(j));
  } catch (const Json::exception& e) {
    throw io::FormatError("oracle fixture " + c.fixture_path + ": " + e.what());
  }
  throw BadArguments("unknown oracle mode '" + c.mode + "'");
}

/// exact | undershoot:K | overshoot:P:D
inline lemma::Recovery parse_recovery(const std::string& text) {
  std::vector<std::string> fields;
  std::size_t pos = 0;
  while (true) {
    const auto c = text.find(':', pos);
    fields.push_back(text.substr(pos, c == std::string::npos ? std::string::npos : c - pos));
    if (c == std::string::npos) break;
    pos = c + 1;
  }
  try {
    if (fields[0] == "exact" && fields.size() == 1) return lemma::Recovery{};
    if (fields[0] == "undershoot" && fields.size() == 2) {
      return lemma::Recovery::undershoot(io::detail::parse_number<std::size_t>(fields[1], "max_extra"));
    }
    if (fields[0] == "overshoot" && fields.size() == 3) {
      const double p = io::detail::parse_number<double>(fields[1], "prob");
      if (!(p >= 0.0 && p <= 1.0)) throw BadArguments("overshoot probability must lie in [0, 1]");
      return lemma::Recovery::overshoot(p, io::detail::parse_number<std::size_t>(fields[2], "depth"));
    }
  } catch (const io::FormatError& e) {
    throw BadArguments(e.what());
  }
  throw BadArguments("recovery must be exact, undershoot:K or overshoot:P:D, got '" + text + "'");
}

inline lemma::EpsilonScope parse_scope(const std::string& s) {
  if (s == "per-attempt") return lemma::EpsilonScope::PerAttempt;
  if (s == "per-node") return lemma::EpsilonScope::PerNode;
  throw BadArguments("scope must be per-attempt or per-node");
}

/// Flags shared by every subcommand.
struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;

  void attach(CLI::App& sub) {
    sub.add_option("--config", config, "JSON config file (default: $VAR_WORKBENCH_CONFIG)");
    sub.add_option("--seed", seed, "master seed override");
    sub.add_option("--out", out, "output directory override");
  }

  WorkbenchConfig resolve() const {
    WorkbenchConfig c = load_config(config);
    if (seed) c.master_seed = *seed;
    if (!out.empty()) c.output_dir = out;
    return c;
  }
};

inline fs::path prepare_output(const WorkbenchConfig& c) {
  std::error_code ec;
  fs::create_directories(c.output_dir, ec);
  if (ec) throw io::FormatError("cannot create output directory " + c.output_dir + ": " + ec.message());
  return fs::path(c.output_dir);
}

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

struct ScoreFlags {
  std::string trajectories;
  std::string annotations;
  std::string oracle_mode;
  std::string fixture;
  std::string endpoint;
  std::vector<double> weights;
};

/// Each trajectory line is {"trajectory": "..."}, aligned with the annotation
/// on the same line. Unparseable trajectory text scores zero (soft); a broken
/// record or an unavailable oracle is a hard failure.
inline int cmd_score(WorkbenchConfig cfg, const ScoreFlags& f, std::ostream& out, std::ostream& err) {
  if (!f.oracle_mode.empty()) cfg.oracle.mode = f.oracle_mode;
  if (!f.fixture.empty()) cfg.oracle.fixture_path = f.fixture;
  if (!f.endpoint.empty()) cfg.oracle.endpoint = f.endpoint;
  if (!f.weights.empty()) {
    if (f.weights.size() != 3) throw BadArguments("--weights takes fmt,sem,geo");
    cfg.weights = {f.weights[0], f.weights[1], f.weights[2]};
  }
  cfg.validate();
  auto oracle = make_oracle(cfg.oracle);
  const auto annotations = io::annotations_from_jsonl(io::read_file(f.annotations));
  const std::string traj_text = io::read_file(f.trajectories);

  std::vector<std::string> lines;
  for (std::size_t pos = 0; pos < traj_text.size();) {
    std::size_t end = traj_text.find('\n', pos);
    if (end == std::string::npos) end = traj_text.size();
    const auto line = grammar::detail::trim(std::string_view(traj_text).substr(pos, end - pos));
    if (!line.empty()) lines.emplace_back(line);
    pos = end + 1;
  }
  if (lines.size() != annotations.size()) {
    err << "score: " << lines.size() << " trajectories but " << annotations.size() << " annotations\n";
    return kIoFailure;
  }

  std::vector<Json> rows;
  io::ScoreSummary summary;
  std::size_t hard = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& ann = annotations[i];
    Json row{{"index", i}};
    if (ann.id) row["id"] = *ann.id;
    try {
      const std::string text = Json::parse(lines[i]).at("trajectory").get<std::string>();
      const RewardVector r = total_reward(text, ann.oracle_key(), ann.truth, cfg.weights, *oracle);
      const Json scored = io::to_json(r);
      for (const auto& [k, v] : scored.items()) row[k] = v;
      const auto parsed = grammar::parse_trajectory(text);
      if (const auto* fail = std::get_if<grammar::ParseFailure>(&parsed)) {
        row["diagnostic"] = io::to_json(fail->to_diagnostic());
      }
      ++summary.records;
      summary.mean.acc += r.acc;
      summary.mean.fmt += r.fmt;
      summary.mean.sem += r.sem;
      summary.mean.geo += r.geo;
      summary.mean.total += r.total;
    } catch (const Json::exception& e) {
      row["error"] = std::string("bad record: ") + e.what();
      ++hard;
    } catch (const OracleUnavailable& e) {
      row["error"] = std::string("oracle unavailable: ") + e.what();
      ++hard;
    }
    rows.push_back(std::move(row));
  }
  if (summary.records) {
    const double n = static_cast<double>(summary.records);
    summary.mean = {summary.mean.acc / n, summary.mean.fmt / n, summary.mean.sem / n, summary.mean.geo / n,
                    summary.mean.total / n};
  }
  const fs::path dir = prepare_output(cfg);
  io::write_file((dir / "score.jsonl").string(), io::to_jsonl(rows));
  io::write_file((dir / "score_summary.csv").string(), io::score_summary_csv(summary));
  out << "score: " << summary.records << " scored, " << hard << " failed, mean total "
      << io::format_double(summary.mean.total) << "\n";
  return hard ? kIoFailure : kOk;
}

// ---------------------------------------------------------------------------
// search
// ---------------------------------------------------------------------------

struct SearchFlags {
  std::string policy;
  std::string root = "Q";
  std::optional<std::size_t> t_max;
  std::optional<std::size_t> budget;
  std::optional<std::size_t> cap;
  bool lemma_mode = false;
  double gamma = 0.5;
  double epsilon = 0.0;
  std::optional<std::size_t> t_corr;
  std::string recovery = "exact";
  std::string scope = "per-attempt";
  std::string validator;
};

inline int cmd_search(WorkbenchConfig cfg, const SearchFlags& f, std::ostream& out, std::ostream& err) {
  if (f.t_max) cfg.search.t_max = *f.t_max;
  if (f.budget) cfg.search.budget_b = *f.budget;
  if (f.cap) cfg.search.max_total_expansions = *f.cap;
  if (f.lemma_mode) cfg.search.forced_backtracks = false;
  cfg.search.seed = cfg.master_seed;
  cfg.search.thresholds = cfg.thresholds;
  cfg.validate();

  const bool synthetic = f.policy == "synthetic";
  const bool scripted = f.policy.rfind("scripted:", 0) == 0;
  if (!synthetic && !scripted) throw BadArguments("unknown policy '" + f.policy + "'");
  const std::string validator_name = f.validator.empty() ? (synthetic ? "planted" : "permissive") : f.validator;
  if (validator_name != "planted" && validator_name != "permissive") {
    throw BadArguments("validator must be planted or permissive");
  }
  const std::size_t t_corr = f.t_corr.value_or(cfg.search.t_max - 1);
  if (t_corr < 1) throw BadArguments("t-corr must be at least 1");

  SearchTrace trace;
  auto run = [&](auto& policy) {
    if (validator_name == "planted") {
      PlantedChainValidator v{lemma::planted_chain(t_corr), !synthetic};
      trace = trace_search(policy, v, cfg.search, f.root);
    } else {
      PermissiveValidator v;
      trace = trace_search(policy, v, cfg.search, f.root);
    }
  };
  if (synthetic) {
    lemma::SyntheticPolicyParams p;
    p.gamma = f.gamma;
    p.epsilon = f.epsilon;
    p.t_corr = t_corr;
    p.recovery = parse_recovery(f.recovery);
    p.scope = parse_scope(f.scope);
    try {
      p.validate();
    } catch (const std::exception& e) {
      throw BadArguments(e.what());
    }
    lemma::SyntheticPolicy policy(p);
    run(policy);
  } else {
    ScriptedPolicy policy(io::proposals_from_jsonl(io::read_file(f.policy.substr(9))));
    run(policy);
  }

  const fs::path dir = prepare_output(cfg);
  io::write_file((dir / "outcome.json").string(), io::to_json(trace.outcome).dump(2) + "\n");
  io::write_file((dir / "events.jsonl").string(), io::events_to_jsonl(trace.events));

  const std::size_t leaves = trace.outcome.tree.count_backtrack_leaves();
  out << "search: " << status_name(trace.outcome.status) << ", " << trace.outcome.tree.size() << " nodes, "
      << leaves << " backtrack leaves, " << trace.events.size() << " events\n";
  if (synthetic && !cfg.search.forced_backtracks) {
    const std::size_t bound = leaf_bound(cfg.search.t_max, cfg.search.budget_b);
    if (leaves > bound) {
      err << "search: leaf bound violated (" << leaves << " > " << bound << ")\n";
      return kAssertionFailure;
    }
  }
  return trace.outcome.status == SearchStatus::Solved ? kOk : kAssertionFailure;
}

// ---------------------------------------------------------------------------
// lemma
// ---------------------------------------------------------------------------

struct LemmaFlags {
  std::vector<double> gammas{0.3, 0.5, 0.7};
  std::vector<double> deltas{0.05, 0.1, 0.2};
  std::vector<std::size_t> t_maxes{5, 10, 20};
  std::size_t trials = 10000;
  std::string mode = "exact";
  std::optional<double> epsilon;
  std::string scope = "per-attempt";
};

/// One CSV row per (gamma, delta, t_max) cell, T = t_max - 1. Trials of every
/// cell draw from the same master seed.
inline std::vector<io::LemmaRow> lemma_grid(const LemmaFlags& f, std::uint64_t master_seed,
                                            std::ostream* progress = nullptr) {
  const lemma::Recovery recovery = parse_recovery(f.mode);
  lemma::TrialOptions opt;
  opt.master_seed = master_seed;
  opt.epsilon_override = f.epsilon;
  opt.scope = parse_scope(f.scope);
  // fail on any bad cell before spending time on the good ones
  for (double g : f.gammas)
    for (double d : f.deltas)
      for (std::size_t t : f.t_maxes) lemma::LemmaConfig{g, d, t, t - 1, f.trials}.validate();
  std::vector<io::LemmaRow> rows;
  for (double g : f.gammas) {
    for (double d : f.deltas) {
      for (std::size_t t : f.t_maxes) {
        const lemma::LemmaConfig c{g, d, t, t - 1, f.trials};
        rows.push_back(io::lemma_row(c, lemma::run_trials(c, recovery, opt), recovery.label()));
        if (progress) {
          const auto& r = rows.back();
          *progress << "lemma: gamma=" << g << " delta=" << d << " t_max=" << t << " rate=" << r.rate
                    << " ci_high=" << r.ci_high << " bound=" << r.bound << (r.pass ? " pass" : " FAIL") << "\n";
        }
      }
    }
  }
  return rows;
}

inline int cmd_lemma(const WorkbenchConfig& cfg, const LemmaFlags& f, std::ostream& out, std::ostream&) {
  cfg.validate();
  if (f.gammas.empty() || f.deltas.empty() || f.t_maxes.empty()) throw BadArguments("empty grid");
  if (f.epsilon && !(*f.epsilon >= 0.0 && *f.epsilon < 1.0)) throw BadArguments("epsilon must lie in [0, 1)");
  const auto rows = lemma_grid(f, cfg.master_seed, &out);
  const fs::path dir = prepare_output(cfg);
  io::write_file((dir / "lemma.csv").string(), io::lemma_csv(rows));
  bool all = true;
  for (const auto& r : rows) all = all && r.pass;
  return all ? kOk : kAssertionFailure;
}

// ---------------------------------------------------------------------------
// parity
// ---------------------------------------------------------------------------

struct ParityFlags {
  std::vector<std::size_t> ns{2, 4, 6};
  std::size_t perms = 20;
  bool perturb = false;
  double penalty = 1.0;
};

inline constexpr std::size_t kMaxParityN = 20;

/// Every x in {-1,+1}^n for `perms` permutations per n. The permutations for
/// n come from stream derive_stream(master, n).
inline std::vector<parity::VerificationReport> parity_sweep(const ParityFlags& f, std::uint64_t master_seed) {
  for (std::size_t n : f.ns) {
    if (n < 2 || n > kMaxParityN) throw BadArguments("n must lie in [2, 20]");
  }
  if (!(f.penalty > 0.0)) throw BadArguments("penalty must be positive");
  std::vector<parity::VerificationReport> reports;
  for (std::size_t n : f.ns) {
    Rng rng(derive_stream(master_seed, n));
    for (std::size_t k = 0; k < f.perms; ++k) {
      const auto pi = parity::random_permutation(n, rng);
      for (const auto& inst : parity::all_inputs(n, pi)) {
        reports.push_back(parity::verify_instance(inst, f.penalty, f.perturb ? std::optional<std::size_t>(1)
                                                                             : std::nullopt));
      }
    }
  }
  return reports;
}

inline int cmd_parity(const WorkbenchConfig& cfg, const ParityFlags& f, std::ostream& out, std::ostream&) {
  cfg.validate();
  const auto reports = parity_sweep(f, cfg.master_seed);
  std::vector<Json> rows;
  std::size_t failures = 0;
  for (const auto& r : reports) {
    rows.push_back(io::to_json(r));
    failures += !r.ok();
  }
  const fs::path dir = prepare_output(cfg);
  io::write_file((dir / "parity.jsonl").string(), io::to_jsonl(rows));
  out << "parity: " << reports.size() << " checks, " << failures << " failures"
      << (f.perturb ? " (perturbed)" : "") << "\n";
  return failures ? kAssertionFailure : kOk;
}

// ---------------------------------------------------------------------------
// entry point
// ---------------------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Visual attention reasoning workbench"};
  app.require_subcommand(1);

  CommonFlags common;

  ScoreFlags sf;
  auto* score = app.add_subcommand("score", "score trajectories against annotations");
  common.attach(*score);
  score->add_option("--trajectories", sf.trajectories, "JSON lines {trajectory}")->required();
  score->add_option("--annotations", sf.annotations, "JSON lines {question, answer, boxes, id?}")->required();
  score->add_option("--oracle", sf.oracle_mode, "scripted | kv | http");
  score->add_option("--fixture", sf.fixture, "oracle fixture file");
  score->add_option("--endpoint", sf.endpoint, "http oracle URL");
  score->add_option("--weights", sf.weights, "fmt,sem,geo")->delimiter(',');

  SearchFlags hf;
  auto* search = app.add_subcommand("search", "run one budgeted search");
  common.attach(*search);
  search->add_option("--policy", hf.policy, "synthetic | scripted:FILE")->required();
  search->add_option("--root", hf.root, "root proposition");
  search->add_option("--t-max", hf.t_max);
  search->add_option("--budget", hf.budget, "attempt budget B");
  search->add_option("--cap", hf.cap, "node-creation cap");
  search->add_flag("--lemma-mode", hf.lemma_mode, "disable forced backtracks");
  search->add_option("--gamma", hf.gamma, "synthetic: correct-step probability");
  search->add_option("--epsilon", hf.epsilon, "synthetic: recovery failure probability");
  search->add_option("--t-corr", hf.t_corr, "synthetic: correct chain length (default t_max - 1)");
  search->add_option("--recovery", hf.recovery, "exact | undershoot:K | overshoot:P:D");
  search->add_option("--scope", hf.scope, "per-attempt | per-node");
  search->add_option("--validator", hf.validator, "planted | permissive");

  LemmaFlags lf;
  auto* lem = app.add_subcommand("lemma", "Monte-Carlo grid of the success and leaf bounds");
  common.attach(*lem);
  lem->add_option("--gamma", lf.gammas)->delimiter(',');
  lem->add_option("--delta", lf.deltas)->delimiter(',');
  lem->add_option("--t-max", lf.t_maxes)->delimiter(',');
  lem->add_option("--trials", lf.trials);
  lem->add_option("--mode", lf.mode, "exact | undershoot:K | overshoot:P:D");
  lem->add_option("--epsilon", lf.epsilon, "override the derived epsilon");
  lem->add_option("--scope", lf.scope, "per-attempt | per-node");

  ParityFlags pf;
  auto* par = app.add_subcommand("parity", "exhaustive check of the layered-graph parity construction");
  common.attach(*par);
  par->add_option("--n", pf.ns, "comma-separated n values")->delimiter(',');
  par->add_option("--perms", pf.perms, "permutations per n");
  par->add_flag("--perturb", pf.perturb, "swap layer-1 costs (negative control)");
  par->add_option("--penalty", pf.penalty, "penalty weight w");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kBadArguments;
  }

  try {
    const WorkbenchConfig cfg = common.resolve();
    if (*score) return cmd_score(cfg, sf, out, err);
    if (*search) return cmd_search(cfg, hf, out, err);
    if (*lem) return cmd_lemma(cfg, lf, out, err);
    if (*par) return cmd_parity(cfg, pf, out, err);
  } catch (const BadArguments& e) {
    err << "error: " << e.what() << "\n";
    return kBadArguments;
  } catch (const std::domain_error& e) {
    err << "domain error: " << e.what() << "\n";
    return kBadArguments;
  } catch (const io::FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const io::Json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kIoFailure;
  }
  return kBadArguments;
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"var_workbench"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace var::workbench
