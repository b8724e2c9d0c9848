#include "gen.hpp"
#include "var/http_oracle.hpp"
#include "var/io.hpp"
#include "var/workbench.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <thread>

#include <unistd.h>

using namespace var;
namespace fs = std::filesystem;
using io::Json;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("var_io_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

SearchTrace synthetic_trace(std::uint64_t seed, bool forced) {
  lemma::SyntheticPolicyParams p;
  p.gamma = 0.4;
  p.epsilon = 0.2;
  p.t_corr = 4;
  lemma::SyntheticPolicy policy(p);
  PlantedChainValidator v{lemma::planted_chain(4), false};
  SearchConfig c;
  c.t_max = 5;
  c.budget_b = 2;
  c.seed = seed;
  c.forced_backtracks = forced;
  return trace_search(policy, v, c, "Q");
}

}  // namespace

TEST(Io, FormatDoubleRoundTrips) {
  Rng rng(1);
  for (int k = 0; k < 2000; ++k) {
    const double v = rng.uniform(-1e6, 1e6) * (rng.bernoulli(0.5) ? 1e-9 : 1.0);
    EXPECT_EQ(std::stod(io::format_double(v)), v);
  }
  EXPECT_EQ(io::format_double(0.5), "0.5");
  EXPECT_EQ(io::format_double(1.0), "1");
}

TEST(Io, JsonlReportsLineNumbers) {
  EXPECT_EQ(io::parse_jsonl("{\"a\":1}\n\n  \n[2]\n").size(), 2u);
  try {
    io::parse_jsonl("{}\n{oops\n", "thing");
    FAIL();
  } catch (const io::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("thing line 2"), std::string::npos);
  }
}

TEST(Io, BoxesRejectInvertedCorners) {
  EXPECT_EQ(io::box_from_json(Json::parse("[0,1,2,3]")), (BoundingBox{0, 1, 2, 3}));
  EXPECT_THROW(io::box_from_json(Json::parse("[2,0,1,3]")), io::FormatError);
  EXPECT_THROW(io::box_from_json(Json::parse("[1,2,3]")), io::FormatError);
}

TEST(Io, TreeSnapshotRoundTrips) {
  Rng rng(2);
  for (int k = 0; k < 500; ++k) {
    const ReasoningTree t = testgen::random_tree(rng, rng.below(30));
    const Json j = io::to_json(t);
    const ReasoningTree back = io::tree_from_json(Json::parse(j.dump()));
    EXPECT_TRUE(isomorphic(t, back));
    EXPECT_EQ(io::to_json(back).dump(), j.dump());
  }
}

TEST(Io, TreeSnapshotRejectsInconsistency) {
  ReasoningTree t("Q");
  t.extend("a");
  t.extend("b");
  Json j = io::to_json(t);
  j["frontier"] = 1;
  EXPECT_THROW(io::tree_from_json(j), io::FormatError);
  j = io::to_json(t);
  j["nodes"][2]["kind"] = "backtrack";
  j["nodes"][2]["target"] = 2;  // not an ancestor
  EXPECT_THROW(io::tree_from_json(j), io::FormatError);
  j = io::to_json(t);
  j["nodes"][1]["parent"] = 2;
  EXPECT_THROW(io::tree_from_json(j), io::FormatError);
}

TEST(Io, EventsAndOutcomeRoundTrip) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto trace = synthetic_trace(seed, seed % 2 == 0);
    const std::string text = io::events_to_jsonl(trace.events);
    EXPECT_EQ(io::events_from_jsonl(text), trace.events);
    const Json j = io::to_json(trace.outcome);
    const SearchOutcome back = io::outcome_from_json(Json::parse(j.dump()));
    EXPECT_EQ(back.status, trace.outcome.status);
    EXPECT_EQ(back.cot, trace.outcome.cot);
    EXPECT_EQ(back.stats, trace.outcome.stats);
    EXPECT_TRUE(isomorphic(back.tree, trace.outcome.tree));
    EXPECT_EQ(io::to_json(back).dump(), j.dump());
  }
}

TEST(Io, ProposalFileAcceptsBothKeys) {
  const auto ps = io::proposals_from_jsonl(
      "{\"kind\":\"extend\",\"proposition\":\"a\"}\n{\"proposal_kind\":\"backtrack\",\"target\":0}\n"
      "{\"kind\":\"finish\"}\n");
  EXPECT_EQ(ps, (std::vector<StepProposal>{StepProposal::extend("a"), StepProposal::backtrack_to(kRoot),
                                           StepProposal::finish()}));
  EXPECT_THROW(io::proposals_from_jsonl("{\"kind\":\"jump\"}"), io::FormatError);
}

TEST(Io, AnnotationsRoundTrip) {
  const std::string text =
      "{\"id\":\"a1\",\"question\":\"q?\",\"answer\":\"B\",\"boxes\":[[0,0,1,1],[2,2,3.5,4]]}\n"
      "{\"question\":\"r?\",\"answer\":\"\",\"boxes\":[]}\n";
  const auto anns = io::annotations_from_jsonl(text);
  ASSERT_EQ(anns.size(), 2u);
  EXPECT_EQ(anns[0].oracle_key(), "a1");
  EXPECT_EQ(anns[1].oracle_key(), "r?");
  EXPECT_EQ(anns[0].truth.boxes[1], (BoundingBox{2, 2, 3.5, 4}));
  const auto rows = io::parse_jsonl(text);
  for (std::size_t i = 0; i < anns.size(); ++i) EXPECT_EQ(io::to_json(anns[i]), rows[i]);
  EXPECT_THROW(io::annotations_from_jsonl("{\"question\":\"q\"}"), io::FormatError);
}

TEST(Io, RewardAndFixtures) {
  const RewardVector r{1, 0, 1, 1.0 / 7.0, 1.5 + 0.5 / 7.0};
  EXPECT_EQ(io::reward_from_json(Json::parse(io::to_json(r).dump())), r);
  EXPECT_EQ(io::scripted_fixture_from_json(Json::parse("{\"q\":\"A\"}")).at("q"), "A");
  EXPECT_THROW(io::scripted_fixture_from_json(Json::parse("[1]")), io::FormatError);
  const auto kv = io::kv_fixture_from_json(Json::parse("{\"q\":{\"fact\":\"f\",\"answer\":\"a\"}}"));
  EXPECT_EQ(kv.at("q").answer, "a");
}

TEST(Io, ParityRoundTrip) {
  const parity::ParityInstance inst{4, {2, 1, 4, 3}, {-1, -1, 1, -1}};
  const auto rep = parity::verify_instance(inst);
  const auto back = io::report_from_json(Json::parse(io::to_json(rep).dump()));
  EXPECT_EQ(back.instance.pi, inst.pi);
  EXPECT_EQ(back.instance.x, inst.x);
  EXPECT_EQ(back.cost, rep.cost);
  EXPECT_EQ(back.first_move, rep.first_move);
  EXPECT_EQ(back.switches, rep.switches);
  EXPECT_TRUE(back.ok());
  EXPECT_THROW(io::instance_from_json(Json::parse("{\"n\":2,\"pi\":[1,1],\"x\":[1,1]}")), io::FormatError);
}

TEST(Io, LemmaCsvRoundTrips) {
  const lemma::LemmaConfig c{0.5, 0.1, 10, 9, 200};
  lemma::TrialOptions opt;
  std::vector<io::LemmaRow> rows;
  rows.push_back(io::lemma_row(c, lemma::run_trials(c, lemma::Recovery{}, opt), "exact"));
  const auto over = lemma::Recovery::overshoot(0.2, 3);
  rows.push_back(io::lemma_row(c, lemma::run_trials(c, over, opt), over.label()));
  const std::string csv = io::lemma_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), io::kLemmaHeader);
  EXPECT_EQ(io::lemma_rows_from_csv(csv), rows);
  EXPECT_EQ(io::lemma_csv(io::lemma_rows_from_csv(csv)), csv);
  EXPECT_THROW(io::lemma_rows_from_csv("nope\n"), io::FormatError);
  EXPECT_THROW(io::lemma_rows_from_csv(std::string(io::kLemmaHeader) + "\n1,2\n"), io::FormatError);
}

TEST(Io, LemmaRowPassRule) {
  const lemma::LemmaConfig c{0.5, 0.2, 10, 9, 100};
  lemma::MCEstimate e;
  e.ci_high = 0.2;  // exactly 1 - 4 delta
  EXPECT_TRUE(io::lemma_row(c, e, "exact").pass);
  e.ci_high = 0.19999;
  EXPECT_FALSE(io::lemma_row(c, e, "exact").pass);
  e.ci_high = 1.0;
  e.leaf_violations = 1;
  EXPECT_FALSE(io::lemma_row(c, e, "exact").pass);
}

TEST(Io, ScoreSummaryRoundTrips) {
  const io::ScoreSummary s{5, {0.6, 0.8, 0.4, 1.0 / 3.0, 1.3 + 1.0 / 6.0}};
  EXPECT_EQ(io::score_summary_from_csv(io::score_summary_csv(s)), s);
  EXPECT_THROW(io::score_summary_from_csv("a,b\n1,2\n"), io::FormatError);
}

TEST(Config, DefaultsAndOverrides) {
  const auto dir = temp_dir("cfg");
  io::write_file((dir / "oracle.json").string(), "{\"q\":\"A\"}");
  io::write_file((dir / "c.json").string(),
                 "{\"weights\":{\"fmt\":1},\"search\":{\"budget_b\":4},"
                 "\"oracle\":{\"fixture_path\":\"oracle.json\"},\"master_seed\":9}");
  const auto c = workbench::load_config((dir / "c.json").string());
  EXPECT_EQ(c.weights.fmt, 1.0);
  EXPECT_EQ(c.weights.sem, 0.5);
  EXPECT_EQ(c.search.budget_b, 4u);
  EXPECT_EQ(c.search.t_max, 10u);
  EXPECT_EQ(c.master_seed, 9u);
  EXPECT_EQ(fs::path(c.oracle.fixture_path), dir / "oracle.json");
  EXPECT_NO_THROW(c.validate());
  // a config written by to_json reads back to the same JSON
  EXPECT_EQ(workbench::to_json(workbench::config_from_json(workbench::to_json(c))).dump(),
            workbench::to_json(c).dump());
}

TEST(Config, RejectsUnknownKeys) {
  EXPECT_THROW(workbench::config_from_json(Json::parse("{\"wieghts\":{}}")), io::FormatError);
  EXPECT_THROW(workbench::config_from_json(Json::parse("{\"search\":{\"budget\":3}}")), io::FormatError);
  EXPECT_THROW(workbench::config_from_json(Json::parse("{\"master_seed\":\"x\"}")), io::FormatError);
}

TEST(Config, EnvironmentFallback) {
  const auto dir = temp_dir("env");
  io::write_file((dir / "env.json").string(), "{\"master_seed\":42}");
  io::write_file((dir / "flag.json").string(), "{\"master_seed\":7}");
  ::setenv(workbench::kConfigEnv, (dir / "env.json").string().c_str(), 1);
  EXPECT_EQ(workbench::load_config("").master_seed, 42u);
  EXPECT_EQ(workbench::load_config((dir / "flag.json").string()).master_seed, 7u);
  ::unsetenv(workbench::kConfigEnv);
  EXPECT_EQ(workbench::load_config("").master_seed, 1u);
}

TEST(Config, ValidationMapsToBadArguments) {
  workbench::WorkbenchConfig c;
  c.weights.fmt = -1;
  EXPECT_THROW(c.validate(), workbench::BadArguments);
  c = {};
  c.oracle.mode = "psychic";
  EXPECT_THROW(c.validate(), workbench::BadArguments);
  c = {};
  c.oracle.fixture_path = "/definitely/not/here.json";
  EXPECT_THROW(c.validate(), workbench::BadArguments);
}

TEST(Config, RecoveryAndScopeParsing) {
  EXPECT_EQ(workbench::parse_recovery("exact").label(), "exact");
  EXPECT_EQ(workbench::parse_recovery("undershoot:2").label(), "undershoot:2");
  EXPECT_EQ(workbench::parse_recovery("overshoot:0.2:3").label(), "overshoot:0.2:3");
  for (const char* bad : {"", "exact:1", "undershoot", "undershoot:x", "overshoot:2:3", "overshoot:0.1"}) {
    EXPECT_THROW(workbench::parse_recovery(bad), workbench::BadArguments) << bad;
  }
  EXPECT_EQ(workbench::parse_scope("per-node"), lemma::EpsilonScope::PerNode);
  EXPECT_THROW(workbench::parse_scope("per-trial"), workbench::BadArguments);
}

class HttpOracleTest : public ::testing::Test {
 protected:
  void SetUp() override {
    server_.Post("/answer", [](const httplib::Request& req, httplib::Response& res) {
      const auto j = nlohmann::json::parse(req.body);
      const std::string q = j.at("question");
      if (q == "boom") {
        res.status = 500;
        return;
      }
      if (q == "garbage") {
        res.set_content("not json", "text/plain");
        return;
      }
      res.set_content(nlohmann::json{{"answer", "seen:" + j.at("perception").get<std::string>()}}.dump(),
                      "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/answer"; }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

TEST_F(HttpOracleTest, AnswersAndFailures) {
  HttpOracle o(url(), 2000);
  EXPECT_EQ(o.answer("red cube", "q"), "seen:red cube");
  EXPECT_EQ(sem_reward("p", "q", "SEEN:P", o), 1);
  EXPECT_THROW(o.answer("p", "boom"), OracleUnavailable);
  EXPECT_THROW(o.answer("p", "garbage"), OracleUnavailable);
  HttpOracle missing("http://127.0.0.1:" + std::to_string(port_) + "/other", 2000);
  EXPECT_THROW(missing.answer("p", "q"), OracleUnavailable);
}

TEST(HttpOracle, UnreachableAndBadConfig) {
  HttpOracle o("http://127.0.0.1:1/answer", 500);
  EXPECT_THROW(o.answer("p", "q"), OracleUnavailable);
  EXPECT_THROW(HttpOracle("ftp://x/y", 100), std::invalid_argument);
  EXPECT_THROW(HttpOracle("http://x/y", 0), std::invalid_argument);
}
