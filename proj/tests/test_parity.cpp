#include "var/parity.hpp"

#include <gtest/gtest.h>

#include <limits>
#include <set>

using namespace var;
using namespace var::parity;

namespace {

std::vector<std::size_t> identity(std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i + 1;
  return p;
}

// Enumerates every row assignment r_0..r_n straight from the layer rules,
// without building a graph. Returns the optimal cost and the set of starting
// rows (+1 = A, -1 = B) that attain it.
struct BruteResult {
  double cost = std::numeric_limits<double>::infinity();
  std::set<int> starts;
  std::set<std::size_t> switch_counts;
};

BruteResult brute_force(const ParityInstance& inst, double w) {
  BruteResult best;
  const std::size_t n = inst.n;
  for (std::size_t mask = 0; mask < (std::size_t{1} << (n + 1)); ++mask) {
    // bit j set means layer j is in row B
    auto row_b = [&](std::size_t j) { return (mask >> j & 1) != 0; };
    double cost = 0.0;
    std::size_t switches = 0;
    bool legal = true;
    for (std::size_t j = 1; j <= n && legal; ++j) {
      const bool sw = row_b(j) != row_b(j - 1);
      switches += sw;
      if (j % 2 == 0) {
        legal = !sw;
      } else {
        const bool plus = inst.x[inst.pi[j - 1] - 1] == 1;
        cost += (plus == !sw) ? 0.0 : w;
      }
    }
    if (!legal) continue;
    if (row_b(n)) cost += w;
    const int start = row_b(0) ? -1 : 1;
    if (cost < best.cost) {
      best = {cost, {start}, {switches}};
    } else if (cost == best.cost) {
      best.starts.insert(start);
      best.switch_counts.insert(switches);
    }
  }
  return best;
}

// Counts source-to-sink paths by DFS over the built graph.
std::size_t count_paths(const LayeredGraph& g, std::size_t v) {
  if (v == g.sink()) return 1;
  std::size_t k = 0;
  for (std::size_t e : g.out(v)) k += count_paths(g, g.edges()[e].to);
  return k;
}

}  // namespace

TEST(Parity, TwoLayersAllPlus) {
  const ParityInstance inst{2, {1, 2}, {1, 1}};
  const auto g = build_graph(inst);
  for (const Edge& e : g.edges()) {
    const Vertex u = g.describe(e.from), v = g.describe(e.to);
    if (u.kind != Vertex::Kind::Layer || v.kind != Vertex::Kind::Layer || v.layer != 1) continue;
    EXPECT_EQ(e.weight, u.row == v.row ? 0.0 : 1.0) << g.name(e.from) << "->" << g.name(e.to);
  }
  const auto r = shortest_path(g);
  EXPECT_EQ(r.cost, 0.0);
  std::vector<std::string> names;
  for (std::size_t v : r.path) names.push_back(g.name(v));
  EXPECT_EQ(names, (std::vector<std::string>{"s", "a_0", "a_1", "a_2", "t"}));
  EXPECT_EQ(first_move(g, r), 1);
}

TEST(Parity, TwoLayersOddNegative) {
  const ParityInstance inst{2, {1, 2}, {-1, 1}};
  const auto g = build_graph(inst);
  const auto r = shortest_path(g);
  EXPECT_EQ(g.name(r.path[1]), "b_0");
  EXPECT_EQ(parity_formula(inst), -1);
  EXPECT_TRUE(verify_instance(inst).ok());
}

TEST(Parity, FourLayersPermuted) {
  // odd positions read x_2 = -1 and x_4 = -1, so the parity is +1
  const ParityInstance inst{4, {2, 1, 4, 3}, {-1, -1, 1, -1}};
  const auto g = build_graph(inst);
  const auto r = shortest_path(g);
  EXPECT_EQ(g.name(r.path[1]), "a_0");
  EXPECT_EQ(odd_negatives(inst), 2u);
  const auto rep = verify_instance(inst);
  EXPECT_TRUE(rep.ok());
  EXPECT_EQ(rep.switches, 2u);
}

TEST(Parity, EdgeAndPathCounts) {
  Rng rng(4);
  for (std::size_t n = 2; n <= 6; ++n) {
    const ParityInstance inst{n, random_permutation(n, rng), std::vector<int>(n, 1)};
    const auto g = build_graph(inst);
    std::size_t want = 4;
    std::size_t paths = 2;
    for (std::size_t j = 1; j <= n; ++j) {
      want += (j % 2 == 1) ? 4 : 2;
      if (j % 2 == 1) paths *= 2;
    }
    EXPECT_EQ(g.edges().size(), want);
    EXPECT_EQ(g.vertex_count(), 2 * n + 4);
    EXPECT_EQ(count_paths(g, g.source()), paths);
    for (const Edge& e : g.edges()) EXPECT_LT(e.from, e.to);
  }
}

TEST(Parity, MatchesExhaustiveEnumeration) {
  Rng rng(5);
  for (std::size_t n = 2; n <= 8; ++n) {
    for (int rep = 0; rep < 3; ++rep) {
      const auto pi = random_permutation(n, rng);
      for (const auto& inst : all_inputs(n, pi)) {
        for (double w : {1.0, 0.25, 7.0}) {
          const auto g = build_graph(inst, w);
          const auto r = shortest_path(g);
          const auto bf = brute_force(inst, w);
          ASSERT_EQ(r.cost, bf.cost);
          ASSERT_EQ(bf.cost, 0.0);
          ASSERT_EQ(bf.starts, std::set<int>{parity_formula(inst)});
          ASSERT_EQ(bf.switch_counts, std::set<std::size_t>{odd_negatives(inst)});
          ASSERT_EQ(first_move(g, r), parity_formula(inst));
        }
      }
    }
  }
}

TEST(Parity, FormulaIsSignOfOddNegatives) {
  Rng rng(6);
  for (std::size_t n = 2; n <= 10; ++n) {
    const auto pi = random_permutation(n, rng);
    for (const auto& inst : all_inputs(n, pi)) {
      EXPECT_EQ(parity_formula(inst), odd_negatives(inst) % 2 == 0 ? 1 : -1);
    }
  }
}

TEST(Parity, EvenPositionsAreIgnored) {
  Rng rng(7);
  for (int k = 0; k < 200; ++k) {
    const std::size_t n = 2 + rng.below(9);
    ParityInstance inst{n, random_permutation(n, rng), std::vector<int>(n, 1)};
    for (auto& v : inst.x) v = rng.bernoulli(0.5) ? 1 : -1;
    const auto base = verify_instance(inst);
    ParityInstance flipped = inst;
    for (std::size_t j = 2; j <= n; j += 2) flipped.x[inst.pi[j - 1] - 1] *= -1;
    const auto rep = verify_instance(flipped);
    EXPECT_EQ(rep.formula, base.formula);
    EXPECT_EQ(rep.first_move, base.first_move);
  }
}

TEST(Parity, PenaltyScaleDoesNotMovePath) {
  Rng rng(8);
  for (int k = 0; k < 200; ++k) {
    const std::size_t n = 2 + rng.below(9);
    ParityInstance inst{n, random_permutation(n, rng), std::vector<int>(n, 1)};
    for (auto& v : inst.x) v = rng.bernoulli(0.5) ? 1 : -1;
    const auto p1 = shortest_path(build_graph(inst, 1.0)).path;
    EXPECT_EQ(shortest_path(build_graph(inst, 0.001)).path, p1);
    EXPECT_EQ(shortest_path(build_graph(inst, 1000.0)).path, p1);
  }
}

TEST(Parity, PerturbedLayerIsCaught) {
  std::size_t failures = 0, total = 0;
  for (std::size_t n : {2u, 4u, 6u}) {
    for (const auto& inst : all_inputs(n, identity(n))) {
      const auto rep = verify_instance(inst, 1.0, 1);
      ++total;
      failures += !rep.ok();
      // the swapped layer flips the optimal start
      EXPECT_NE(rep.first_move, rep.formula);
    }
  }
  EXPECT_EQ(failures, total);
}

TEST(Parity, RandomPermutationIsPermutation) {
  Rng rng(9);
  std::set<std::vector<std::size_t>> seen;
  for (int k = 0; k < 600; ++k) {
    const auto p = random_permutation(3, rng);
    ParityInstance{3, p, {1, 1, 1}}.validate();
    seen.insert(p);
  }
  EXPECT_EQ(seen.size(), 6u);
  for (std::size_t n = 2; n <= 20; ++n) {
    const auto p = random_permutation(n, rng);
    EXPECT_NO_THROW((ParityInstance{n, p, std::vector<int>(n, 1)}.validate()));
  }
}

TEST(Parity, ValidationErrors) {
  EXPECT_THROW((ParityInstance{1, {1}, {1}}.validate()), std::invalid_argument);
  EXPECT_THROW((ParityInstance{2, {1, 1}, {1, 1}}.validate()), std::invalid_argument);
  EXPECT_THROW((ParityInstance{2, {1, 2}, {1, 0}}.validate()), std::invalid_argument);
  EXPECT_THROW((ParityInstance{2, {1, 2}, {1}}.validate()), std::invalid_argument);
  EXPECT_THROW(build_graph(ParityInstance{2, {1, 2}, {1, 1}}, 0.0), std::invalid_argument);
}
