#pragma once

// Layered two-row shortest-path environment whose optimal first move is the
// parity of the -1 entries of x at odd positions under a permutation.
//
// Layers 0..n each hold a_j (row A) and b_j (row B). The source feeds a_0 and
// b_0 at no cost. Layer j-1 -> j transitions:
//   odd j:  keep-row edges cost 0 iff x_{pi(j)} = +1, switch-row edges cost 0
//           iff x_{pi(j)} = -1; the other pair costs the penalty w.
//   even j: keep-row edges only, cost 0.
// a_n -> t costs 0 and b_n -> t costs w, so a zero-cost path must end in row A.

#include "var/rng.hpp"

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace var::parity {

struct ParityInstance {
  std::size_t n = 0;
  /// pi[j-1] is pi(j), a permutation of 1..n.
  std::vector<std::size_t> pi;
  /// Entries are +1 or -1.
  std::vector<int> x;

  void validate() const {
    if (n < 2) throw std::invalid_argument("n must be at least 2");
    if (pi.size() != n || x.size() != n) throw std::invalid_argument("pi and x must have n entries");
    std::vector<bool> seen(n + 1, false);
    for (std::size_t v : pi) {
      if (v < 1 || v > n || seen[v]) throw std::invalid_argument("pi is not a permutation of 1..n");
      seen[v] = true;
    }
    for (int v : x) {
      if (v != 1 && v != -1) throw std::invalid_argument("x entries must be +1 or -1");
    }
  }

  /// x_{pi(j)} for 1-based j.
  int permuted(std::size_t j) const { return x[pi[j - 1] - 1]; }
};

enum class Row { A, B };

struct Vertex {
  enum class Kind { Source, Layer, Sink };
  Kind kind = Kind::Source;
  Row row = Row::A;
  std::size_t layer = 0;
};

struct Edge {
  std::size_t from = 0;
  std::size_t to = 0;
  double weight = 0.0;
};

/// Vertex ids: source 0, a_j = 1 + 2j, b_j = 2 + 2j, sink 2n + 3. Every edge
/// goes from a lower id to a higher one.
class LayeredGraph {
 public:
  LayeredGraph(std::size_t n, double penalty_w) : n_(n), penalty_w_(penalty_w), out_(2 * n + 4) {}

  std::size_t n() const noexcept { return n_; }
  double penalty() const noexcept { return penalty_w_; }
  std::size_t vertex_count() const noexcept { return out_.size(); }
  std::size_t source() const noexcept { return 0; }
  std::size_t sink() const noexcept { return 2 * n_ + 3; }
  std::size_t vertex(Row r, std::size_t layer) const noexcept {
    return (r == Row::A ? 1 : 2) + 2 * layer;
  }

  Vertex describe(std::size_t v) const {
    if (v == source()) return {Vertex::Kind::Source, Row::A, 0};
    if (v == sink()) return {Vertex::Kind::Sink, Row::A, n_ + 1};
    return {Vertex::Kind::Layer, (v % 2 == 1) ? Row::A : Row::B, (v - 1) / 2};
  }

  std::string name(std::size_t v) const {
    const Vertex d = describe(v);
    if (d.kind == Vertex::Kind::Source) return "s";
    if (d.kind == Vertex::Kind::Sink) return "t";
    return std::string(d.row == Row::A ? "a_" : "b_") + std::to_string(d.layer);
  }

  void add_edge(std::size_t from, std::size_t to, double w) {
    if (!(w >= 0.0)) throw std::invalid_argument("edge weights must be non-negative");
    out_[from].push_back(edges_.size());
    edges_.push_back({from, to, w});
  }

  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<std::size_t>& out(std::size_t v) const { return out_[v]; }

 private:
  std::size_t n_;
  double penalty_w_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> out_;
};

/// `perturb_layer`, if set to an odd layer, swaps that layer's keep and
/// switch costs. Used as a negative control.
inline LayeredGraph build_graph(const ParityInstance& inst, double penalty_w = 1.0,
                                std::optional<std::size_t> perturb_layer = std::nullopt) {
  inst.validate();
  if (!(penalty_w > 0.0)) throw std::invalid_argument("penalty_w must be positive");
  const std::size_t n = inst.n;
  LayeredGraph g(n, penalty_w);
  const std::size_t a0 = g.vertex(Row::A, 0);
  const std::size_t b0 = g.vertex(Row::B, 0);
  g.add_edge(g.source(), a0, 0.0);
  g.add_edge(g.source(), b0, 0.0);
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t pa = g.vertex(Row::A, j - 1), pb = g.vertex(Row::B, j - 1);
    const std::size_t ca = g.vertex(Row::A, j), cb = g.vertex(Row::B, j);
    if (j % 2 == 0) {
      g.add_edge(pa, ca, 0.0);
      g.add_edge(pb, cb, 0.0);
      continue;
    }
    bool plus = inst.permuted(j) == 1;
    if (perturb_layer && *perturb_layer == j) plus = !plus;
    const double keep = plus ? 0.0 : penalty_w;
    const double sw = plus ? penalty_w : 0.0;
    // row-A targets first so ties resolve toward row A
    g.add_edge(pa, ca, keep);
    g.add_edge(pa, cb, sw);
    g.add_edge(pb, ca, sw);
    g.add_edge(pb, cb, keep);
  }
  g.add_edge(g.vertex(Row::A, n), g.sink(), 0.0);
  g.add_edge(g.vertex(Row::B, n), g.sink(), penalty_w);
  return g;
}

struct PathResult {
  double cost = 0.0;
  /// Vertex ids from source to sink.
  std::vector<std::size_t> path;
};

/// Layer-by-layer dynamic programming. Cost-to-go is computed in reverse id
/// order, then the path is traced forward taking the first minimizing edge,
/// which prefers row A on ties.
inline PathResult shortest_path(const LayeredGraph& g) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> to_go(g.vertex_count(), inf);
  to_go[g.sink()] = 0.0;
  for (std::size_t v = g.vertex_count(); v-- > 0;) {
    for (std::size_t e : g.out(v)) {
      const Edge& ed = g.edges()[e];
      to_go[v] = std::min(to_go[v], ed.weight + to_go[ed.to]);
    }
  }
  PathResult r;
  r.cost = to_go[g.source()];
  std::size_t v = g.source();
  r.path.push_back(v);
  while (v != g.sink()) {
    std::size_t best = g.sink();
    double best_cost = inf;
    for (std::size_t e : g.out(v)) {
      const Edge& ed = g.edges()[e];
      const double c = ed.weight + to_go[ed.to];
      if (c < best_cost) {
        best_cost = c;
        best = ed.to;
      }
    }
    v = best;
    r.path.push_back(v);
  }
  return r;
}

/// Product of x_{pi(j)} over odd j.
inline int parity_formula(const ParityInstance& inst) {
  int prod = 1;
  for (std::size_t j = 1; j <= inst.n; j += 2) prod *= inst.permuted(j);
  return prod;
}

/// Number of odd j with x_{pi(j)} = -1.
inline std::size_t odd_negatives(const ParityInstance& inst) {
  std::size_t t = 0;
  for (std::size_t j = 1; j <= inst.n; j += 2) t += inst.permuted(j) == -1;
  return t;
}

/// +1 if the path leaves the source through a_0, -1 through b_0.
inline int first_move(const LayeredGraph& g, const PathResult& r) {
  return r.path.at(1) == g.vertex(Row::A, 0) ? 1 : -1;
}

inline std::size_t row_switches(const LayeredGraph& g, const std::vector<std::size_t>& path) {
  std::size_t k = 0;
  for (std::size_t i = 1; i + 1 < path.size(); ++i) {
    const Vertex u = g.describe(path[i]);
    const Vertex v = g.describe(path[i + 1]);
    if (u.kind == Vertex::Kind::Layer && v.kind == Vertex::Kind::Layer && u.row != v.row) ++k;
  }
  return k;
}

struct VerificationReport {
  ParityInstance instance;
  double cost = 0.0;
  int first_move = 1;
  int formula = 1;
  std::size_t switches = 0;
  std::size_t expected_switches = 0;

  bool cost_is_zero() const noexcept { return cost == 0.0; }
  bool first_move_matches() const noexcept { return first_move == formula; }
  bool switches_match() const noexcept { return switches == expected_switches; }
  bool ok() const noexcept { return cost_is_zero() && first_move_matches() && switches_match(); }
};

inline VerificationReport verify_instance(const ParityInstance& inst, double penalty_w = 1.0,
                                          std::optional<std::size_t> perturb_layer = std::nullopt) {
  const LayeredGraph g = build_graph(inst, penalty_w, perturb_layer);
  const PathResult r = shortest_path(g);
  VerificationReport rep;
  rep.instance = inst;
  rep.cost = r.cost;
  rep.first_move = first_move(g, r);
  rep.formula = parity_formula(inst);
  rep.switches = row_switches(g, r.path);
  rep.expected_switches = odd_negatives(inst);
  return rep;
}

/// Uniform permutation of 1..n (Fisher-Yates).
inline std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{1});
  for (std::size_t i = n; i > 1; --i) {
    std::swap(p[i - 1], p[rng.below(i)]);
  }
  return p;
}

/// All 2^n inputs for one permutation; bit k of the index set means x_{k+1} = -1.
inline std::vector<ParityInstance> all_inputs(std::size_t n, const std::vector<std::size_t>& pi) {
  std::vector<ParityInstance> out;
  out.reserve(std::size_t{1} << n);
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    ParityInstance inst{n, pi, std::vector<int>(n, 1)};
    for (std::size_t k = 0; k < n; ++k) {
      if (mask >> k & 1) inst.x[k] = -1;
    }
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace var::parity
