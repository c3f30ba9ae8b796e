#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <map>

#include "glstm/docgraph.hpp"
#include "support/random_docs.hpp"

using namespace glstm;

namespace {

ParsedDocument sentence(const std::vector<std::string>& words, std::vector<ParsedDocument::DependencyArc> deps = {}) {
  ParsedDocument d;
  d.doc_id = "t";
  for (const auto& w : words) d.tokens.push_back({w, 0});
  d.deps = std::move(deps);
  return d;
}

bool has_edge(const DocumentGraph& g, std::size_t s, std::size_t t, EdgeType type) {
  return std::any_of(g.edges.begin(), g.edges.end(),
                     [&](const Edge& e) { return e.source == s && e.target == t && e.label.coarse == type; });
}

std::size_t count_type(const DocumentGraph& g, EdgeType type) {
  return std::count_if(g.edges.begin(), g.edges.end(), [&](const Edge& e) { return e.label.coarse == type; });
}

// "All patients were treated with gefitinib" with collapsed dependencies.
ParsedDocument treated_sentence() {
  return sentence({"All", "patients", "were", "treated", "with", "gefitinib"},
                  {{1, 0, "det"}, {3, 1, "nsubjpass"}, {3, 2, "auxpass"}, {-1, 3, "root"}, {3, 5, "prep_with"}});
}

}  // namespace

TEST(EdgeLabel, ReservedFineLabels) {
  EXPECT_NO_THROW(EdgeLabel::adjacency().validate());
  EXPECT_NO_THROW(EdgeLabel::next_sentence().validate());
  EXPECT_THROW((EdgeLabel{EdgeType::kSyntactic, "adj"}).validate(), GraphError);
  EXPECT_THROW((EdgeLabel{EdgeType::kAdjacency, "nsubj"}).validate(), GraphError);
  EXPECT_THROW((EdgeLabel{EdgeType::kSyntactic, ""}).validate(), GraphError);
  EXPECT_EQ(parse_edge_type("coref"), EdgeType::kCoreference);
  EXPECT_THROW(parse_edge_type("other"), Error);
}

TEST(BuildGraph, DependencyEdgesRunChildToParent) {
  const auto g = build_graph(treated_sentence(), {});
  EXPECT_TRUE(has_edge(g, 0, 1, EdgeType::kSyntactic));
  EXPECT_TRUE(has_edge(g, 1, 3, EdgeType::kSyntactic));
  EXPECT_TRUE(has_edge(g, 5, 3, EdgeType::kSyntactic));
  for (std::size_t i = 0; i + 1 < g.size(); ++i) EXPECT_TRUE(has_edge(g, i, i + 1, EdgeType::kAdjacency));
  EXPECT_EQ(count_type(g, EdgeType::kAdjacency), 5u);
  EXPECT_EQ(count_type(g, EdgeType::kSyntactic), 4u);
}

TEST(BuildGraph, SingleTokenHasNoEdges) {
  const auto g = build_graph(sentence({"x"}, {{-1, 0, "root"}}), {});
  EXPECT_EQ(g.size(), 1u);
  EXPECT_TRUE(g.edges.empty());
}

TEST(BuildGraph, ChainOnly) {
  const auto g = build_graph(sentence({"a", "b", "c"}, {{1, 0, "x"}, {-1, 1, "root"}, {1, 2, "y"}}), {Backbone::kChainOnly});
  const std::vector<Edge> want = {{0, 1, EdgeLabel::adjacency()}, {1, 2, EdgeLabel::adjacency()}};
  EXPECT_EQ(g.edges, want);
}

TEST(BuildGraph, TreeOnlyHasOnlyDependencies) {
  auto doc = treated_sentence();
  doc.coref.push_back({0, 5, "coref"});
  const auto g = build_graph(doc, {Backbone::kTreeOnly});
  EXPECT_EQ(count_type(g, EdgeType::kSyntactic), g.edges.size());
}

TEST(BuildGraph, AdjacencyCrossesSentencesAndNextSentenceLinksRoots) {
  ParsedDocument d;
  d.doc_id = "two";
  d.tokens = {{"a", 0}, {"b", 0}, {"c", 1}, {"d", 1}, {"e", 1}};
  d.deps = {{-1, 1, "root"}, {1, 0, "nsubj"}, {3, 2, "det"}, {-1, 3, "root"}, {3, 4, "dobj"}};
  const auto g = build_graph(d, {});
  EXPECT_TRUE(has_edge(g, 1, 2, EdgeType::kAdjacency));
  EXPECT_TRUE(has_edge(g, 1, 3, EdgeType::kNextSentence));
  EXPECT_EQ(count_type(g, EdgeType::kNextSentence), 1u);
}

TEST(BuildGraph, RootFallbacks) {
  ParsedDocument d;
  d.doc_id = "roots";
  d.tokens = {{"a", 0}, {"b", 0}, {"c", 1}, {"d", 1}};
  d.deps = {{1, 0, "x"}, {1, 1, "root"}, {0, 3, "y"}};  // self arc root in s0, escaping head in s1
  const auto g = build_graph(d, {});
  EXPECT_TRUE(has_edge(g, 1, 3, EdgeType::kNextSentence));
  EXPECT_FALSE(has_edge(g, 1, 1, EdgeType::kSyntactic));
  d.deps.clear();  // no arcs at all: first token of each sentence
  EXPECT_TRUE(has_edge(build_graph(d, {}), 0, 2, EdgeType::kNextSentence));
}

TEST(BuildGraph, LinksAreNormalisedAndToggled) {
  auto doc = treated_sentence();
  doc.coref.push_back({5, 1, "coref"});
  doc.discourse.push_back({4, 0, ""});
  const auto g = build_graph(doc, {});
  EXPECT_TRUE(has_edge(g, 1, 5, EdgeType::kCoreference));
  EXPECT_TRUE(has_edge(g, 0, 4, EdgeType::kDiscourse));
  const auto no_coref = build_graph(doc, {Backbone::kFullGraph, false, true});
  EXPECT_EQ(count_type(no_coref, EdgeType::kCoreference), 0u);
  EXPECT_EQ(count_type(no_coref, EdgeType::kDiscourse), 1u);
  const auto none = build_graph(doc, {Backbone::kFullGraph, false, false});
  EXPECT_EQ(count_type(none, EdgeType::kDiscourse), 0u);
}

TEST(BuildGraph, DuplicateArcsCollapseButDistinctLabelsStay) {
  auto g = build_graph(sentence({"a", "b"}, {{1, 0, "x"}, {1, 0, "x"}, {1, 0, "y"}}), {Backbone::kTreeOnly});
  EXPECT_EQ(g.edges.size(), 2u);
}

TEST(BuildGraph, CyclicDependenciesAccepted) {
  const auto g = build_graph(sentence({"a", "b", "c"}, {{1, 0, "x"}, {2, 1, "x"}, {0, 2, "x"}}), {});
  EXPECT_EQ(count_type(g, EdgeType::kSyntactic), 3u);
  const auto dags = partition(g);
  EXPECT_EQ(dags.edge_count(), 3u + 2 * 2);
}

TEST(BuildGraph, RejectsInvalidDocuments) {
  EXPECT_THROW(build_graph(sentence({"a", "b"}, {{5, 0, "x"}}), {}), GraphError);
  EXPECT_THROW(build_graph(sentence({"a", "b"}, {{1, 7, "x"}}), {}), GraphError);
  ParsedDocument d;
  d.doc_id = "m";
  d.tokens = {{"a", 0}, {"b", 1}};
  d.entities = {{"e", "gene", {0, 1}, "g"}};
  EXPECT_THROW(build_graph(d, {}), GraphError);
  d.entities = {{"e", "gene", {0, 0}, "g"}, {"e", "gene", {1, 1}, "g"}};
  EXPECT_THROW(build_graph(d, {}), GraphError);
  d.entities.clear();
  d.tokens = {{"a", 0}, {"b", 2}};
  EXPECT_THROW(build_graph(d, {}), GraphError);
  d.tokens = {{"a", 0}, {"b", 0}};
  d.coref = {{1, 1, "coref"}};
  EXPECT_THROW(build_graph(d, {}), GraphError);
}

TEST(Partition, TreatedSentenceDirections) {
  const auto dags = partition(build_graph(treated_sentence(), {}));
  auto in = [](const std::vector<Predecessor>& preds, std::size_t node, const std::string& fine) {
    return std::any_of(preds.begin(), preds.end(), [&](const Predecessor& p) { return p.node == node && p.label.fine == fine; });
  };
  EXPECT_TRUE(in(dags.forward[1], 0, "det"));
  EXPECT_TRUE(in(dags.backward[3], 5, "prep_with"));
  EXPECT_FALSE(in(dags.forward[3], 5, "prep_with"));
}

TEST(Partition, ChainOnlyIsTwoChains) {
  const auto dags = partition(build_graph(sentence({"a", "b", "c", "d"}), {Backbone::kChainOnly}));
  for (std::size_t t = 0; t < 4; ++t) {
    const std::vector<Predecessor> fwd = t ? std::vector<Predecessor>{{t - 1, EdgeLabel::adjacency()}} : std::vector<Predecessor>{};
    const std::vector<Predecessor> bwd = t < 3 ? std::vector<Predecessor>{{t + 1, EdgeLabel::adjacency()}} : std::vector<Predecessor>{};
    EXPECT_EQ(dags.forward[t], fwd);
    EXPECT_EQ(dags.backward[t], bwd);
  }
}

TEST(Partition, PropertiesOnRandomGraphs) {
  Rng rng(17);
  for (int n = 0; n < 200; ++n) {
    const auto g = build_graph(randdoc::make(rng, "r"), {});
    const auto dags = partition(g);
    std::size_t adj = 0;
    std::multiset<std::tuple<std::size_t, std::size_t, EdgeLabel>> seen;
    for (std::size_t t = 0; t < g.size(); ++t) {
      EXPECT_TRUE(std::is_sorted(dags.forward[t].begin(), dags.forward[t].end()));
      for (const auto& p : dags.forward[t]) {
        EXPECT_LT(p.node, t);
        seen.insert({p.node, t, p.label});
      }
      for (const auto& p : dags.backward[t]) {
        EXPECT_GT(p.node, t);
        if (p.label.coarse != EdgeType::kAdjacency) seen.insert({p.node, t, p.label});
      }
    }
    std::multiset<std::tuple<std::size_t, std::size_t, EdgeLabel>> want;
    for (const auto& e : g.edges) {
      adj += e.label.coarse == EdgeType::kAdjacency;
      want.insert({e.source, e.target, e.label});
    }
    EXPECT_EQ(dags.edge_count(), g.edges.size() + adj);
    EXPECT_EQ(seen, want);
  }
}

TEST(ShortestPath, SameHead) {
  auto doc = sentence({"a", "b"}, {{-1, 1, "root"}, {1, 0, "nn"}});
  doc.entities = {{"x", "gene", {0, 1}, "g"}, {"y", "drug", {1, 1}, "d"}};
  const auto g = build_graph(doc, {});
  EXPECT_EQ(shortest_dependency_path(g, g.entities[0], g.entities[1]), std::vector<std::size_t>{1});
}

TEST(ShortestPath, Chain) {
  auto doc = sentence({"a", "x", "b"}, {{1, 0, "l"}, {-1, 1, "root"}, {1, 2, "r"}});
  doc.entities = {{"a", "gene", {0, 0}, "g"}, {"b", "drug", {2, 2}, "d"}};
  const auto g = build_graph(doc, {});
  EXPECT_EQ(shortest_dependency_path(g, g.entities[0], g.entities[1]), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(ShortestPath, DisconnectedRaisesNoPath) {
  ParsedDocument d;
  d.doc_id = "nopath";
  d.tokens = {{"a", 0}, {"b", 1}};
  d.entities = {{"x", "gene", {0, 0}, "g"}, {"y", "drug", {1, 1}, "d"}};
  const auto g = build_graph(d, {Backbone::kTreeOnly});
  EXPECT_THROW(shortest_dependency_path(g, g.entities[0], g.entities[1]), NoPathError);
}

// All simple paths by depth-first search; the oracle picks the shortest,
// then the lexicographically smallest.
std::vector<std::size_t> brute_force_path(const std::vector<std::vector<std::size_t>>& adj, std::size_t from, std::size_t to) {
  std::vector<std::vector<std::size_t>> paths;
  std::vector<std::size_t> cur{from};
  std::vector<bool> used(adj.size());
  used[from] = true;
  std::function<void(std::size_t)> dfs = [&](std::size_t u) {
    if (u == to) {
      paths.push_back(cur);
      return;
    }
    for (std::size_t v : adj[u])
      if (!used[v]) {
        used[v] = true;
        cur.push_back(v);
        dfs(v);
        cur.pop_back();
        used[v] = false;
      }
  };
  dfs(from);
  if (paths.empty()) return {};
  std::sort(paths.begin(), paths.end(), [](const auto& a, const auto& b) {
    return a.size() != b.size() ? a.size() < b.size() : a < b;
  });
  return paths.front();
}

TEST(ShortestPath, TiesBreakLexicographically) {
  // 0-1-3-5 and 0-2-4-5 have equal length; the 6-node cycle also offers longer detours.
  auto doc = sentence({"a", "b", "c", "d", "e", "f"},
                      {{1, 0, "x"}, {0, 2, "x"}, {3, 1, "x"}, {4, 2, "x"}, {5, 3, "x"}, {5, 4, "x"}});
  doc.entities = {{"s", "gene", {0, 0}, "g"}, {"t", "drug", {5, 5}, "d"}};
  const auto g = build_graph(doc, {});
  const auto got = shortest_dependency_path(g, g.entities[0], g.entities[1]);
  EXPECT_EQ(got, (std::vector<std::size_t>{0, 1, 3, 5}));
  EXPECT_EQ(got, brute_force_path(detail::dependency_neighbours(g), 0, 5));
}

TEST(ShortestPath, MatchesBruteForceOnRandomGraphs) {
  Rng rng(23);
  randdoc::Spec spec;
  spec.max_sentences = 2;
  spec.max_sentence_length = 5;
  for (int n = 0; n < 300; ++n) {
    const auto g = build_graph(randdoc::make(rng, "r", spec), {});
    const auto adj = detail::dependency_neighbours(g);
    for (std::size_t a = 0; a < g.size(); ++a)
      for (std::size_t b = 0; b < g.size(); ++b) ASSERT_EQ(detail::shortest_path_between(adj, a, b), brute_force_path(adj, a, b));
  }
}

TEST(BuildGraph, ShortestPathPolicyKeepsOnlyPathEdges) {
  auto doc = sentence({"a", "x", "b", "z"}, {{1, 0, "l"}, {-1, 1, "root"}, {1, 2, "r"}, {2, 3, "q"}});
  doc.entities = {{"a", "gene", {0, 0}, "g"}, {"b", "drug", {2, 2}, "d"}};
  const auto g = build_graph(doc, {Backbone::kShortestPath});
  const std::vector<Edge> want = {{0, 1, {EdgeType::kSyntactic, "l"}}, {2, 1, {EdgeType::kSyntactic, "r"}}};
  EXPECT_EQ(g.edges, want);
}

TEST(SentenceWindow, ReindexesAndCutsHeads) {
  ParsedDocument d;
  d.doc_id = "w";
  d.tokens = {{"a", 0}, {"b", 1}, {"c", 1}, {"d", 2}};
  d.deps = {{-1, 0, "root"}, {0, 1, "x"}, {1, 2, "y"}, {2, 3, "z"}};
  d.entities = {{"e1", "gene", {1, 1}, "g"}, {"e2", "drug", {3, 3}, "d"}};
  d.coref = {{2, 0, "coref"}, {1, 2, "coref"}};
  const auto w = sentence_window(d, 1, 1);
  ASSERT_EQ(w.tokens.size(), 2u);
  EXPECT_EQ(w.tokens[0].sentence, 0u);
  EXPECT_EQ(w.deps[0].head, -1);
  EXPECT_EQ(w.deps[1].head, 0);
  ASSERT_EQ(w.entities.size(), 1u);
  EXPECT_EQ(w.entities[0].span.first, 0u);
  ASSERT_EQ(w.coref.size(), 1u);
  EXPECT_THROW(sentence_window(d, 2, 1), GraphError);
  EXPECT_THROW(sentence_window(d, 0, 3), GraphError);
}

TEST(MentionHead, FirstTokenLeavingTheSpan) {
  auto doc = sentence({"the", "EGFR", "gene", "mutates"}, {{2, 0, "det"}, {2, 1, "nn"}, {3, 2, "nsubj"}, {-1, 3, "root"}});
  doc.entities = {{"g", "gene", {0, 2}, "EGFR"}};
  const auto g = build_graph(doc, {});
  EXPECT_EQ(mention_head(g, g.entities[0]), 2u);
}
