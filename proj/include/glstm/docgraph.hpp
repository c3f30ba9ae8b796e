#pragma once

// Typed document graphs over pre-parsed text and their split into a
// left-to-right and a right-to-left DAG.

#include <algorithm>
#include <array>
#include <compare>
#include <cstddef>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "glstm/errors.hpp"

namespace glstm {

enum class EdgeType { kAdjacency = 0, kSyntactic, kNextSentence, kCoreference, kDiscourse };

inline constexpr std::size_t kEdgeTypeCount = 5;

inline constexpr std::array<std::string_view, kEdgeTypeCount> kEdgeTypeNames = {"adjacency", "syndep", "nextsent",
                                                                                "coref", "discourse"};

inline std::string_view edge_type_name(EdgeType t) { return kEdgeTypeNames[static_cast<std::size_t>(t)]; }

inline EdgeType parse_edge_type(std::string_view name) {
  for (std::size_t i = 0; i < kEdgeTypeCount; ++i)
    if (kEdgeTypeNames[i] == name) return static_cast<EdgeType>(i);
  throw GraphError("unknown coarse edge type '" + std::string(name) + "'");
}

struct EdgeLabel {
  EdgeType coarse = EdgeType::kAdjacency;
  std::string fine = "adj";

  static EdgeLabel adjacency() { return {EdgeType::kAdjacency, "adj"}; }
  static EdgeLabel next_sentence() { return {EdgeType::kNextSentence, "nextsent"}; }

  // Throws unless the coarse/fine pairing is consistent.
  void validate() const {
    if (fine.empty()) throw GraphError("edge label: empty fine label");
    const bool adj = coarse == EdgeType::kAdjacency, next = coarse == EdgeType::kNextSentence;
    if (adj != (fine == "adj") || next != (fine == "nextsent"))
      throw GraphError("edge label: fine label '" + fine + "' is reserved or inconsistent with coarse type " +
                       std::string(edge_type_name(coarse)));
  }

  auto operator<=>(const EdgeLabel&) const = default;
  bool operator==(const EdgeLabel&) const = default;
};

struct Token {
  std::size_t index = 0;
  std::string text;
  std::size_t sentence = 0;

  bool operator==(const Token&) const = default;
};

// Inclusive token range.
struct TokenSpan {
  std::size_t first = 0;
  std::size_t last = 0;

  std::size_t length() const { return last - first + 1; }
  bool contains(std::size_t i) const { return first <= i && i <= last; }
  bool operator==(const TokenSpan&) const = default;
};

struct EntityMention {
  std::string id;
  std::string type;
  TokenSpan span;
  std::string canonical;

  bool operator==(const EntityMention&) const = default;
};

// Information flows from source to target.
struct Edge {
  std::size_t source = 0;
  std::size_t target = 0;
  EdgeLabel label;

  auto operator<=>(const Edge&) const = default;
  bool operator==(const Edge&) const = default;
};

struct DocumentGraph {
  std::string doc_id;
  std::vector<Token> tokens;
  std::vector<Edge> edges;  // sorted, unique
  std::vector<EntityMention> entities;

  std::size_t size() const { return tokens.size(); }
  std::size_t sentence_count() const { return tokens.empty() ? 0 : tokens.back().sentence + 1; }
  std::size_t sentence_of(const EntityMention& m) const { return tokens.at(m.span.first).sentence; }

  const EntityMention& entity(std::string_view id) const {
    for (const auto& e : entities)
      if (e.id == id) return e;
    throw GraphError("document " + doc_id + ": no entity mention '" + std::string(id) + "'");
  }

  bool operator==(const DocumentGraph&) const = default;
};

// Raw, pre-annotated input record. Token indices are document-wide.
struct ParsedDocument {
  struct TokenRecord {
    std::string text;
    std::size_t sentence = 0;
  };
  struct DependencyArc {
    long head = -1;  // -1 marks the sentence root
    std::size_t mod = 0;
    std::string label;
  };
  struct LinkArc {
    std::size_t src = 0;
    std::size_t dst = 0;
    std::string label;
  };

  std::string doc_id;
  std::vector<TokenRecord> tokens;
  std::vector<DependencyArc> deps;
  std::vector<EntityMention> entities;
  std::vector<LinkArc> coref;
  std::vector<LinkArc> discourse;

  std::size_t sentence_count() const { return tokens.empty() ? 0 : tokens.back().sentence + 1; }
};

enum class Backbone { kChainOnly, kTreeOnly, kShortestPath, kFullGraph };

struct EdgePolicy {
  Backbone backbone = Backbone::kFullGraph;
  // Only consulted for kFullGraph.
  bool coref = true;
  bool discourse = true;
};

inline std::string_view backbone_name(Backbone b) {
  switch (b) {
    case Backbone::kChainOnly: return "chain";
    case Backbone::kTreeOnly: return "tree";
    case Backbone::kShortestPath: return "shortest-path";
    case Backbone::kFullGraph: return "full";
  }
  return "?";
}

inline Backbone parse_backbone(std::string_view s) {
  if (s == "chain") return Backbone::kChainOnly;
  if (s == "tree") return Backbone::kTreeOnly;
  if (s == "shortest-path") return Backbone::kShortestPath;
  if (s == "full") return Backbone::kFullGraph;
  throw Error("unknown edge policy '" + std::string(s) + "' (expected chain, tree, shortest-path or full)");
}

struct Predecessor {
  std::size_t node = 0;
  EdgeLabel label;

  auto operator<=>(const Predecessor&) const = default;
  bool operator==(const Predecessor&) const = default;
};

// forward[t] holds predecessors j < t, backward[t] holds predecessors j > t.
struct DagPair {
  std::vector<std::vector<Predecessor>> forward;
  std::vector<std::vector<Predecessor>> backward;

  std::size_t size() const { return forward.size(); }

  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& p : forward) n += p.size();
    for (const auto& p : backward) n += p.size();
    return n;
  }

  bool operator==(const DagPair&) const = default;
};

namespace detail {

inline void validate_document(const ParsedDocument& doc) {
  const std::size_t n = doc.tokens.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = doc.tokens[i].sentence;
    const std::size_t prev = i == 0 ? 0 : doc.tokens[i - 1].sentence;
    if (s < prev || s > prev + 1 || (i == 0 && s != 0))
      throw GraphError("document " + doc.doc_id + ": sentence indices must start at 0 and increase by at most 1 (token " +
                       std::to_string(i) + ")");
  }
  for (const auto& arc : doc.deps) {
    if (arc.mod >= n || arc.head < -1 || (arc.head >= 0 && static_cast<std::size_t>(arc.head) >= n))
      throw GraphError("document " + doc.doc_id + ": dependency arc " + std::to_string(arc.head) + "->" +
                       std::to_string(arc.mod) + " references a token out of range");
  }
  std::set<std::string> ids;
  for (const auto& m : doc.entities) {
    if (m.span.first > m.span.last || m.span.last >= n)
      throw GraphError("document " + doc.doc_id + ": mention '" + m.id + "' has an empty or out-of-range span");
    if (doc.tokens[m.span.first].sentence != doc.tokens[m.span.last].sentence)
      throw GraphError("document " + doc.doc_id + ": mention '" + m.id + "' crosses a sentence boundary");
    if (!ids.insert(m.id).second) throw GraphError("document " + doc.doc_id + ": duplicate mention id '" + m.id + "'");
  }
  auto check_links = [&](const std::vector<ParsedDocument::LinkArc>& links, const char* kind) {
    for (const auto& l : links) {
      if (l.src >= n || l.dst >= n)
        throw GraphError("document " + doc.doc_id + ": " + kind + " link references a token out of range");
      if (l.src == l.dst) throw GraphError("document " + doc.doc_id + ": " + kind + " link is a self loop");
    }
  };
  check_links(doc.coref, "coref");
  check_links(doc.discourse, "discourse");
}

// Root token of every sentence: the first token attached to -1 (or to
// itself), else the first whose head leaves the sentence, else the first.
inline std::vector<std::size_t> sentence_roots(const ParsedDocument& doc) {
  const std::size_t sentences = doc.sentence_count();
  std::vector<std::size_t> first(sentences, std::numeric_limits<std::size_t>::max());
  std::vector<std::optional<std::size_t>> root(sentences), escape(sentences);
  for (std::size_t i = doc.tokens.size(); i-- > 0;) first[doc.tokens[i].sentence] = i;
  for (const auto& arc : doc.deps) {
    const std::size_t s = doc.tokens[arc.mod].sentence;
    const bool is_root = arc.head < 0 || static_cast<std::size_t>(arc.head) == arc.mod;
    if (is_root) {
      if (!root[s] || arc.mod < *root[s]) root[s] = arc.mod;
    } else if (doc.tokens[static_cast<std::size_t>(arc.head)].sentence != s) {
      if (!escape[s] || arc.mod < *escape[s]) escape[s] = arc.mod;
    }
  }
  std::vector<std::size_t> out(sentences);
  for (std::size_t s = 0; s < sentences; ++s) out[s] = root[s] ? *root[s] : escape[s] ? *escape[s] : first[s];
  return out;
}

inline EdgeLabel link_label(EdgeType coarse, const std::string& label, const char* fallback) {
  EdgeLabel l{coarse, label.empty() ? std::string(fallback) : label};
  l.validate();
  return l;
}

inline std::vector<std::vector<std::size_t>> dependency_neighbours(const DocumentGraph& g) {
  std::vector<std::set<std::size_t>> sets(g.size());
  for (const auto& e : g.edges) {
    if (e.label.coarse != EdgeType::kSyntactic && e.label.coarse != EdgeType::kNextSentence) continue;
    sets[e.source].insert(e.target);
    sets[e.target].insert(e.source);
  }
  std::vector<std::vector<std::size_t>> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out[i].assign(sets[i].begin(), sets[i].end());
  return out;
}

}  // namespace detail

// Syntactic head of a mention: the first token of its span none of whose
// dependency edges stays inside the span.
inline std::size_t mention_head(const DocumentGraph& g, const EntityMention& m) {
  for (std::size_t t = m.span.first; t <= m.span.last; ++t) {
    bool internal = false;
    for (const auto& e : g.edges)
      if (e.label.coarse == EdgeType::kSyntactic && e.source == t && m.span.contains(e.target)) internal = true;
    if (!internal) return t;
  }
  return m.span.first;
}

namespace detail {

inline std::vector<std::size_t> shortest_path_between(const std::vector<std::vector<std::size_t>>& adj,
                                                      std::size_t from, std::size_t to) {
  constexpr std::size_t kInf = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> dist(adj.size(), kInf);
  std::deque<std::size_t> queue{to};
  dist[to] = 0;
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    for (std::size_t v : adj[u])
      if (dist[v] == kInf) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
  }
  if (dist[from] == kInf) return {};
  // Walking towards the target through the smallest admissible neighbour
  // yields the lexicographically smallest of all shortest paths.
  std::vector<std::size_t> path{from};
  std::size_t u = from;
  while (u != to) {
    for (std::size_t v : adj[u])
      if (dist[v] + 1 == dist[u]) {
        u = v;
        break;
      }
    path.push_back(u);
  }
  return path;
}

}  // namespace detail

// Minimal-length path over undirected dependency and next-sentence edges
// between the syntactic heads of two mentions.
inline std::vector<std::size_t> shortest_dependency_path(const DocumentGraph& g, const EntityMention& a,
                                                         const EntityMention& b) {
  const std::size_t from = mention_head(g, a), to = mention_head(g, b);
  auto path = detail::shortest_path_between(detail::dependency_neighbours(g), from, to);
  if (path.empty())
    throw NoPathError("document " + g.doc_id + ": no dependency path between '" + a.id + "' and '" + b.id + "'");
  return path;
}

inline DocumentGraph build_graph(const ParsedDocument& doc, const EdgePolicy& policy) {
  detail::validate_document(doc);

  DocumentGraph g;
  g.doc_id = doc.doc_id;
  g.entities = doc.entities;
  g.tokens.reserve(doc.tokens.size());
  for (std::size_t i = 0; i < doc.tokens.size(); ++i) g.tokens.push_back({i, doc.tokens[i].text, doc.tokens[i].sentence});

  const std::size_t n = doc.tokens.size();
  std::set<Edge> edges;
  const bool adjacency = policy.backbone == Backbone::kChainOnly || policy.backbone == Backbone::kFullGraph;
  const bool syntax = policy.backbone != Backbone::kChainOnly;
  const bool next_sentence = policy.backbone == Backbone::kFullGraph || policy.backbone == Backbone::kShortestPath;

  if (adjacency)
    for (std::size_t i = 0; i + 1 < n; ++i) edges.insert({i, i + 1, EdgeLabel::adjacency()});

  if (syntax)
    for (const auto& arc : doc.deps) {
      if (arc.head < 0 || static_cast<std::size_t>(arc.head) == arc.mod) continue;
      EdgeLabel label{EdgeType::kSyntactic, arc.label.empty() ? std::string("dep") : arc.label};
      label.validate();
      edges.insert({arc.mod, static_cast<std::size_t>(arc.head), label});
    }

  if (next_sentence) {
    const auto roots = detail::sentence_roots(doc);
    for (std::size_t s = 0; s + 1 < roots.size(); ++s) edges.insert({roots[s], roots[s + 1], EdgeLabel::next_sentence()});
  }

  if (policy.backbone == Backbone::kFullGraph) {
    auto add_links = [&](const std::vector<ParsedDocument::LinkArc>& links, EdgeType coarse, const char* fallback) {
      for (const auto& l : links)
        edges.insert({std::min(l.src, l.dst), std::max(l.src, l.dst), detail::link_label(coarse, l.label, fallback)});
    };
    if (policy.coref) add_links(doc.coref, EdgeType::kCoreference, "coref");
    if (policy.discourse) add_links(doc.discourse, EdgeType::kDiscourse, "discourse");
  }

  g.edges.assign(edges.begin(), edges.end());

  if (policy.backbone == Backbone::kShortestPath) {
    std::set<std::pair<std::size_t, std::size_t>> on_path;
    const auto adj = detail::dependency_neighbours(g);
    for (std::size_t a = 0; a < g.entities.size(); ++a)
      for (std::size_t b = a + 1; b < g.entities.size(); ++b) {
        const auto path = detail::shortest_path_between(adj, mention_head(g, g.entities[a]), mention_head(g, g.entities[b]));
        for (std::size_t k = 0; k + 1 < path.size(); ++k)
          on_path.insert({std::min(path[k], path[k + 1]), std::max(path[k], path[k + 1])});
      }
    std::erase_if(g.edges, [&](const Edge& e) {
      return !on_path.count({std::min(e.source, e.target), std::max(e.source, e.target)});
    });
  }
  return g;
}

inline DagPair partition(const DocumentGraph& g) {
  DagPair dags;
  dags.forward.resize(g.size());
  dags.backward.resize(g.size());
  for (const auto& e : g.edges) {
    if (e.label.coarse == EdgeType::kAdjacency) {
      const std::size_t lo = std::min(e.source, e.target), hi = std::max(e.source, e.target);
      dags.forward[hi].push_back({lo, e.label});
      dags.backward[lo].push_back({hi, e.label});
    } else if (e.source < e.target) {
      dags.forward[e.target].push_back({e.source, e.label});
    } else {
      dags.backward[e.target].push_back({e.source, e.label});
    }
  }
  for (auto& p : dags.forward) std::sort(p.begin(), p.end());
  for (auto& p : dags.backward) std::sort(p.begin(), p.end());
  return dags;
}

// Sub-document covering sentences [first, last], re-indexed from zero.
// Dependency heads that fall outside the window become roots. When
// keep_entities is non-empty only those mentions are carried over.
inline ParsedDocument sentence_window(const ParsedDocument& doc, std::size_t first, std::size_t last,
                                      const std::vector<std::string>& keep_entities = {}) {
  if (first > last || last >= doc.sentence_count())
    throw GraphError("document " + doc.doc_id + ": invalid sentence window [" + std::to_string(first) + ", " +
                     std::to_string(last) + "]");
  ParsedDocument out;
  out.doc_id = doc.doc_id;
  std::size_t begin = doc.tokens.size(), end = 0;
  for (std::size_t i = 0; i < doc.tokens.size(); ++i)
    if (doc.tokens[i].sentence >= first && doc.tokens[i].sentence <= last) {
      begin = std::min(begin, i);
      end = i + 1;
    }
  for (std::size_t i = begin; i < end; ++i) out.tokens.push_back({doc.tokens[i].text, doc.tokens[i].sentence - first});
  auto inside = [&](std::size_t i) { return i >= begin && i < end; };
  for (const auto& arc : doc.deps) {
    if (!inside(arc.mod)) continue;
    const bool head_inside = arc.head >= 0 && inside(static_cast<std::size_t>(arc.head));
    out.deps.push_back({head_inside ? static_cast<long>(static_cast<std::size_t>(arc.head) - begin) : -1, arc.mod - begin,
                        arc.label});
  }
  for (const auto& m : doc.entities) {
    if (!inside(m.span.first) || !inside(m.span.last)) continue;
    if (!keep_entities.empty() && std::find(keep_entities.begin(), keep_entities.end(), m.id) == keep_entities.end())
      continue;
    EntityMention copy = m;
    copy.span = {m.span.first - begin, m.span.last - begin};
    out.entities.push_back(std::move(copy));
  }
  auto copy_links = [&](const std::vector<ParsedDocument::LinkArc>& in, std::vector<ParsedDocument::LinkArc>& dst) {
    for (const auto& l : in)
      if (inside(l.src) && inside(l.dst)) dst.push_back({l.src - begin, l.dst - begin, l.label});
  };
  copy_links(doc.coref, out.coref);
  copy_links(doc.discourse, out.discourse);
  return out;
}

}  // namespace glstm
