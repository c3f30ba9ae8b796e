#pragma once

// Line-delimited JSON records for corpora, instances, metrics and
// extractions; tab-separated knowledge bases; whitespace-separated
// embedding files.
//
// Corpus record (one document per line):
//   {"doc_id": "d1",
//    "tokens":   [{"text": "EGFR", "sentence": 0}, ...],
//    "deps":     [{"head": 2, "mod": 0, "label": "nn"}, ...],     head -1 = root
//    "entities": [{"id": "e1", "type": "gene", "start": 0, "end": 0, "canonical": "EGFR"}, ...],
//    "coref":    [{"src": 3, "dst": 9, "label": "coref"}, ...],    optional
//    "discourse":[{"src": 5, "dst": 12, "label": "elaboration"}]}  optional
//
// Instance record:
//   {"doc_id": "d1", "task": "drug-gene-mutation",
//    "mentions": [{"role": "drug", "id": "e3"}, ...],
//    "sentences": [0, 1], "label": 1, "fold": 2}
//
// Knowledge base: first line "<relation>\t<role1>\t<role2>...", then one
// tuple of canonical ids per line in role order.

#include <cstddef>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "glstm/dataset.hpp"
#include "glstm/docgraph.hpp"
#include "glstm/errors.hpp"
#include "glstm/lexicon.hpp"
#include "glstm/numeric.hpp"
#include "glstm/train_eval.hpp"

namespace glstm {

using json = nlohmann::json;

namespace detail {

template <typename T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(std::string("field '") + key + "' has the wrong type");
  }
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  return out;
}

// Calls f(line_number, json) for every non-blank line.
template <typename F>
void for_each_record(std::istream& in, F&& f) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      f(number, json::parse(line));
    } catch (const FormatError&) {
      throw;
    } catch (const json::exception& e) {
      throw FormatError(std::string("malformed record: ") + e.what(), number);
    } catch (const Error& e) {
      throw FormatError(e.what(), number);
    }
  }
}

inline std::vector<ParsedDocument::LinkArc> parse_links(const json& j, const char* key) {
  std::vector<ParsedDocument::LinkArc> out;
  if (!j.contains(key)) return out;
  for (const auto& l : j.at(key))
    out.push_back({field<std::size_t>(l, "src"), field<std::size_t>(l, "dst"), l.value("label", std::string())});
  return out;
}

}  // namespace detail

inline ParsedDocument document_from_json(const json& j) {
  ParsedDocument doc;
  doc.doc_id = detail::field<std::string>(j, "doc_id");
  for (const auto& t : detail::field<json>(j, "tokens"))
    doc.tokens.push_back({detail::field<std::string>(t, "text"), detail::field<std::size_t>(t, "sentence")});
  if (j.contains("deps"))
    for (const auto& d : j.at("deps"))
      doc.deps.push_back({detail::field<long>(d, "head"), detail::field<std::size_t>(d, "mod"), d.value("label", std::string())});
  if (j.contains("entities"))
    for (const auto& e : j.at("entities"))
      doc.entities.push_back({detail::field<std::string>(e, "id"), detail::field<std::string>(e, "type"),
                              {detail::field<std::size_t>(e, "start"), detail::field<std::size_t>(e, "end")},
                              detail::field<std::string>(e, "canonical")});
  doc.coref = detail::parse_links(j, "coref");
  doc.discourse = detail::parse_links(j, "discourse");
  return doc;
}

inline json document_to_json(const ParsedDocument& doc) {
  json j;
  j["doc_id"] = doc.doc_id;
  j["tokens"] = json::array();
  for (const auto& t : doc.tokens) j["tokens"].push_back({{"text", t.text}, {"sentence", t.sentence}});
  j["deps"] = json::array();
  for (const auto& d : doc.deps) j["deps"].push_back({{"head", d.head}, {"mod", d.mod}, {"label", d.label}});
  j["entities"] = json::array();
  for (const auto& e : doc.entities)
    j["entities"].push_back({{"id", e.id}, {"type", e.type}, {"start", e.span.first}, {"end", e.span.last}, {"canonical", e.canonical}});
  auto links = [](const std::vector<ParsedDocument::LinkArc>& v) {
    json a = json::array();
    for (const auto& l : v) a.push_back({{"src", l.src}, {"dst", l.dst}, {"label", l.label}});
    return a;
  };
  if (!doc.coref.empty()) j["coref"] = links(doc.coref);
  if (!doc.discourse.empty()) j["discourse"] = links(doc.discourse);
  return j;
}

inline std::vector<ParsedDocument> read_corpus(std::istream& in) {
  std::vector<ParsedDocument> docs;
  detail::for_each_record(in, [&](std::size_t line, const json& j) {
    docs.push_back(document_from_json(j));
    try {
      build_graph(docs.back(), EdgePolicy{Backbone::kChainOnly});
    } catch (const Error& e) {
      throw FormatError(e.what(), line);
    }
  });
  return docs;
}

inline std::vector<ParsedDocument> read_corpus(const std::string& path) {
  auto in = detail::open_input(path);
  try {
    return read_corpus(in);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline void write_corpus(std::ostream& out, const std::vector<ParsedDocument>& docs) {
  for (const auto& d : docs) out << document_to_json(d).dump() << '\n';
}

struct InstanceRecord {
  std::string doc_id;
  std::string task;
  std::vector<std::string> roles;
  std::vector<std::string> mention_ids;
  std::size_t first_sentence = 0;
  std::size_t last_sentence = 0;
  bool label = false;
  std::size_t fold = 0;

  bool operator==(const InstanceRecord&) const = default;
};

inline json instance_to_json(const InstanceRecord& r) {
  json mentions = json::array();
  for (std::size_t i = 0; i < r.roles.size(); ++i) mentions.push_back({{"role", r.roles[i]}, {"id", r.mention_ids[i]}});
  return {{"doc_id", r.doc_id}, {"task", r.task},   {"mentions", mentions}, {"sentences", {r.first_sentence, r.last_sentence}},
          {"label", r.label ? 1 : 0}, {"fold", r.fold}};
}

inline InstanceRecord instance_from_json(const json& j) {
  InstanceRecord r;
  r.doc_id = detail::field<std::string>(j, "doc_id");
  r.task = detail::field<std::string>(j, "task");
  for (const auto& m : detail::field<json>(j, "mentions")) {
    r.roles.push_back(detail::field<std::string>(m, "role"));
    r.mention_ids.push_back(detail::field<std::string>(m, "id"));
  }
  if (r.roles.empty()) throw Error("instance has no mentions");
  const auto s = detail::field<std::vector<std::size_t>>(j, "sentences");
  if (s.size() != 2 || s[0] > s[1]) throw Error("'sentences' must be [first, last]");
  r.first_sentence = s[0];
  r.last_sentence = s[1];
  const auto& label = j.at("label");
  r.label = label.is_boolean() ? label.get<bool>() : label.get<int>() != 0;
  r.fold = j.value("fold", std::size_t{0});
  return r;
}

inline std::vector<InstanceRecord> read_instances(const std::string& path) {
  auto in = detail::open_input(path);
  std::vector<InstanceRecord> out;
  try {
    detail::for_each_record(in, [&](std::size_t, const json& j) { out.push_back(instance_from_json(j)); });
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
  return out;
}

inline void write_instances(std::ostream& out, const std::vector<InstanceRecord>& records) {
  for (const auto& r : records) out << instance_to_json(r).dump() << '\n';
}

inline KnowledgeBase read_knowledge_base(std::istream& in) {
  auto split = [](const std::string& line) {
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) {
      if (!col.empty() && col.back() == '\r') col.pop_back();
      cols.push_back(col);
    }
    return cols;
  };
  std::string line;
  std::size_t number = 0;
  KnowledgeBase kb;
  bool header = false;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cols = split(line);
    if (!header) {
      if (cols.size() < 2) throw FormatError("knowledge base header needs a relation name and at least one role", number);
      kb = KnowledgeBase(cols[0], std::vector<std::string>(cols.begin() + 1, cols.end()));
      header = true;
      continue;
    }
    if (cols.size() != kb.arity())
      throw FormatError("tuple has " + std::to_string(cols.size()) + " columns, expected " + std::to_string(kb.arity()), number);
    kb.add(std::move(cols));
  }
  if (!header) throw FormatError("knowledge base is empty");
  return kb;
}

inline KnowledgeBase read_knowledge_base(const std::string& path) {
  auto in = detail::open_input(path);
  try {
    return read_knowledge_base(in);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

// Word-embedding table for `vocabulary`: rows for tokens present in the
// file are copied from it, every other row (including the unknown token)
// is drawn uniformly from [-1, 1).
inline Tensor load_embeddings(std::istream& in, const Lexicon& vocabulary, std::size_t dim, Rng& rng) {
  Tensor table = init_uniform({vocabulary.size(), dim}, -1.0, 1.0, rng);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::istringstream ss(line);
    std::string token;
    if (!(ss >> token)) continue;
    std::vector<double> values;
    std::string cell;
    while (ss >> cell) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw FormatError("embedding value '" + cell + "' is not a number", number);
      }
    }
    if (values.size() != dim)
      throw FormatError("embedding for '" + token + "' has " + std::to_string(values.size()) + " values, expected " +
                            std::to_string(dim),
                        number);
    if (!vocabulary.contains(token)) continue;
    auto row = table.row(vocabulary.lookup(token));
    std::copy(values.begin(), values.end(), row.begin());
  }
  return table;
}

inline Tensor load_embeddings(const std::string& path, const Lexicon& vocabulary, std::size_t dim, Rng& rng) {
  auto in = detail::open_input(path);
  try {
    return load_embeddings(in, vocabulary, dim, rng);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline json graph_to_json(const DocumentGraph& g) {
  json j;
  j["doc_id"] = g.doc_id;
  j["tokens"] = json::array();
  for (const auto& t : g.tokens) j["tokens"].push_back({t.index, t.text, t.sentence});
  j["edges"] = json::array();
  for (const auto& e : g.edges)
    j["edges"].push_back({e.source, e.target, std::string(edge_type_name(e.label.coarse)), e.label.fine});
  return j;
}

inline json dags_to_json(const DagPair& d) {
  auto side = [](const std::vector<std::vector<Predecessor>>& lists) {
    json a = json::array();
    for (const auto& preds : lists) {
      json node = json::array();
      for (const auto& p : preds) node.push_back({p.node, std::string(edge_type_name(p.label.coarse)), p.label.fine});
      a.push_back(node);
    }
    return a;
  };
  return {{"forward", side(d.forward)}, {"backward", side(d.backward)}};
}

inline json metrics_to_json(const Metrics& m) {
  return {{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
          {"tp", m.tp},             {"fp", m.fp},               {"tn", m.tn},         {"fn", m.fn}};
}

// Instance built from a record against its source document.
inline RelationInstance make_instance(const ParsedDocument& doc, const InstanceRecord& r, const EdgePolicy& policy) {
  auto inst = make_instance(doc, r.task, r.roles, r.mention_ids, r.first_sentence, r.last_sentence, r.label, policy);
  inst.fold = r.fold;
  return inst;
}

// Groups records by task (in order of first appearance) and resolves them
// against the corpus.
inline std::vector<TaskData> make_tasks(const std::vector<ParsedDocument>& corpus, const std::vector<InstanceRecord>& records,
                                        const EdgePolicy& policy) {
  std::unordered_map<std::string, const ParsedDocument*> by_id;
  for (const auto& d : corpus) by_id.emplace(d.doc_id, &d);
  std::vector<TaskData> tasks;
  for (const auto& r : records) {
    auto it = by_id.find(r.doc_id);
    if (it == by_id.end()) throw Error("instance refers to unknown document '" + r.doc_id + "'");
    auto t = std::find_if(tasks.begin(), tasks.end(), [&](const TaskData& td) { return td.task == r.task; });
    if (t == tasks.end()) {
      tasks.push_back({r.task, {}});
      t = std::prev(tasks.end());
    }
    t->instances.push_back(make_instance(*it->second, r, policy));
  }
  return tasks;
}

}  // namespace glstm
