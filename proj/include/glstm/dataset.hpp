#pragma once

// Distant supervision: candidate tuples under the minimal-span rule,
// knowledge-base labeling, negative sampling and document-level folds.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "glstm/docgraph.hpp"
#include "glstm/errors.hpp"
#include "glstm/numeric.hpp"

namespace glstm {

inline std::string normalize_canonical(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

class KnowledgeBase {
 public:
  KnowledgeBase() = default;
  KnowledgeBase(std::string relation, std::vector<std::string> roles)
      : relation_(std::move(relation)), roles_(std::move(roles)) {}

  void add(std::vector<std::string> tuple) {
    if (tuple.size() != roles_.size())
      throw Error("knowledge base '" + relation_ + "': tuple of arity " + std::to_string(tuple.size()) + ", expected " +
                  std::to_string(roles_.size()));
    for (auto& id : tuple) id = normalize_canonical(std::move(id));
    tuples_.insert(std::move(tuple));
  }

  bool contains(const std::vector<std::string>& tuple) const {
    std::vector<std::string> key;
    for (const auto& id : tuple) key.push_back(normalize_canonical(id));
    return tuples_.count(key) > 0;
  }

  const std::string& relation() const noexcept { return relation_; }
  const std::vector<std::string>& roles() const noexcept { return roles_; }
  std::size_t arity() const noexcept { return roles_.size(); }
  std::size_t size() const noexcept { return tuples_.size(); }

 private:
  std::string relation_;
  std::vector<std::string> roles_;
  std::set<std::vector<std::string>> tuples_;
};

struct Candidate {
  std::string doc_id;
  std::vector<std::size_t> mentions;       // indices into the document's entities, role order
  std::vector<std::string> mention_ids;
  std::vector<std::string> canonical;      // normalized
  std::size_t first_sentence = 0;
  std::size_t last_sentence = 0;

  std::size_t width() const { return last_sentence - first_sentence + 1; }
  bool overlaps(const Candidate& o) const {
    return first_sentence <= o.last_sentence && o.first_sentence <= last_sentence;
  }
  bool operator==(const Candidate&) const = default;
};

// Role-consistent mention tuples spanning at most K sentences, keeping a
// tuple only when no overlapping co-occurrence of the same canonical
// entities spans strictly fewer sentences. Sorted by (first sentence,
// mention indices).
inline std::vector<Candidate> generate_candidates(const DocumentGraph& doc, const std::vector<std::string>& roles,
                                                  std::size_t k) {
  if (k < 1) throw Error("generate_candidates: K must be at least 1");
  if (roles.empty()) throw Error("generate_candidates: no roles");

  std::vector<std::vector<std::size_t>> fillers(roles.size());
  for (std::size_t r = 0; r < roles.size(); ++r)
    for (std::size_t m = 0; m < doc.entities.size(); ++m)
      if (doc.entities[m].type == roles[r]) fillers[r].push_back(m);

  std::vector<Candidate> all;
  std::vector<std::size_t> chosen;
  auto extend = [&](auto&& self, std::size_t r, std::size_t lo, std::size_t hi) -> void {
    if (r == roles.size()) {
      Candidate c;
      c.doc_id = doc.doc_id;
      c.mentions = chosen;
      for (std::size_t m : chosen) {
        c.mention_ids.push_back(doc.entities[m].id);
        c.canonical.push_back(normalize_canonical(doc.entities[m].canonical));
      }
      c.first_sentence = lo;
      c.last_sentence = hi;
      all.push_back(std::move(c));
      return;
    }
    for (std::size_t m : fillers[r]) {
      if (std::find(chosen.begin(), chosen.end(), m) != chosen.end()) continue;
      const std::size_t s = doc.sentence_of(doc.entities[m]);
      const std::size_t nlo = r == 0 ? s : std::min(lo, s), nhi = r == 0 ? s : std::max(hi, s);
      if (nhi - nlo + 1 > k) continue;
      chosen.push_back(m);
      self(self, r + 1, nlo, nhi);
      chosen.pop_back();
    }
  };
  extend(extend, 0, 0, 0);

  std::map<std::vector<std::string>, std::vector<std::size_t>> by_tuple;
  for (std::size_t i = 0; i < all.size(); ++i) by_tuple[all[i].canonical].push_back(i);

  std::vector<Candidate> kept;
  for (std::size_t i = 0; i < all.size(); ++i) {
    bool dominated = false;
    for (std::size_t j : by_tuple[all[i].canonical])
      if (j != i && all[j].overlaps(all[i]) && all[j].width() < all[i].width()) {
        dominated = true;
        break;
      }
    if (!dominated) kept.push_back(all[i]);
  }
  std::sort(kept.begin(), kept.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.first_sentence, a.mentions) < std::tie(b.first_sentence, b.mentions);
  });
  return kept;
}

struct LabeledCandidate {
  Candidate candidate;
  bool positive = false;

  bool operator==(const LabeledCandidate&) const = default;
};

inline std::vector<LabeledCandidate> label_positives(const std::vector<Candidate>& cands, const KnowledgeBase& kb) {
  std::vector<LabeledCandidate> out;
  out.reserve(cands.size());
  for (const auto& c : cands) {
    if (c.canonical.size() != kb.arity())
      throw Error("label_positives: candidate arity " + std::to_string(c.canonical.size()) + " does not match '" +
                  kb.relation() + "' arity " + std::to_string(kb.arity()));
    out.push_back({c, kb.contains(c.canonical)});
  }
  return out;
}

struct NegativeSample {
  std::vector<LabeledCandidate> negatives;  // in input order
  std::size_t requested = 0;
  std::size_t available = 0;
  bool capped() const { return negatives.size() < requested; }
};

// Uniform sample without replacement of round(ratio * #positives) negative
// candidates, capped at what is available.
inline NegativeSample sample_negatives(const std::vector<LabeledCandidate>& labeled, double ratio, Rng& rng) {
  if (!(ratio > 0)) throw Error("sample_negatives: ratio must be positive");
  std::vector<std::size_t> pool;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    if (labeled[i].positive)
      ++positives;
    else
      pool.push_back(i);
  }

  NegativeSample out;
  out.requested = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(positives)));
  out.available = pool.size();
  if (pool.empty() && out.requested > 0) throw Error("sample_negatives: no negative candidates available");
  const std::size_t take = std::min(out.requested, pool.size());
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(take);
  std::sort(pool.begin(), pool.end());
  for (std::size_t i : pool) out.negatives.push_back(labeled[i]);
  return out;
}

// Documents (sorted by id, then shuffled) are dealt round-robin to k folds;
// each instance takes its document's fold.
inline std::vector<std::size_t> assign_folds(std::span<const std::string> doc_ids, std::size_t k, Rng& rng) {
  if (k < 2) throw Error("assign_folds: need at least 2 folds");
  std::set<std::string> unique(doc_ids.begin(), doc_ids.end());
  if (unique.size() < k)
    throw Error("assign_folds: " + std::to_string(unique.size()) + " documents cannot fill " + std::to_string(k) +
                " folds");
  std::vector<std::string> docs(unique.begin(), unique.end());
  rng.shuffle(docs);
  std::map<std::string, std::size_t> fold_of;
  for (std::size_t i = 0; i < docs.size(); ++i) fold_of[docs[i]] = i % k;
  std::vector<std::size_t> out;
  out.reserve(doc_ids.size());
  for (const auto& d : doc_ids) out.push_back(fold_of.at(d));
  return out;
}

}  // namespace glstm
