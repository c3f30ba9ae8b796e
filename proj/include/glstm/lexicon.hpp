#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace glstm {

// String <-> dense id table. Id 0 is reserved for unknown entries.
class Lexicon {
 public:
  explicit Lexicon(std::string unknown = "<unk>") { add(std::move(unknown)); }

  std::size_t add(const std::string& entry) {
    auto [it, inserted] = index_.try_emplace(entry, entries_.size());
    if (inserted) entries_.push_back(entry);
    return it->second;
  }

  // Id of entry, or 0 when absent.
  std::size_t lookup(std::string_view entry) const {
    auto it = index_.find(std::string(entry));
    return it == index_.end() ? 0 : it->second;
  }

  bool contains(std::string_view entry) const { return index_.count(std::string(entry)) > 0; }
  std::size_t size() const noexcept { return entries_.size(); }
  const std::string& operator[](std::size_t id) const { return entries_.at(id); }
  const std::vector<std::string>& entries() const noexcept { return entries_; }

  static Lexicon from_entries(const std::vector<std::string>& entries) {
    Lexicon lex(entries.empty() ? std::string("<unk>") : entries.front());
    for (std::size_t i = 1; i < entries.size(); ++i) lex.add(entries[i]);
    return lex;
  }

  bool operator==(const Lexicon& o) const { return entries_ == o.entries_; }

 private:
  std::vector<std::string> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace glstm
