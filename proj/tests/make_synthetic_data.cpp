// Writes the synthetic corpus, knowledge bases and embedding file used by
// the CLI tests: make_synthetic_data <out-dir> [documents] [seed]

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "support/synthetic.hpp"

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: make_synthetic_data <out-dir> [documents] [seed]\n";
    return 2;
  }
  const std::string dir = argv[1];
  const std::size_t n = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 100;
  const std::uint64_t seed = argc > 3 ? std::strtoull(argv[3], nullptr, 10) : 7;

  const auto examples = synth::make_corpus(seed, n);
  std::vector<glstm::ParsedDocument> docs;
  std::set<std::vector<std::string>> ternary, binary;
  for (const auto& ex : examples) {
    docs.push_back(ex.doc);
    const auto& e = ex.doc.entities;
    if (ex.label) ternary.insert({e[0].canonical, e[1].canonical, e[2].canonical});
    if (ex.drug_gene) binary.insert({e[0].canonical, e[1].canonical});
  }
  std::ofstream corpus(dir + "/corpus.jsonl", std::ios::binary);
  glstm::write_corpus(corpus, docs);

  auto write_kb = [&](const std::string& file, const std::string& header, const std::set<std::vector<std::string>>& rows) {
    std::ofstream out(dir + "/" + file, std::ios::binary);
    out << header << '\n';
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "\t" : "") << r[i];
      out << '\n';
    }
  };
  write_kb("kb_ternary.tsv", "drug-gene-mutation\tdrug\tgene\tmutation", ternary);
  write_kb("kb_binary.tsv", "drug-gene\tdrug\tgene", binary);

  std::ofstream emb(dir + "/embeddings.txt", std::ios::binary);
  synth::write_embeddings(emb, 11);
  return 0;
}
