// glstm: build distant-supervision datasets, train and evaluate graph LSTM
// relation classifiers, extract relations, and check gradients.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "CLI11.hpp"
#include "glstm.hpp"

namespace {

using glstm::Error;
using glstm::json;

struct Output {
  std::unique_ptr<std::ofstream> file;
  std::ostream* stream = &std::cout;

  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    file = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc);
    if (!*file) throw glstm::FormatError("cannot open '" + path + "' for writing");
    stream = file.get();
  }
  std::ostream& operator*() { return *stream; }
};

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

struct ModelFlags {
  std::string variant = "full";
  std::string edges = "full";
  bool coref = true;
  bool discourse = true;
  std::uint64_t seed = 1;
  std::size_t k_sentences = 3;

  CLI::Option* variant_opt = nullptr;
  CLI::Option* edges_opt = nullptr;

  void add(CLI::App* app, bool with_k = true) {
    variant_opt = app->add_option("--variant", variant, "Edge parametrization")
                      ->check(CLI::IsMember({"full", "embed"}))
                      ->capture_default_str();
    edges_opt = app->add_option("--edges", edges, "Graph edge policy")
                    ->check(CLI::IsMember({"chain", "tree", "shortest-path", "full"}))
                    ->capture_default_str();
    app->add_flag("--coref,!--no-coref", coref, "Keep coreference edges (full policy)");
    app->add_flag("--discourse,!--no-discourse", discourse, "Keep discourse edges (full policy)");
    app->add_option("--seed", seed, "Random seed")->capture_default_str();
    if (with_k) app->add_option("--k-sentences", k_sentences, "Maximum sentences spanned by a candidate")->capture_default_str();
  }

  glstm::EdgePolicy policy() const { return {glstm::parse_backbone(edges), coref, discourse}; }
};

struct TrainFlags {
  ModelFlags model;
  glstm::TrainConfig cfg;
  std::string embeddings;
  std::vector<std::string> multitask;

  void add(CLI::App* app) {
    model.add(app);
    app->add_option("--embeddings", embeddings, "Word vector file (token followed by values per line)");
    app->add_option("--multitask", multitask, "Tasks to train jointly, main task first");
    app->add_option("--epochs", cfg.max_epochs, "Maximum epochs")->capture_default_str();
    app->add_option("--batch-size", cfg.batch_size, "Minibatch size")->capture_default_str();
    app->add_option("--lr", cfg.learning_rate, "Learning rate")->capture_default_str();
    app->add_option("--hidden", cfg.dims.hidden, "Hidden size")->capture_default_str();
    app->add_option("--word-dim", cfg.dims.word, "Word embedding size")->capture_default_str();
    app->add_option("--edge-dim", cfg.dims.edge, "Edge-label embedding size")->capture_default_str();
    app->add_option("--patience", cfg.patience, "Early-stopping patience in epochs")->capture_default_str();
    app->add_option("--dev-fraction", cfg.dev_fraction, "Share of main-task documents held out for early stopping")
        ->capture_default_str();
    app->add_option("--clip", cfg.clip, "Elementwise gradient clipping (0 disables)")->capture_default_str();
    app->add_flag("--freeze-embeddings", cfg.freeze_embeddings, "Keep word embeddings fixed");
  }

  glstm::TrainConfig config() const {
    glstm::TrainConfig c = cfg;
    c.seed = model.seed;
    c.variant = glstm::parse_variant(model.variant);
    c.edges = model.policy();
    c.k_sentences = model.k_sentences;
    c.tasks = multitask;
    c.validate();
    return c;
  }

  glstm::EmbeddingLoader loader() const {
    if (embeddings.empty()) return {};
    const std::string path = embeddings;
    return [path](const glstm::Lexicon& vocab, std::size_t dim, glstm::Rng& rng) {
      return glstm::load_embeddings(path, vocab, dim, rng);
    };
  }
};

std::vector<glstm::TaskData> load_tasks(const std::string& corpus, const std::string& instances,
                                        const glstm::EdgePolicy& policy) {
  return glstm::make_tasks(glstm::read_corpus(corpus), glstm::read_instances(instances), policy);
}

// Refuses flags that contradict the configuration stored in a checkpoint.
void check_compatible(const ModelFlags& flags, const glstm::TrainConfig& stored) {
  auto mismatch = [](const std::string& what, const std::string& given, const std::string& saved) {
    throw Error("checkpoint/config mismatch: --" + what + " " + given + " but the checkpoint was trained with " + saved);
  };
  if (flags.variant_opt->count() && glstm::parse_variant(flags.variant) != stored.variant)
    mismatch("variant", flags.variant, std::string(glstm::variant_name(stored.variant)));
  if (flags.edges_opt->count() && glstm::parse_backbone(flags.edges) != stored.edges.backbone)
    mismatch("edges", flags.edges, std::string(glstm::backbone_name(stored.edges.backbone)));
}

void print_report(std::ostream& out, const glstm::TrainReport& r) {
  for (std::size_t e = 0; e < r.epochs_run; ++e) {
    out << "epoch " << e + 1 << " loss " << fixed(r.epoch_loss[e]);
    if (e < r.dev_accuracy.size()) out << " dev_accuracy " << fixed(r.dev_accuracy[e], 4);
    out << '\n';
  }
  if (r.best_epoch)
    out << "best epoch " << r.best_epoch << " dev_accuracy " << fixed(r.best_dev_accuracy, 4)
        << (r.early_stopped ? " (early stop)" : "") << '\n';
  out << "train documents " << r.train_docs.size() << ", dev documents " << r.dev_docs.size() << '\n';
}

json metrics_record(const std::string& kind, const glstm::Metrics& m) {
  json j = glstm::metrics_to_json(m);
  j["record"] = kind;
  return j;
}

int cmd_build_dataset(const std::string& corpus_path, const std::vector<std::string>& kb_paths, std::size_t k,
                      double ratio, std::size_t folds, std::uint64_t seed, const std::string& out_path) {
  const auto corpus = glstm::read_corpus(corpus_path);
  if (corpus.empty()) throw Error("corpus '" + corpus_path + "' has no documents");
  std::set<std::string> types;
  std::vector<std::string> doc_ids;
  std::vector<glstm::DocumentGraph> graphs;
  for (const auto& doc : corpus) {
    graphs.push_back(glstm::build_graph(doc, {glstm::Backbone::kChainOnly}));
    doc_ids.push_back(doc.doc_id);
    for (const auto& m : doc.entities) types.insert(m.type);
  }
  if (std::set<std::string>(doc_ids.begin(), doc_ids.end()).size() != doc_ids.size())
    throw Error("corpus '" + corpus_path + "' repeats a document id");

  std::vector<glstm::KnowledgeBase> kbs;
  for (const auto& path : kb_paths) {
    kbs.push_back(glstm::read_knowledge_base(path));
    for (const auto& role : kbs.back().roles())
      if (!types.count(role))
        throw Error("knowledge base '" + path + "': role '" + role + "' matches no entity type in the corpus");
  }

  glstm::Rng fold_rng(glstm::Rng::derive(seed, 49));
  const auto fold_list = glstm::assign_folds(doc_ids, folds, fold_rng);
  std::map<std::string, std::size_t> fold_of;
  for (std::size_t i = 0; i < doc_ids.size(); ++i) fold_of[doc_ids[i]] = fold_list[i];

  std::vector<glstm::InstanceRecord> records;
  for (std::size_t t = 0; t < kbs.size(); ++t) {
    const auto& kb = kbs[t];
    std::vector<glstm::LabeledCandidate> labeled;
    for (const auto& g : graphs) {
      auto part = glstm::label_positives(glstm::generate_candidates(g, kb.roles(), k), kb);
      labeled.insert(labeled.end(), part.begin(), part.end());
    }
    std::size_t positives = 0;
    for (const auto& c : labeled) positives += c.positive;
    glstm::Rng neg_rng(glstm::Rng::derive(seed, 50 + t));
    const auto sample = glstm::sample_negatives(labeled, ratio, neg_rng);

    std::size_t next_neg = 0;
    for (const auto& c : labeled) {
      bool keep = c.positive;
      if (!keep && next_neg < sample.negatives.size() && sample.negatives[next_neg] == c) {
        keep = true;
        ++next_neg;
      }
      if (!keep) continue;
      glstm::InstanceRecord r;
      r.doc_id = c.candidate.doc_id;
      r.task = kb.relation();
      r.roles = kb.roles();
      r.mention_ids = c.candidate.mention_ids;
      r.first_sentence = c.candidate.first_sentence;
      r.last_sentence = c.candidate.last_sentence;
      r.label = c.positive;
      r.fold = fold_of.at(r.doc_id);
      records.push_back(std::move(r));
    }
    std::cerr << kb.relation() << ": candidates " << labeled.size() << ", positives " << positives << ", negatives "
              << sample.negatives.size();
    if (sample.capped())
      std::cerr << " (requested " << sample.requested << ", only " << sample.available << " available)";
    std::cerr << '\n';
  }
  Output out(out_path);
  glstm::write_instances(*out, records);
  return 0;
}

int cmd_train(const std::string& corpus, const std::string& instances, const TrainFlags& flags, const std::string& out_path) {
  const auto cfg = flags.config();
  auto tasks = load_tasks(corpus, instances, cfg.edges);
  auto trained = glstm::train(std::move(tasks), cfg, flags.loader());
  print_report(std::cout, trained.report);
  if (out_path.empty()) throw Error("train: --out checkpoint path is required");
  glstm::save_checkpoint(out_path, cfg, trained.model);
  std::cout << "checkpoint written to " << out_path << '\n';
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& corpus, const std::string& instances, const ModelFlags& flags,
             double threshold, const std::string& out_path) {
  auto ck = glstm::load_checkpoint(checkpoint);
  check_compatible(flags, ck.config);
  auto tasks = load_tasks(corpus, instances, ck.config.edges);
  Output out(out_path);
  for (auto& t : tasks) {
    ck.model.head(t.task);
    glstm::bind_all(t.instances, ck.model.encoder.vocabulary);
    json j = metrics_record("eval", glstm::evaluate(ck.model, t.instances, threshold));
    j["task"] = t.task;
    j["threshold"] = threshold;
    j["instances"] = t.instances.size();
    *out << j.dump() << '\n';
  }
  return 0;
}

int cmd_crossval(const std::string& corpus, const std::string& instances, const TrainFlags& flags, double threshold,
                 const std::string& out_path) {
  const auto cfg = flags.config();
  const auto tasks = load_tasks(corpus, instances, cfg.edges);
  const auto result = glstm::crossval(tasks, cfg, flags.loader(), threshold);
  Output out(out_path);
  for (const auto& f : result.folds) {
    for (const auto& w : f.warnings) std::cerr << "warning: " << w << '\n';
    json j = metrics_record("fold", f.metrics);
    j["fold"] = f.fold;
    j["train_documents"] = f.train_docs.size();
    j["test_documents"] = f.test_docs.size();
    j["epochs"] = f.report.epochs_run;
    *out << j.dump() << '\n';
  }
  json mean = metrics_record("mean", result.mean);
  mean["folds"] = result.folds.size();
  mean["threshold"] = threshold;
  *out << mean.dump() << '\n';
  return 0;
}

int cmd_extract(const std::string& checkpoint, const std::string& corpus_path, const ModelFlags& flags,
                const std::vector<std::string>& only_tasks, double threshold, const std::string& out_path) {
  auto ck = glstm::load_checkpoint(checkpoint);
  check_compatible(flags, ck.config);
  const auto corpus = glstm::read_corpus(corpus_path);
  struct Row {
    std::string doc_id;
    std::size_t first = 0;
    std::vector<std::string> tuple;
    std::string task;
    std::vector<std::string> mention_ids;
    json record;
  };
  std::vector<Row> rows;
  for (const auto& head : ck.model.heads) {
    if (!only_tasks.empty() && std::find(only_tasks.begin(), only_tasks.end(), head.task) == only_tasks.end()) continue;
    for (const auto& doc : corpus) {
      const auto graph = glstm::build_graph(doc, {glstm::Backbone::kChainOnly});
      for (const auto& c : glstm::generate_candidates(graph, head.roles, flags.k_sentences)) {
        auto inst = glstm::make_instance(doc, head.task, head.roles, c.mention_ids, c.first_sentence, c.last_sentence, false,
                                         ck.config.edges);
        glstm::bind_tokens(inst, ck.model.encoder.vocabulary);
        const double p = glstm::predict(ck.model, inst);
        if (p < threshold) continue;
        json mentions = json::array();
        for (std::size_t r = 0; r < head.roles.size(); ++r)
          mentions.push_back({{"role", head.roles[r]}, {"id", c.mention_ids[r]}, {"canonical", c.canonical[r]}});
        json sentences = json::array();
        for (std::size_t s = c.first_sentence; s <= c.last_sentence; ++s) {
          std::string text;
          for (const auto& tok : doc.tokens)
            if (tok.sentence == s) text += (text.empty() ? "" : " ") + tok.text;
          sentences.push_back({{"index", s}, {"text", text}});
        }
        json rec = {{"doc_id", doc.doc_id},
                    {"task", head.task},
                    {"mentions", mentions},
                    {"probability", std::stod(fixed(p, 6))},
                    {"provenance", sentences}};
        rows.push_back({doc.doc_id, c.first_sentence, c.canonical, head.task, c.mention_ids, std::move(rec)});
      }
    }
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.doc_id, a.first, a.tuple, a.task, a.mention_ids) <
           std::tie(b.doc_id, b.first, b.tuple, b.task, b.mention_ids);
  });
  Output out(out_path);
  for (const auto& r : rows) *out << r.record.dump() << '\n';
  std::cerr << rows.size() << " relations at threshold " << threshold << '\n';
  return 0;
}

int cmd_gradcheck(const std::string& variant, std::uint64_t seed, std::size_t instances) {
  std::vector<glstm::Variant> variants;
  if (variant == "both" || variant == "full") variants.push_back(glstm::Variant::kFull);
  if (variant == "both" || variant == "embed") variants.push_back(glstm::Variant::kEmbed);
  bool ok = true;
  for (auto v : variants) {
    glstm::GradcheckOptions opt;
    opt.variant = v;
    opt.seed = seed;
    opt.instances = instances;
    const auto rep = glstm::run_gradcheck(opt);
    char err[32], tol[32];
    std::snprintf(err, sizeof err, "%.3e", rep.max_relative_error);
    std::snprintf(tol, sizeof tol, "%.0e", opt.tolerance);
    std::cout << glstm::variant_name(v) << ": " << (rep.passed ? "PASS" : "FAIL") << ", max rel err " << err
              << (rep.passed ? " < " : " >= ") << tol << " (" << rep.instances << " instances, " << rep.values_checked
              << " values, worst " << rep.worst << ")\n";
    ok = ok && rep.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph LSTM n-ary relation extraction"};
  app.require_subcommand(1);

  std::string corpus, instances, out, checkpoint;
  std::vector<std::string> kbs, tasks;
  double ratio = 1.0, threshold = 0.5;
  std::size_t folds = 5, gc_instances = 20;
  std::string gc_variant = "both";

  auto* build = app.add_subcommand("build-dataset", "Label candidate tuples against knowledge bases");
  ModelFlags build_flags;
  build->add_option("--corpus", corpus, "Corpus file")->required();
  build->add_option("--kb", kbs, "Knowledge base file, one per relation")->required();
  build->add_option("--neg-ratio", ratio, "Negatives sampled per positive")->capture_default_str();
  build->add_option("--folds", folds, "Number of document folds")->capture_default_str();
  build->add_option("--out", out, "Instance file (default stdout)");
  build->add_option("--seed", build_flags.seed, "Random seed")->capture_default_str();
  build->add_option("--k-sentences", build_flags.k_sentences, "Maximum sentences spanned by a candidate")
      ->capture_default_str();

  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  TrainFlags train_flags;
  train->add_option("--corpus", corpus, "Corpus file")->required();
  train->add_option("--instances", instances, "Instance file")->required();
  train->add_option("--out", out, "Checkpoint path")->required();
  train_flags.add(train);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on labeled instances");
  ModelFlags eval_flags;
  eval->add_option("--checkpoint", checkpoint, "Checkpoint path")->required();
  eval->add_option("--corpus", corpus, "Corpus file")->required();
  eval->add_option("--instances", instances, "Instance file")->required();
  eval->add_option("--threshold", threshold, "Decision threshold")->capture_default_str();
  eval->add_option("--out", out, "Metrics file (default stdout)");
  eval_flags.add(eval, false);

  auto* cv = app.add_subcommand("crossval", "Cross-validate over the instance folds");
  TrainFlags cv_flags;
  cv->add_option("--corpus", corpus, "Corpus file")->required();
  cv->add_option("--instances", instances, "Instance file")->required();
  cv->add_option("--threshold", threshold, "Decision threshold")->capture_default_str();
  cv->add_option("--out", out, "Metrics file (default stdout)");
  cv_flags.add(cv);

  auto* extract = app.add_subcommand("extract", "Score every candidate in a corpus");
  ModelFlags extract_flags;
  extract->add_option("--checkpoint", checkpoint, "Checkpoint path")->required();
  extract->add_option("--corpus", corpus, "Corpus file")->required();
  extract->add_option("--threshold", threshold, "Minimum probability")->capture_default_str();
  extract->add_option("--task", tasks, "Restrict to these tasks");
  extract->add_option("--out", out, "Extraction file (default stdout)");
  extract_flags.add(extract);

  auto* gc = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  std::uint64_t gc_seed = 1;
  gc->add_option("--variant", gc_variant, "Variant to check")
      ->check(CLI::IsMember({"full", "embed", "both"}))
      ->capture_default_str();
  gc->add_option("--seed", gc_seed, "Random seed")->capture_default_str();
  gc->add_option("--instances", gc_instances, "Random instances per variant")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*build)
      return cmd_build_dataset(corpus, kbs, build_flags.k_sentences, ratio, folds, build_flags.seed, out);
    if (*train) return cmd_train(corpus, instances, train_flags, out);
    if (*eval) return cmd_eval(checkpoint, corpus, instances, eval_flags, threshold, out);
    if (*cv) return cmd_crossval(corpus, instances, cv_flags, threshold, out);
    if (*extract) return cmd_extract(checkpoint, corpus, extract_flags, tasks, threshold, out);
    if (*gc) return cmd_gradcheck(gc_variant, gc_seed, gc_instances);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
