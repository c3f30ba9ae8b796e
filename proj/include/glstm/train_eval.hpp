#pragma once

// Minibatch SGD with dev-set early stopping and task alternation, k-fold
// cross-validation, classification metrics and McNemar's test.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "glstm/docgraph.hpp"
#include "glstm/errors.hpp"
#include "glstm/graph_lstm.hpp"
#include "glstm/numeric.hpp"
#include "glstm/relation_model.hpp"

namespace glstm {

struct TrainConfig {
  std::size_t batch_size = 8;
  double learning_rate = 0.02;
  std::size_t max_epochs = 30;
  Dimensions dims{150, 100, 3};
  std::size_t patience = 3;
  double dev_fraction = 0.1;
  std::uint64_t seed = 1;
  Variant variant = Variant::kFull;
  EdgePolicy edges;
  std::size_t k_sentences = 3;
  double init_range = 1.0;         // parameters start uniform in [-init_range, init_range]
  double clip = 0.0;               // elementwise gradient clipping; 0 disables
  bool freeze_embeddings = false;
  std::vector<std::string> tasks;  // main task first; empty means order of appearance

  void validate() const {
    if (batch_size == 0 || max_epochs == 0 || patience == 0 || dims.hidden == 0 || dims.word == 0 || dims.edge == 0 ||
        k_sentences == 0)
      throw Error("train config: sizes and counts must be positive");
    if (!(learning_rate > 0) || !(init_range > 0) || clip < 0)
      throw Error("train config: learning rate and init range must be positive, clip non-negative");
    if (dev_fraction < 0 || dev_fraction >= 1) throw Error("train config: dev fraction must lie in [0, 1)");
  }
};

struct TaskData {
  std::string task;
  std::vector<RelationInstance> instances;
};

struct Metrics {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
};

inline Metrics metrics_from(const std::vector<bool>& predicted, const std::vector<bool>& gold) {
  if (predicted.size() != gold.size()) throw Error("metrics: prediction and gold counts differ");
  if (gold.empty()) throw Error("metrics: empty instance set");
  Metrics m;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (predicted[i]) (gold[i] ? m.tp : m.fp)++;
    else (gold[i] ? m.fn : m.tn)++;
  }
  m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(m.total());
  m.precision = m.tp + m.fp ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
  m.recall = m.tp + m.fn ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

inline std::vector<double> predict_all(const RelationModel& model, std::span<const RelationInstance> instances) {
  std::vector<double> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back(predict(model, inst));
  return out;
}

inline Metrics evaluate(const RelationModel& model, std::span<const RelationInstance> instances, double threshold = 0.5) {
  if (instances.empty()) throw Error("evaluate: empty instance set");
  std::vector<bool> pred, gold;
  for (const auto& inst : instances) {
    pred.push_back(predict(model, inst) >= threshold);
    gold.push_back(inst.label);
  }
  return metrics_from(pred, gold);
}

// Fills word embeddings for a vocabulary; row 0 is the unknown token.
using EmbeddingLoader = std::function<Tensor(const Lexicon& vocabulary, std::size_t dim, Rng& rng)>;

struct TrainReport {
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;  // 1-based; 0 when no dev set was available
  double best_dev_accuracy = 0;
  bool early_stopped = false;
  std::vector<double> epoch_loss;  // mean main-task training loss per epoch
  std::vector<double> dev_accuracy;
  std::set<std::string> train_docs, dev_docs;
};

struct TrainedModel {
  RelationModel model;
  TrainReport report;
};

inline void bind_all(std::vector<RelationInstance>& instances, const Lexicon& vocabulary) {
  for (auto& inst : instances) bind_tokens(inst, vocabulary);
}

namespace detail {

inline std::vector<TaskData> order_tasks(std::vector<TaskData> tasks, const std::vector<std::string>& order) {
  if (order.empty()) return tasks;
  std::vector<TaskData> out;
  for (const auto& name : order) {
    auto it = std::find_if(tasks.begin(), tasks.end(), [&](const TaskData& t) { return t.task == name; });
    if (it == tasks.end()) throw Error("no instances for task '" + name + "'");
    out.push_back(std::move(*it));
    tasks.erase(it);
  }
  return out;
}

inline double clip_value(double g, double clip) { return clip > 0 ? std::clamp(g, -clip, clip) : g; }

inline void sgd_step(RelationModel& model, ModelGradients& grads, const TrainConfig& cfg) {
  const double lr = cfg.learning_rate;
  std::vector<Tensor*> params, gs;
  for_each_tensor(model.encoder, [&](const std::string& name, Tensor& t) {
    if (name != "word_embeddings") params.push_back(&t);
  });
  for_each_tensor(grads.encoder, model.encoder.variant, [&](const std::string&, Tensor& t) { gs.push_back(&t); });
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = gs[i]->data();
    for (std::size_t a = 0; a < p.size(); ++a) p[a] -= lr * clip_value(g[a], cfg.clip);
  }
  if (!cfg.freeze_embeddings)
    for (const auto& [row, g] : grads.encoder.word_rows) {
      auto p = model.encoder.word_embeddings.row(row);
      for (std::size_t a = 0; a < p.size(); ++a) p[a] -= lr * clip_value(g[a], cfg.clip);
    }
  for (std::size_t h = 0; h < model.heads.size(); ++h) {
    auto w = model.heads[h].weights.data();
    auto g = grads.heads[h].weights.data();
    for (std::size_t a = 0; a < w.size(); ++a) w[a] -= lr * clip_value(g[a], cfg.clip);
    model.heads[h].bias -= lr * clip_value(grads.heads[h].bias, cfg.clip);
  }
}

inline double run_pass(RelationModel& model, const std::vector<const RelationInstance*>& data, const TrainConfig& cfg,
                       Rng& rng, std::size_t epoch) {
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  double total = 0;
  std::vector<const RelationInstance*> batch;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    batch.clear();
    for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) batch.push_back(data[order[i]]);
    ModelGradients grads = zero_gradients(model);
    double loss;
    try {
      loss = accumulate_loss_and_grad(batch, model, grads);
    } catch (const DivergenceError& e) {
      throw DivergenceError("training diverged in epoch " + std::to_string(epoch) + ", task '" + batch.front()->task +
                            "': " + e.what());
    }
    total += loss * static_cast<double>(batch.size());
    sgd_step(model, grads, cfg);
  }
  return total / static_cast<double>(data.size());
}

inline double accuracy_of(const RelationModel& model, const std::vector<const RelationInstance*>& data) {
  std::size_t correct = 0;
  for (const auto* inst : data) correct += (predict(model, *inst) >= 0.5) == inst->label;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace detail

// Trains a fresh model. The first task (after applying cfg.tasks ordering)
// is the main task: its documents supply the dev split for early stopping
// and auxiliary tasks larger than its training set are subsampled to its
// size once per run. Each epoch makes one full pass over every task in
// order, updating after each minibatch.
inline TrainedModel train(std::vector<TaskData> tasks, const TrainConfig& cfg, const EmbeddingLoader& loader = {}) {
  cfg.validate();
  tasks = detail::order_tasks(std::move(tasks), cfg.tasks);
  if (tasks.empty()) throw Error("train: no tasks");
  for (const auto& t : tasks)
    if (t.instances.empty()) throw Error("train: task '" + t.task + "' has no instances");

  TrainReport report;
  // Dev split at document level over the main task.
  {
    std::set<std::string> docs;
    for (const auto& inst : tasks.front().instances) docs.insert(inst.doc_id);
    std::vector<std::string> shuffled(docs.begin(), docs.end());
    Rng split_rng(Rng::derive(cfg.seed, 1));
    split_rng.shuffle(shuffled);
    std::size_t n_dev = 0;
    if (cfg.dev_fraction > 0 && shuffled.size() >= 2)
      n_dev = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.dev_fraction * static_cast<double>(shuffled.size()))));
    n_dev = std::min(n_dev, shuffled.size() - 1);
    report.dev_docs.insert(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_dev));
  }

  std::vector<std::vector<RelationInstance>> train_sets(tasks.size());
  std::vector<RelationInstance> dev;
  for (std::size_t t = 0; t < tasks.size(); ++t)
    for (auto& inst : tasks[t].instances) {
      if (inst.task != tasks[t].task) throw Error("train: instance task '" + inst.task + "' filed under '" + tasks[t].task + "'");
      if (report.dev_docs.count(inst.doc_id)) {
        if (t == 0) dev.push_back(std::move(inst));
      } else {
        report.train_docs.insert(inst.doc_id);
        train_sets[t].push_back(std::move(inst));
      }
    }
  if (train_sets.front().empty()) throw Error("train: main task has no training instances after the dev split");
  for (std::size_t t = 1; t < tasks.size(); ++t) {
    auto& set = train_sets[t];
    if (set.size() <= train_sets.front().size()) continue;
    Rng sub_rng(Rng::derive(cfg.seed, 2 + t));
    std::vector<std::size_t> idx(set.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    sub_rng.shuffle(idx);
    idx.resize(train_sets.front().size());
    std::sort(idx.begin(), idx.end());
    std::vector<RelationInstance> kept;
    for (std::size_t i : idx) kept.push_back(std::move(set[i]));
    set = std::move(kept);
  }

  Lexicon vocabulary("<unk>"), edge_labels("<unk-edge>");
  for (const auto& set : train_sets)
    for (const auto& inst : set) {
      for (const auto& tok : inst.tokens) vocabulary.add(tok);
      for (const auto& l : inst.edge_labels) edge_labels.add(l.fine);
    }

  Rng init_rng(Rng::derive(cfg.seed, 0));
  RelationModel model;
  model.encoder = init_encoder(cfg.variant, cfg.dims, vocabulary, edge_labels, init_rng, -cfg.init_range, cfg.init_range);
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    TaskHead head;
    head.task = tasks[t].task;
    head.roles = train_sets[t].empty() ? tasks[t].instances.front().roles : train_sets[t].front().roles;
    for (const auto& inst : train_sets[t])
      if (inst.roles != head.roles) throw Error("train: task '" + head.task + "' mixes role lists");
    head.weights = init_uniform({head.arity() * model.encoder.encoding_size()}, -cfg.init_range, cfg.init_range, init_rng);
    head.bias = init_rng.uniform(-cfg.init_range, cfg.init_range);
    model.heads.push_back(std::move(head));
  }
  if (loader) {
    Tensor table = loader(model.encoder.vocabulary, cfg.dims.word, init_rng);
    if (table.shape() != model.encoder.word_embeddings.shape())
      throw ShapeError("embedding loader returned shape " + shape_string(table.shape()) + ", expected " +
                       shape_string(model.encoder.word_embeddings.shape()));
    model.encoder.word_embeddings = std::move(table);
  }

  for (auto& set : train_sets) bind_all(set, model.encoder.vocabulary);
  bind_all(dev, model.encoder.vocabulary);

  std::vector<std::vector<const RelationInstance*>> views(train_sets.size());
  for (std::size_t t = 0; t < train_sets.size(); ++t)
    for (const auto& inst : train_sets[t]) views[t].push_back(&inst);
  std::vector<const RelationInstance*> dev_view;
  for (const auto& inst : dev) dev_view.push_back(&inst);

  Rng epoch_rng(Rng::derive(cfg.seed, 2));
  RelationModel best = model;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double main_loss = 0;
    for (std::size_t t = 0; t < views.size(); ++t) {
      if (views[t].empty()) continue;
      const double loss = detail::run_pass(model, views[t], cfg, epoch_rng, epoch);
      if (t == 0) main_loss = loss;
    }
    report.epoch_loss.push_back(main_loss);
    report.epochs_run = epoch;
    if (dev_view.empty()) continue;
    const double acc = detail::accuracy_of(model, dev_view);
    report.dev_accuracy.push_back(acc);
    if (report.best_epoch == 0 || acc > report.best_dev_accuracy) {
      report.best_dev_accuracy = acc;
      report.best_epoch = epoch;
      best = model;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      report.early_stopped = epoch < cfg.max_epochs;
      break;
    }
  }
  if (!dev_view.empty()) model = std::move(best);
  return {std::move(model), std::move(report)};
}

struct FoldResult {
  std::size_t fold = 0;
  Metrics metrics;
  std::set<std::string> train_docs, test_docs;
  std::vector<std::string> warnings;
  TrainReport report;
};

struct CrossValResult {
  std::vector<FoldResult> folds;
  Metrics mean;  // rates averaged over folds, counts summed
};

// Trains one model per fold on the other folds' documents and evaluates it on
// the held-out fold's main-task instances. Folds must already be assigned.
inline CrossValResult crossval(const std::vector<TaskData>& tasks_in, const TrainConfig& cfg,
                               const EmbeddingLoader& loader = {}, double threshold = 0.5) {
  const std::vector<TaskData> tasks = detail::order_tasks(tasks_in, cfg.tasks);
  if (tasks.empty()) throw Error("crossval: no tasks");
  std::size_t k = 0;
  for (const auto& t : tasks)
    for (const auto& inst : t.instances) k = std::max(k, inst.fold + 1);
  if (k < 2) throw Error("crossval: instances must be spread over at least 2 folds");

  CrossValResult out;
  for (std::size_t f = 0; f < k; ++f) {
    FoldResult fr;
    fr.fold = f;
    std::vector<TaskData> train_tasks;
    std::vector<RelationInstance> test;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      TaskData td{tasks[t].task, {}};
      for (const auto& inst : tasks[t].instances) {
        if (inst.fold == f) {
          if (t == 0) test.push_back(inst);
          fr.test_docs.insert(inst.doc_id);
        } else {
          td.instances.push_back(inst);
          fr.train_docs.insert(inst.doc_id);
        }
      }
      train_tasks.push_back(std::move(td));
    }
    for (const auto& d : fr.test_docs)
      if (fr.train_docs.count(d)) throw Error("crossval: document " + d + " appears in both train and test of fold " + std::to_string(f));
    if (test.empty()) throw Error("crossval: fold " + std::to_string(f) + " has no main-task test instances");

    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = Rng::derive(cfg.seed, 100 + f);
    fold_cfg.tasks.clear();
    auto trained = train(std::move(train_tasks), fold_cfg, loader);
    bind_all(test, trained.model.encoder.vocabulary);
    const bool any_pos = std::any_of(test.begin(), test.end(), [](const auto& i) { return i.label; });
    const bool any_neg = std::any_of(test.begin(), test.end(), [](const auto& i) { return !i.label; });
    if (!any_pos || !any_neg) fr.warnings.push_back("fold " + std::to_string(f) + " test set has a single class");
    fr.metrics = evaluate(trained.model, test, threshold);
    fr.report = std::move(trained.report);
    out.folds.push_back(std::move(fr));
  }
  const double n = static_cast<double>(out.folds.size());
  for (const auto& fr : out.folds) {
    out.mean.tp += fr.metrics.tp;
    out.mean.fp += fr.metrics.fp;
    out.mean.tn += fr.metrics.tn;
    out.mean.fn += fr.metrics.fn;
    out.mean.accuracy += fr.metrics.accuracy / n;
    out.mean.precision += fr.metrics.precision / n;
    out.mean.recall += fr.metrics.recall / n;
    out.mean.f1 += fr.metrics.f1 / n;
  }
  return out;
}

struct McNemarResult {
  std::size_t b = 0;  // first system right, second wrong
  std::size_t c = 0;  // first system wrong, second right
  double statistic = 0;
  double p_value = 1;
};

// Continuity-corrected McNemar chi-square test with one degree of freedom.
inline McNemarResult mcnemar(const std::vector<bool>& a, const std::vector<bool>& b, const std::vector<bool>& gold) {
  if (a.size() != gold.size() || b.size() != gold.size()) throw Error("mcnemar: prediction vectors are not aligned");
  McNemarResult r;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool ra = a[i] == gold[i], rb = b[i] == gold[i];
    if (ra && !rb) ++r.b;
    if (!ra && rb) ++r.c;
  }
  if (r.b + r.c == 0) return r;
  const double diff = std::abs(static_cast<double>(r.b) - static_cast<double>(r.c)) - 1.0;
  r.statistic = diff * diff / static_cast<double>(r.b + r.c);
  r.p_value = std::erfc(std::sqrt(r.statistic / 2.0));
  return r;
}

}  // namespace glstm
