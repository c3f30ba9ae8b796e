#pragma once

// Entity-tuple classification on top of the graph LSTM encoder: mean-pooled
// mention representations are concatenated in role order and scored by one
// logistic head per task. All heads share the encoder.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "glstm/docgraph.hpp"
#include "glstm/errors.hpp"
#include "glstm/graph_lstm.hpp"
#include "glstm/numeric.hpp"

namespace glstm {

struct TaskHead {
  std::string task;
  std::vector<std::string> roles;  // declared argument order
  Tensor weights;                  // roles.size() * encoding size
  double bias = 0.0;

  std::size_t arity() const { return roles.size(); }
};

// One candidate entity tuple, with the sentence window it was drawn from
// already turned into a graph and split into DAGs.
struct RelationInstance {
  std::string doc_id;
  std::string task;
  std::vector<std::string> roles;
  std::vector<std::string> mention_ids;
  std::vector<std::string> canonicals;
  std::size_t first_sentence = 0;
  std::size_t last_sentence = 0;
  bool label = false;
  std::size_t fold = 0;

  std::vector<std::string> tokens;    // window text
  std::vector<EdgeLabel> edge_labels; // distinct labels present in the window graph
  std::vector<TokenSpan> mentions;    // window-relative, role order
  DagPair dags;
  std::vector<std::size_t> token_ids;  // filled by bind_tokens

  std::size_t arity() const { return mentions.size(); }
};

// Builds the instance for the given mentions of `doc`, restricted to the
// sentence window [first, last].
inline RelationInstance make_instance(const ParsedDocument& doc, const std::string& task,
                                      const std::vector<std::string>& roles, const std::vector<std::string>& mention_ids,
                                      std::size_t first, std::size_t last, bool label, const EdgePolicy& policy) {
  if (roles.size() != mention_ids.size()) throw Error("instance: role and mention counts differ");
  RelationInstance inst;
  inst.doc_id = doc.doc_id;
  inst.task = task;
  inst.roles = roles;
  inst.mention_ids = mention_ids;
  inst.first_sentence = first;
  inst.last_sentence = last;
  inst.label = label;

  const ParsedDocument window = sentence_window(doc, first, last, mention_ids);
  const DocumentGraph g = build_graph(window, policy);
  for (const auto& id : mention_ids) {
    const auto it = std::find_if(g.entities.begin(), g.entities.end(), [&](const EntityMention& m) { return m.id == id; });
    if (it == g.entities.end())
      throw GraphError("document " + doc.doc_id + ": mention '" + id + "' is not inside sentences " +
                       std::to_string(first) + ".." + std::to_string(last));
    inst.mentions.push_back(it->span);
    inst.canonicals.push_back(it->canonical);
  }
  for (const auto& t : g.tokens) inst.tokens.push_back(t.text);
  std::set<EdgeLabel> labels;
  for (const auto& e : g.edges) labels.insert(e.label);
  inst.edge_labels.assign(labels.begin(), labels.end());
  inst.dags = partition(g);
  return inst;
}

inline void bind_tokens(RelationInstance& inst, const Lexicon& vocabulary) {
  inst.token_ids.resize(inst.tokens.size());
  for (std::size_t i = 0; i < inst.tokens.size(); ++i) inst.token_ids[i] = vocabulary.lookup(inst.tokens[i]);
}

struct RelationModel {
  EncoderParams encoder;
  std::vector<TaskHead> heads;

  const TaskHead& head(const std::string& task) const {
    for (const auto& h : heads)
      if (h.task == task) return h;
    throw Error("model has no head for task '" + task + "'");
  }
  std::size_t head_index(const std::string& task) const {
    for (std::size_t i = 0; i < heads.size(); ++i)
      if (heads[i].task == task) return i;
    throw Error("model has no head for task '" + task + "'");
  }
};

struct HeadGradient {
  Tensor weights;
  double bias = 0.0;
};

struct ModelGradients {
  EncoderGradients encoder;
  std::vector<HeadGradient> heads;
};

inline ModelGradients zero_gradients(const RelationModel& m) {
  ModelGradients g{zero_gradients(m.encoder), {}};
  for (const auto& h : m.heads) g.heads.push_back({Tensor(h.weights.shape()), 0.0});
  return g;
}

// Mean of the span's encoding vectors.
inline std::vector<double> entity_repr(std::span<const std::vector<double>> encodings, const TokenSpan& span) {
  if (span.first > span.last) throw Error("entity_repr: empty span");
  if (span.last >= encodings.size()) throw Error("entity_repr: span outside the encoded text");
  std::vector<double> out(encodings[span.first].size(), 0.0);
  for (std::size_t t = span.first; t <= span.last; ++t)
    for (std::size_t a = 0; a < out.size(); ++a) out[a] += encodings[t][a];
  const double n = static_cast<double>(span.length());
  for (double& v : out) v /= n;
  return out;
}

inline std::vector<double> tuple_features(std::span<const std::vector<double>> encodings,
                                          const std::vector<TokenSpan>& mentions) {
  std::vector<double> features;
  for (const auto& span : mentions) {
    const auto r = entity_repr(encodings, span);
    features.insert(features.end(), r.begin(), r.end());
  }
  return features;
}

inline double logit(const RelationInstance& inst, std::span<const std::vector<double>> encodings, const TaskHead& head) {
  if (head.arity() != inst.arity())
    throw Error("task '" + head.task + "' expects arity " + std::to_string(head.arity()) + ", instance has " +
                std::to_string(inst.arity()));
  const auto features = tuple_features(encodings, inst.mentions);
  if (features.size() != head.weights.size()) throw ShapeError("head weights do not match the entity features");
  double z = head.bias;
  for (std::size_t a = 0; a < features.size(); ++a) z += head.weights[a] * features[a];
  return z;
}

inline double score(const RelationInstance& inst, std::span<const std::vector<double>> encodings, const TaskHead& head) {
  return sigmoid(logit(inst, encodings, head));
}

// Probability that the instance's relation holds, under its task's head.
inline double predict(const RelationModel& model, const RelationInstance& inst) {
  const auto r = encode(inst.dags, inst.token_ids, model.encoder);
  return score(inst, r.encodings, model.head(inst.task));
}

struct LossAndGrad {
  double loss = 0.0;
  ModelGradients grads;
};

// -log p(label) for logit z, computed without overflow.
inline double binary_cross_entropy(double z, bool label) {
  const double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
  return softplus - (label ? z : 0.0);
}

// Mean binary cross-entropy of a single-task batch, accumulating gradients
// into `grads` (which must be shaped for `model`).
inline double accumulate_loss_and_grad(std::span<const RelationInstance* const> batch, const RelationModel& model,
                                       ModelGradients& grads) {
  if (batch.empty()) throw Error("loss_and_grad: empty batch");
  const std::string& task = batch.front()->task;
  const std::size_t hi = model.head_index(task);
  const TaskHead& head = model.heads[hi];
  const std::size_t enc = model.encoder.encoding_size();
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const RelationInstance* inst : batch) {
    if (inst->task != task) throw Error("loss_and_grad: batch mixes tasks '" + task + "' and '" + inst->task + "'");
    const auto r = encode(inst->dags, inst->token_ids, model.encoder);
    const double z = logit(*inst, r.encodings, head);
    const double loss = binary_cross_entropy(z, inst->label);
    if (!std::isfinite(loss)) throw DivergenceError("non-finite loss on instance from document " + inst->doc_id);
    total += loss;

    const double dz = (sigmoid(z) - (inst->label ? 1.0 : 0.0)) * scale;
    const auto features = tuple_features(r.encodings, inst->mentions);
    auto& hg = grads.heads[hi];
    for (std::size_t a = 0; a < features.size(); ++a) hg.weights[a] += dz * features[a];
    hg.bias += dz;

    std::vector<std::vector<double>> upstream(r.encodings.size());
    for (std::size_t m = 0; m < inst->mentions.size(); ++m) {
      const auto& span = inst->mentions[m];
      const double share = dz / static_cast<double>(span.length());
      for (std::size_t t = span.first; t <= span.last; ++t) {
        auto& u = upstream[t];
        if (u.empty()) u.assign(enc, 0.0);
        for (std::size_t a = 0; a < enc; ++a) u[a] += share * head.weights[m * enc + a];
      }
    }
    backprop(inst->dags, inst->token_ids, model.encoder, r, upstream, grads.encoder);
  }
  return total * scale;
}

inline LossAndGrad loss_and_grad(std::span<const RelationInstance* const> batch, const RelationModel& model) {
  LossAndGrad out{0.0, zero_gradients(model)};
  out.loss = accumulate_loss_and_grad(batch, model, out.grads);
  return out;
}

// Mean loss only; used by gradient checks.
inline double batch_loss(std::span<const RelationInstance* const> batch, const RelationModel& model) {
  double total = 0.0;
  for (const RelationInstance* inst : batch) {
    const auto r = encode(inst->dags, inst->token_ids, model.encoder);
    total += binary_cross_entropy(logit(*inst, r.encodings, model.head(inst->task)), inst->label);
  }
  return total / static_cast<double>(batch.size());
}

}  // namespace glstm
