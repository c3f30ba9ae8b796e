#pragma once

// Finite-difference verification of the analytic gradients on small random
// documents.

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "glstm/docgraph.hpp"
#include "glstm/graph_lstm.hpp"
#include "glstm/numeric.hpp"
#include "glstm/relation_model.hpp"

namespace glstm {

struct RandomDocumentSpec {
  std::size_t min_tokens = 3;
  std::size_t max_tokens = 8;
  std::size_t max_sentences = 2;
  std::size_t vocabulary = 6;
  bool coref = true;
};

// Random tokens split into sentences, one random dependency tree per
// sentence, two single-token mentions (types "A" and "B") and, when asked
// for, one coreference link.
inline ParsedDocument random_document(Rng& rng, const std::string& doc_id, const RandomDocumentSpec& spec = {}) {
  static const char* const kLabels[] = {"nsubj", "dobj", "amod", "prep", "nn"};
  ParsedDocument doc;
  doc.doc_id = doc_id;
  const std::size_t n = spec.min_tokens + static_cast<std::size_t>(rng.below(spec.max_tokens - spec.min_tokens + 1));
  const std::size_t sentences =
      std::min<std::size_t>(1 + static_cast<std::size_t>(rng.below(spec.max_sentences)), std::max<std::size_t>(1, n / 2));
  std::vector<std::size_t> starts{0};
  while (starts.size() < sentences) {
    const std::size_t s = 1 + static_cast<std::size_t>(rng.below(n - 1));
    if (std::find(starts.begin(), starts.end(), s) == starts.end()) starts.push_back(s);
  }
  std::sort(starts.begin(), starts.end());
  starts.push_back(n);
  for (std::size_t s = 0; s + 1 < starts.size(); ++s) {
    std::vector<std::size_t> order;
    for (std::size_t i = starts[s]; i < starts[s + 1]; ++i) {
      doc.tokens.push_back({"w" + std::to_string(rng.below(spec.vocabulary)), s});
      order.push_back(i);
    }
    rng.shuffle(order);
    doc.deps.push_back({-1, order[0], "root"});
    for (std::size_t k = 1; k < order.size(); ++k)
      doc.deps.push_back({static_cast<long>(order[rng.below(k)]), order[k], kLabels[rng.below(std::size(kLabels))]});
  }
  const std::size_t a = static_cast<std::size_t>(rng.below(n));
  std::size_t b = static_cast<std::size_t>(rng.below(n - 1));
  if (b >= a) ++b;
  doc.entities.push_back({"e1", "A", {a, a}, "alpha"});
  doc.entities.push_back({"e2", "B", {b, b}, "beta"});
  if (spec.coref) {
    const std::size_t c = static_cast<std::size_t>(rng.below(n));
    std::size_t d = static_cast<std::size_t>(rng.below(n - 1));
    if (d >= c) ++d;
    doc.coref.push_back({c, d, "coref"});
  }
  return doc;
}

struct GradcheckOptions {
  Variant variant = Variant::kFull;
  std::uint64_t seed = 1;
  std::size_t instances = 20;
  Dimensions dims{3, 4, 2};
  double eps = 1e-5;
  double floor = 1e-6;  // denominator floor of the relative error
  double tolerance = 1e-4;
};

struct GradcheckReport {
  Variant variant = Variant::kFull;
  std::size_t instances = 0;
  std::size_t values_checked = 0;
  std::size_t min_edge_types = 0;  // fewest distinct coarse edge types in any instance
  double max_relative_error = 0;
  std::string worst;  // tensor holding the largest error
  double seconds = 0;
  bool passed = false;
};

namespace detail {

inline RelationModel random_model(const RelationInstance& inst, Variant variant, const Dimensions& dims, Rng& rng) {
  Lexicon vocab("<unk>"), labels("<unk-edge>");
  for (const auto& t : inst.tokens) vocab.add(t);
  for (const auto& l : inst.edge_labels) labels.add(l.fine);
  RelationModel m;
  m.encoder = init_encoder(variant, dims, vocab, labels, rng);
  TaskHead head{inst.task, inst.roles, init_uniform({inst.arity() * m.encoder.encoding_size()}, -1.0, 1.0, rng),
                rng.uniform(-1.0, 1.0)};
  m.heads.push_back(std::move(head));
  return m;
}

}  // namespace detail

// Compares backprop against central differences of the instance loss for
// every parameter (encoder, word embeddings, head) on `instances` random
// documents, each with freshly drawn weights.
inline GradcheckReport run_gradcheck(const GradcheckOptions& opt) {
  const auto start = std::chrono::steady_clock::now();
  GradcheckReport rep;
  rep.variant = opt.variant;
  rep.min_edge_types = kEdgeTypeCount;
  for (std::size_t n = 0; n < opt.instances; ++n) {
    Rng rng(Rng::derive(opt.seed, n));
    const ParsedDocument doc = random_document(rng, "g" + std::to_string(n));
    RelationInstance inst = make_instance(doc, "rel", {"A", "B"}, {"e1", "e2"}, 0, doc.sentence_count() - 1,
                                          rng.below(2) == 1, EdgePolicy{});
    std::set<EdgeType> types;
    for (const auto& l : inst.edge_labels) types.insert(l.coarse);
    rep.min_edge_types = std::min(rep.min_edge_types, types.size());

    RelationModel model = detail::random_model(inst, opt.variant, opt.dims, rng);
    bind_tokens(inst, model.encoder.vocabulary);
    const RelationInstance* batch[] = {&inst};
    LossAndGrad lg = loss_and_grad(batch, model);

    auto check = [&](const std::string& name, Tensor& param, const Tensor& analytic) {
      const Tensor numeric = finite_diff_grad(
          [&](const Tensor& theta) {
            const Tensor saved = param;
            param = theta;
            const double loss = batch_loss(batch, model);
            param = saved;
            return loss;
          },
          param, opt.eps);
      for (std::size_t a = 0; a < numeric.size(); ++a) {
        const double err = relative_error(analytic[a], numeric[a], opt.floor);
        ++rep.values_checked;
        if (err > rep.max_relative_error) {
          rep.max_relative_error = err;
          rep.worst = name;
        }
      }
    };

    std::vector<Tensor> analytic;
    for_each_tensor(lg.grads.encoder, opt.variant, [&](const std::string&, Tensor& g) { analytic.push_back(g); });
    Tensor words(model.encoder.word_embeddings.shape());
    for (const auto& [row, g] : lg.grads.encoder.word_rows) std::copy(g.begin(), g.end(), words.row(row).begin());
    analytic.push_back(words);
    std::size_t idx = 0;
    for_each_tensor(model.encoder, [&](const std::string& name, Tensor& p) { check(name, p, analytic[idx++]); });

    auto& head = model.heads[0];
    check("head.weights", head.weights, lg.grads.heads[0].weights);
    Tensor bias = Tensor::vector({head.bias});
    const Tensor bias_grad = Tensor::vector({lg.grads.heads[0].bias});
    const Tensor numeric_bias = finite_diff_grad(
        [&](const Tensor& theta) {
          const double saved = head.bias;
          head.bias = theta[0];
          const double loss = batch_loss(batch, model);
          head.bias = saved;
          return loss;
        },
        bias, opt.eps);
    const double err = relative_error(bias_grad[0], numeric_bias[0], opt.floor);
    ++rep.values_checked;
    if (err > rep.max_relative_error) {
      rep.max_relative_error = err;
      rep.worst = "head.bias";
    }
    ++rep.instances;
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  rep.passed = rep.max_relative_error < opt.tolerance;
  return rep;
}

}  // namespace glstm
