#pragma once

// Bidirectional graph LSTM over a DagPair.
//
// Every node t with predecessor set P(t) computes
//
//   i   = sigmoid(W_i x + sum_j R_i(j) + b_i)
//   o   = sigmoid(W_o x + sum_j R_o(j) + b_o)
//   g   = tanh   (W_c x + sum_j R_c(j) + b_c)
//   f_j = sigmoid(W_f x + R_f(j) + b_f)          one forget gate per predecessor
//   c   = i * g + sum_j f_j * c_j
//   h   = o * tanh(c)
//
// where the recurrent term R_k(j) is U_k^{type(t,j)} h_j under full
// parametrization (one matrix per coarse edge type) and U_k x_T (h_j (x) e_j)
// under edge-type embedding (a hidden x hidden x edge tensor contracted with
// the outer product of h_j and the learned embedding of j's fine label).
//
// The left-to-right DAG is swept in increasing node order and the
// right-to-left DAG in decreasing order, each with its own parameters. A
// token's encoding is the concatenation of the two hidden states.

#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "glstm/docgraph.hpp"
#include "glstm/errors.hpp"
#include "glstm/lexicon.hpp"
#include "glstm/numeric.hpp"

namespace glstm {

enum class Variant { kFull, kEmbed };

inline std::string_view variant_name(Variant v) { return v == Variant::kFull ? "full" : "embed"; }

inline Variant parse_variant(std::string_view s) {
  if (s == "full") return Variant::kFull;
  if (s == "embed") return Variant::kEmbed;
  throw Error("unknown variant '" + std::string(s) + "' (expected full or embed)");
}

enum Gate : std::size_t { kInputGate = 0, kOutputGate, kCellGate, kForgetGate };
inline constexpr std::size_t kGateCount = 4;
inline constexpr std::array<const char*, kGateCount> kGateNames = {"i", "o", "c", "f"};

struct Dimensions {
  std::size_t hidden = 150;
  std::size_t word = 100;
  std::size_t edge = 3;

  bool operator==(const Dimensions&) const = default;
};

using GateTensors = std::array<Tensor, kGateCount>;

struct DirectionParams {
  GateTensors input;                   // W: hidden x word
  GateTensors bias;                    // b: hidden
  std::vector<GateTensors> recurrent;  // full: one set per coarse type (hidden x hidden); embed: one set (hidden x hidden x edge)

  bool operator==(const DirectionParams&) const = default;
};

struct EncoderParams {
  Variant variant = Variant::kFull;
  Dimensions dims;
  DirectionParams forward;
  DirectionParams backward;
  Lexicon vocabulary{"<unk>"};
  Lexicon edge_labels{"<unk-edge>"};  // fine labels; used by the embed variant
  Tensor word_embeddings;             // vocabulary x word
  Tensor edge_embeddings;             // edge_labels x edge; empty for full

  std::size_t hidden() const { return dims.hidden; }
  std::size_t encoding_size() const { return 2 * dims.hidden; }
};

// Gradient buffers mirror the dense parameters; word-embedding gradients are
// kept sparse by row since one instance touches only a few rows.
struct EncoderGradients {
  DirectionParams forward;
  DirectionParams backward;
  Tensor edge_embeddings;
  std::map<std::size_t, std::vector<double>> word_rows;
};

struct NodeState {
  std::vector<double> h;
  std::vector<double> c;
};

namespace detail {

inline DirectionParams direction_shaped(Variant variant, const Dimensions& d) {
  DirectionParams p;
  for (std::size_t g = 0; g < kGateCount; ++g) {
    p.input[g] = Tensor({d.hidden, d.word});
    p.bias[g] = Tensor({d.hidden});
  }
  const std::size_t sets = variant == Variant::kFull ? kEdgeTypeCount : 1;
  p.recurrent.resize(sets);
  for (auto& set : p.recurrent)
    for (auto& u : set) u = variant == Variant::kFull ? Tensor({d.hidden, d.hidden}) : Tensor({d.hidden, d.hidden, d.edge});
  return p;
}

template <typename P, typename F>
void visit_direction(P& p, Variant variant, const std::string& prefix, F&& f) {
  for (std::size_t g = 0; g < kGateCount; ++g) f(prefix + "W_" + kGateNames[g], p.input[g]);
  for (std::size_t g = 0; g < kGateCount; ++g) f(prefix + "b_" + kGateNames[g], p.bias[g]);
  for (std::size_t s = 0; s < p.recurrent.size(); ++s)
    for (std::size_t g = 0; g < kGateCount; ++g) {
      std::string name = prefix + "U_" + kGateNames[g];
      if (variant == Variant::kFull) name += "." + std::string(kEdgeTypeNames[s]);
      f(name, p.recurrent[s][g]);
    }
}

}  // namespace detail

// Visits every dense parameter tensor with a stable name, in a fixed order.
template <typename F>
void for_each_tensor(EncoderParams& p, F&& f) {
  detail::visit_direction(p.forward, p.variant, "fwd.", f);
  detail::visit_direction(p.backward, p.variant, "bwd.", f);
  if (p.variant == Variant::kEmbed) f(std::string("edge_embeddings"), p.edge_embeddings);
  f(std::string("word_embeddings"), p.word_embeddings);
}

template <typename F>
void for_each_tensor(const EncoderParams& p, F&& f) {
  for_each_tensor(const_cast<EncoderParams&>(p), [&](const std::string& name, Tensor& t) { f(name, std::as_const(t)); });
}

// Same names and order as for_each_tensor, minus the sparse word embeddings.
template <typename F>
void for_each_tensor(EncoderGradients& g, Variant variant, F&& f) {
  detail::visit_direction(g.forward, variant, "fwd.", f);
  detail::visit_direction(g.backward, variant, "bwd.", f);
  if (variant == Variant::kEmbed) f(std::string("edge_embeddings"), g.edge_embeddings);
}

// Shapes every tensor for the given vocabularies; values are zero.
inline EncoderParams make_encoder_shape(Variant variant, const Dimensions& dims, Lexicon vocabulary, Lexicon edge_labels) {
  EncoderParams p;
  p.variant = variant;
  p.dims = dims;
  p.forward = detail::direction_shaped(variant, dims);
  p.backward = detail::direction_shaped(variant, dims);
  p.vocabulary = std::move(vocabulary);
  p.edge_labels = std::move(edge_labels);
  p.word_embeddings = Tensor({p.vocabulary.size(), dims.word});
  if (variant == Variant::kEmbed) p.edge_embeddings = Tensor({p.edge_labels.size(), dims.edge});
  return p;
}

// All parameters uniform in [lo, hi), drawn in for_each_tensor order.
inline EncoderParams init_encoder(Variant variant, const Dimensions& dims, Lexicon vocabulary, Lexicon edge_labels,
                                  Rng& rng, double lo = -1.0, double hi = 1.0) {
  EncoderParams p = make_encoder_shape(variant, dims, std::move(vocabulary), std::move(edge_labels));
  for_each_tensor(p, [&](const std::string&, Tensor& t) { t = init_uniform(t.shape(), lo, hi, rng); });
  return p;
}

inline EncoderGradients zero_gradients(const EncoderParams& p) {
  EncoderGradients g;
  g.forward = detail::direction_shaped(p.variant, p.dims);
  g.backward = detail::direction_shaped(p.variant, p.dims);
  if (p.variant == Variant::kEmbed) g.edge_embeddings = Tensor(p.edge_embeddings.shape());
  return g;
}

namespace detail {

// Activations of one unit, kept for the backward sweep.
struct UnitTrace {
  std::vector<double> i, o, g, c, h, tanh_c;
  std::vector<std::vector<double>> f;  // per predecessor, in predecessor-list order
};

// A predecessor resolved against the parameter tables.
struct PredRef {
  const double* h;
  const double* c;
  std::size_t slot;  // coarse type (full) or edge-label row (embed)
};

class Recurrence {
 public:
  Recurrence(const DirectionParams& p, const EncoderParams& enc) : p_(p), enc_(enc), l_(enc.dims.hidden) {}

  // out += R_gate(j)
  void apply(std::size_t gate, const PredRef& pred, double* out) const {
    if (enc_.variant == Variant::kFull) {
      matvec_accumulate(p_.recurrent[pred.slot][gate].data(), l_, l_, {pred.h, l_}, {out, l_});
      return;
    }
    const std::size_t d = enc_.dims.edge;
    const double* u = p_.recurrent[0][gate].data().data();
    const double* e = enc_.edge_embeddings.data().data() + pred.slot * d;
    for (std::size_t a = 0; a < l_; ++a) {
      double s = 0.0;
      for (std::size_t b = 0; b < l_; ++b) {
        const double* ab = u + (a * l_ + b) * d;
        double w = 0.0;
        for (std::size_t k = 0; k < d; ++k) w += ab[k] * e[k];
        s += w * pred.h[b];
      }
      out[a] += s;
    }
  }

  // Given dz = dL/d(preactivation of gate), accumulate dU, dh_j and (embed) de_j.
  void backprop(std::size_t gate, const PredRef& pred, const double* dz, DirectionParams& grad, Tensor& edge_grad,
                double* dh) const {
    if (enc_.variant == Variant::kFull) {
      outer_accumulate({dz, l_}, {pred.h, l_}, grad.recurrent[pred.slot][gate].data());
      matvec_transposed_accumulate(p_.recurrent[pred.slot][gate].data(), l_, l_, {dz, l_}, {dh, l_});
      return;
    }
    const std::size_t d = enc_.dims.edge;
    const double* u = p_.recurrent[0][gate].data().data();
    double* du = grad.recurrent[0][gate].data().data();
    const double* e = enc_.edge_embeddings.data().data() + pred.slot * d;
    double* de = edge_grad.data().data() + pred.slot * d;
    for (std::size_t a = 0; a < l_; ++a) {
      const double za = dz[a];
      if (za == 0.0) continue;
      for (std::size_t b = 0; b < l_; ++b) {
        const double* ab = u + (a * l_ + b) * d;
        double* dab = du + (a * l_ + b) * d;
        const double hb = pred.h[b];
        double w = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          w += ab[k] * e[k];
          dab[k] += za * hb * e[k];
          de[k] += za * ab[k] * hb;
        }
        dh[b] += za * w;
      }
    }
  }

 private:
  const DirectionParams& p_;
  const EncoderParams& enc_;
  std::size_t l_;
};

inline UnitTrace unit_forward(std::span<const double> x, const std::vector<PredRef>& preds, const DirectionParams& p,
                              const Recurrence& rec, std::size_t hidden) {
  const std::size_t l = hidden, w = x.size();
  std::array<std::vector<double>, 3> z;
  for (std::size_t g = 0; g < 3; ++g) {
    z[g].assign(p.bias[g].data().begin(), p.bias[g].data().end());
    matvec_accumulate(p.input[g].data(), l, w, x, z[g]);
    for (const auto& pred : preds) rec.apply(g, pred, z[g].data());
  }
  UnitTrace t;
  t.i.resize(l);
  t.o.resize(l);
  t.g.resize(l);
  for (std::size_t a = 0; a < l; ++a) {
    t.i[a] = sigmoid(z[kInputGate][a]);
    t.o[a] = sigmoid(z[kOutputGate][a]);
    t.g[a] = std::tanh(z[kCellGate][a]);
  }
  t.c.resize(l);
  for (std::size_t a = 0; a < l; ++a) t.c[a] = t.i[a] * t.g[a];
  if (!preds.empty()) {
    std::vector<double> base(p.bias[kForgetGate].data().begin(), p.bias[kForgetGate].data().end());
    matvec_accumulate(p.input[kForgetGate].data(), l, w, x, base);
    for (const auto& pred : preds) {
      std::vector<double> zf = base;
      rec.apply(kForgetGate, pred, zf.data());
      for (std::size_t a = 0; a < l; ++a) {
        zf[a] = sigmoid(zf[a]);
        t.c[a] += zf[a] * pred.c[a];
      }
      t.f.push_back(std::move(zf));
    }
  }
  t.tanh_c.resize(l);
  t.h.resize(l);
  for (std::size_t a = 0; a < l; ++a) {
    t.tanh_c[a] = std::tanh(t.c[a]);
    t.h[a] = t.o[a] * t.tanh_c[a];
  }
  return t;
}

// Pushes dL/dh and dL/dc of one unit back to its inputs. dh_preds[j] and
// dc_preds[j] receive the contributions for predecessor j.
inline void unit_backward(std::span<const double> x, const std::vector<PredRef>& preds, const UnitTrace& t,
                          const DirectionParams& p, const Recurrence& rec, std::span<const double> dh,
                          std::span<const double> dc, DirectionParams& grad, Tensor& edge_grad, std::span<double> dx,
                          const std::vector<double*>& dh_preds, const std::vector<double*>& dc_preds) {
  const std::size_t l = t.h.size(), w = x.size();
  std::array<std::vector<double>, 3> dz{std::vector<double>(l), std::vector<double>(l), std::vector<double>(l)};
  std::vector<double> dc_total(l);
  for (std::size_t a = 0; a < l; ++a) {
    const double d_o = dh[a] * t.tanh_c[a];
    dc_total[a] = dc[a] + dh[a] * t.o[a] * (1.0 - t.tanh_c[a] * t.tanh_c[a]);
    dz[kInputGate][a] = dc_total[a] * t.g[a] * t.i[a] * (1.0 - t.i[a]);
    dz[kOutputGate][a] = d_o * t.o[a] * (1.0 - t.o[a]);
    dz[kCellGate][a] = dc_total[a] * t.i[a] * (1.0 - t.g[a] * t.g[a]);
  }
  for (std::size_t g = 0; g < 3; ++g) {
    outer_accumulate(dz[g], x, grad.input[g].data());
    auto db = grad.bias[g].data();
    for (std::size_t a = 0; a < l; ++a) db[a] += dz[g][a];
    matvec_transposed_accumulate(p.input[g].data(), l, w, dz[g], dx);
    for (std::size_t j = 0; j < preds.size(); ++j) rec.backprop(g, preds[j], dz[g].data(), grad, edge_grad, dh_preds[j]);
  }
  if (preds.empty()) return;
  std::vector<double> dzf_sum(l, 0.0), dzf(l);
  for (std::size_t j = 0; j < preds.size(); ++j) {
    const auto& f = t.f[j];
    for (std::size_t a = 0; a < l; ++a) {
      dzf[a] = dc_total[a] * preds[j].c[a] * f[a] * (1.0 - f[a]);
      dzf_sum[a] += dzf[a];
      dc_preds[j][a] += dc_total[a] * f[a];
    }
    rec.backprop(kForgetGate, preds[j], dzf.data(), grad, edge_grad, dh_preds[j]);
  }
  outer_accumulate(dzf_sum, x, grad.input[kForgetGate].data());
  auto db = grad.bias[kForgetGate].data();
  for (std::size_t a = 0; a < l; ++a) db[a] += dzf_sum[a];
  matvec_transposed_accumulate(p.input[kForgetGate].data(), l, w, dzf_sum, dx);
}

inline void check_unit_input(std::span<const double> x, const EncoderParams& enc) {
  if (x.size() != enc.dims.word)
    throw ShapeError("unit input has length " + std::to_string(x.size()) + ", expected " + std::to_string(enc.dims.word));
}

inline void check_state(const NodeState& s, std::size_t l) {
  if (s.h.size() != l || s.c.size() != l) throw ShapeError("predecessor state does not match the hidden size");
}

}  // namespace detail

// One full-parametrization unit. `enc` supplies the dimensions; `p` is the
// direction whose weights are applied.
inline NodeState unit_full(std::span<const double> x, const std::vector<std::pair<NodeState, EdgeType>>& preds,
                           const DirectionParams& p, const EncoderParams& enc) {
  if (enc.variant != Variant::kFull) throw Error("unit_full called with embed parameters");
  detail::check_unit_input(x, enc);
  std::vector<detail::PredRef> refs;
  for (const auto& [state, type] : preds) {
    detail::check_state(state, enc.dims.hidden);
    const auto slot = static_cast<std::size_t>(type);
    if (slot >= kEdgeTypeCount) throw GraphError("unknown coarse edge type");
    refs.push_back({state.h.data(), state.c.data(), slot});
  }
  auto t = detail::unit_forward(x, refs, p, detail::Recurrence(p, enc), enc.dims.hidden);
  return {std::move(t.h), std::move(t.c)};
}

// One edge-type-embedding unit. Labels missing from the table use the
// reserved unknown-label row.
inline NodeState unit_embed(std::span<const double> x, const std::vector<std::pair<NodeState, std::string>>& preds,
                            const DirectionParams& p, const EncoderParams& enc) {
  if (enc.variant != Variant::kEmbed) throw Error("unit_embed called with full parameters");
  detail::check_unit_input(x, enc);
  std::vector<detail::PredRef> refs;
  for (const auto& [state, label] : preds) {
    detail::check_state(state, enc.dims.hidden);
    refs.push_back({state.h.data(), state.c.data(), enc.edge_labels.lookup(label)});
  }
  auto t = detail::unit_forward(x, refs, p, detail::Recurrence(p, enc), enc.dims.hidden);
  return {std::move(t.h), std::move(t.c)};
}

struct PassTrace {
  std::vector<detail::UnitTrace> units;
};

struct EncodeResult {
  std::vector<std::vector<double>> encodings;  // per token: [h_forward, h_backward]
  PassTrace forward;
  PassTrace backward;
};

namespace detail {

inline std::size_t edge_slot(const EncoderParams& enc, const EdgeLabel& label) {
  return enc.variant == Variant::kFull ? static_cast<std::size_t>(label.coarse) : enc.edge_labels.lookup(label.fine);
}

inline std::span<const double> word_vector(const EncoderParams& enc, std::size_t id) {
  if (id >= enc.word_embeddings.dim(0))
    throw Error("token id " + std::to_string(id) + " outside the embedding table");
  return enc.word_embeddings.row(id);
}

inline std::vector<PredRef> resolve(const std::vector<Predecessor>& preds, const PassTrace& trace,
                                    const EncoderParams& enc) {
  std::vector<PredRef> refs;
  refs.reserve(preds.size());
  for (const auto& pr : preds) {
    const auto& u = trace.units[pr.node];
    refs.push_back({u.h.data(), u.c.data(), edge_slot(enc, pr.label)});
  }
  return refs;
}

}  // namespace detail

inline EncodeResult encode(const DagPair& dags, std::span<const std::size_t> token_ids, const EncoderParams& enc) {
  const std::size_t n = dags.size();
  if (token_ids.size() != n) throw ShapeError("encode: token count does not match the graph");
  EncodeResult r;
  r.forward.units.resize(n);
  r.backward.units.resize(n);
  const detail::Recurrence fwd(enc.forward, enc), bwd(enc.backward, enc);
  for (std::size_t t = 0; t < n; ++t) {
    auto refs = detail::resolve(dags.forward[t], r.forward, enc);
    r.forward.units[t] = detail::unit_forward(detail::word_vector(enc, token_ids[t]), refs, enc.forward, fwd, enc.dims.hidden);
  }
  for (std::size_t t = n; t-- > 0;) {
    auto refs = detail::resolve(dags.backward[t], r.backward, enc);
    r.backward.units[t] =
        detail::unit_forward(detail::word_vector(enc, token_ids[t]), refs, enc.backward, bwd, enc.dims.hidden);
  }
  r.encodings.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    auto& e = r.encodings[t];
    e = r.forward.units[t].h;
    e.insert(e.end(), r.backward.units[t].h.begin(), r.backward.units[t].h.end());
  }
  return r;
}

// Accumulates into `grads` the gradient of a loss whose derivative with
// respect to each token encoding is `upstream[t]` (an empty vector means
// zero). Word-embedding gradients land in grads.word_rows.
inline void backprop(const DagPair& dags, std::span<const std::size_t> token_ids, const EncoderParams& enc,
                     const EncodeResult& cache, std::span<const std::vector<double>> upstream, EncoderGradients& grads) {
  const std::size_t n = dags.size(), l = enc.dims.hidden;
  if (cache.forward.units.size() != n || cache.backward.units.size() != n || cache.encodings.size() != n)
    throw Error("backprop: no forward cache for this graph");
  if (upstream.size() != n) throw ShapeError("backprop: upstream gradient count does not match the graph");
  for (const auto& u : upstream)
    if (!u.empty() && u.size() != 2 * l) throw ShapeError("backprop: upstream gradient has the wrong length");

  auto sweep = [&](bool forward_pass) {
    const auto& trace = forward_pass ? cache.forward : cache.backward;
    const auto& params = forward_pass ? enc.forward : enc.backward;
    auto& grad = forward_pass ? grads.forward : grads.backward;
    const auto& pred_lists = forward_pass ? dags.forward : dags.backward;
    const detail::Recurrence rec(params, enc);
    const std::size_t offset = forward_pass ? 0 : l;
    std::vector<std::vector<double>> dh(n, std::vector<double>(l, 0.0)), dc(n, std::vector<double>(l, 0.0));
    for (std::size_t t = 0; t < n; ++t)
      if (!upstream[t].empty())
        for (std::size_t a = 0; a < l; ++a) dh[t][a] += upstream[t][offset + a];
    // Reverse of the sweep order: successors are always finished first.
    for (std::size_t step = 0; step < n; ++step) {
      const std::size_t t = forward_pass ? n - 1 - step : step;
      auto refs = detail::resolve(pred_lists[t], trace, enc);
      std::vector<double*> dh_preds, dc_preds;
      for (const auto& pr : pred_lists[t]) {
        dh_preds.push_back(dh[pr.node].data());
        dc_preds.push_back(dc[pr.node].data());
      }
      auto& dx = grads.word_rows[token_ids[t]];
      if (dx.empty()) dx.assign(enc.dims.word, 0.0);
      detail::unit_backward(detail::word_vector(enc, token_ids[t]), refs, trace.units[t], params, rec, dh[t], dc[t], grad,
                            grads.edge_embeddings, dx, dh_preds, dc_preds);
    }
  };
  sweep(false);
  sweep(true);
}

}  // namespace glstm
