#pragma once

// Binary model checkpoints.
//
//   "GLSTMCKP"                       8-byte magic
//   u32 version
//   u64 n, n bytes of JSON metadata  config, vocabularies, heads
//   u32 tensor count
//   per tensor: u32 name length, name, u32 rank, rank x u64 dims,
//               prod(dims) x f64
//
// All integers and floats are little-endian.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "glstm/errors.hpp"
#include "glstm/graph_lstm.hpp"
#include "glstm/lexicon.hpp"
#include "glstm/numeric.hpp"
#include "glstm/relation_model.hpp"
#include "glstm/train_eval.hpp"

namespace glstm {

inline constexpr std::array<char, 8> kCheckpointMagic = {'G', 'L', 'S', 'T', 'M', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline nlohmann::json config_to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"max_epochs", c.max_epochs},
          {"hidden", c.dims.hidden},
          {"word_dim", c.dims.word},
          {"edge_dim", c.dims.edge},
          {"patience", c.patience},
          {"dev_fraction", c.dev_fraction},
          {"seed", c.seed},
          {"variant", std::string(variant_name(c.variant))},
          {"backbone", std::string(backbone_name(c.edges.backbone))},
          {"coref", c.edges.coref},
          {"discourse", c.edges.discourse},
          {"k_sentences", c.k_sentences},
          {"init_range", c.init_range},
          {"clip", c.clip},
          {"freeze_embeddings", c.freeze_embeddings},
          {"tasks", c.tasks}};
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.max_epochs = j.at("max_epochs").get<std::size_t>();
  c.dims = {j.at("hidden").get<std::size_t>(), j.at("word_dim").get<std::size_t>(), j.at("edge_dim").get<std::size_t>()};
  c.patience = j.at("patience").get<std::size_t>();
  c.dev_fraction = j.at("dev_fraction").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.edges.backbone = parse_backbone(j.at("backbone").get<std::string>());
  c.edges.coref = j.at("coref").get<bool>();
  c.edges.discourse = j.at("discourse").get<bool>();
  c.k_sentences = j.at("k_sentences").get<std::size_t>();
  c.init_range = j.at("init_range").get<double>();
  c.clip = j.at("clip").get<double>();
  c.freeze_embeddings = j.at("freeze_embeddings").get<bool>();
  c.tasks = j.at("tasks").get<std::vector<std::string>>();
  return c;
}

struct Checkpoint {
  TrainConfig config;
  RelationModel model;
};

namespace detail {

template <typename T>
void put_le(std::ostream& out, T v) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t b = 0; b < sizeof(T); ++b) out.put(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * b)) & 0xff));
}

template <typename T>
T get_le(std::istream& in) {
  std::uint64_t v = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    const int ch = in.get();
    if (ch == std::char_traits<char>::eof()) throw FormatError("checkpoint is truncated");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(ch)) << (8 * b);
  }
  return static_cast<T>(v);
}

inline void put_string(std::ostream& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_bytes(std::istream& in, std::uint64_t n) {
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (static_cast<std::uint64_t>(in.gcount()) != n) throw FormatError("checkpoint is truncated");
  return s;
}

template <typename F>
void visit_model_tensors(RelationModel& m, F&& f) {
  for_each_tensor(m.encoder, f);
  for (auto& h : m.heads) f("head." + h.task + ".weights", h.weights);
}

}  // namespace detail

inline void save_checkpoint(std::ostream& out, const TrainConfig& config, const RelationModel& model) {
  nlohmann::json meta;
  meta["config"] = config_to_json(config);
  meta["variant"] = std::string(variant_name(model.encoder.variant));
  meta["dims"] = {model.encoder.dims.hidden, model.encoder.dims.word, model.encoder.dims.edge};
  meta["vocabulary"] = model.encoder.vocabulary.entries();
  meta["edge_labels"] = model.encoder.edge_labels.entries();
  meta["heads"] = nlohmann::json::array();
  for (const auto& h : model.heads) meta["heads"].push_back({{"task", h.task}, {"roles", h.roles}});
  const std::string text = meta.dump();

  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));

  RelationModel& m = const_cast<RelationModel&>(model);
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  detail::visit_model_tensors(m, [&](const std::string& name, Tensor& t) { tensors.emplace_back(name, &t); });
  std::vector<Tensor> biases;
  biases.reserve(model.heads.size());
  for (const auto& h : model.heads) biases.push_back(Tensor::vector({h.bias}));
  for (std::size_t i = 0; i < model.heads.size(); ++i) tensors.emplace_back("head." + model.heads[i].task + ".bias", &biases[i]);

  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    detail::put_string(out, name);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t->rank()));
    for (std::size_t d : t->shape()) detail::put_le<std::uint64_t>(out, d);
    for (double v : t->values()) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw FormatError("failed to write checkpoint");
}

inline void save_checkpoint(const std::string& path, const TrainConfig& config, const RelationModel& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  save_checkpoint(out, config, model);
}

inline Checkpoint load_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != static_cast<std::streamsize>(magic.size()) || magic != kCheckpointMagic)
    throw FormatError("not a checkpoint file");
  const auto version = detail::get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  const auto meta_len = detail::get_le<std::uint64_t>(in);
  nlohmann::json meta;
  Checkpoint ck;
  try {
    meta = nlohmann::json::parse(detail::get_bytes(in, meta_len));
    ck.config = config_from_json(meta.at("config"));
    const auto dims = meta.at("dims").get<std::vector<std::size_t>>();
    if (dims.size() != 3) throw FormatError("checkpoint dims must have three entries");
    ck.model.encoder = make_encoder_shape(parse_variant(meta.at("variant").get<std::string>()), {dims[0], dims[1], dims[2]},
                                          Lexicon::from_entries(meta.at("vocabulary").get<std::vector<std::string>>()),
                                          Lexicon::from_entries(meta.at("edge_labels").get<std::vector<std::string>>()));
    for (const auto& h : meta.at("heads")) {
      TaskHead head;
      head.task = h.at("task").get<std::string>();
      head.roles = h.at("roles").get<std::vector<std::string>>();
      head.weights = Tensor({head.arity() * ck.model.encoder.encoding_size()});
      ck.model.heads.push_back(std::move(head));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata is malformed: ") + e.what());
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint metadata is invalid: ") + e.what());
  }

  std::map<std::string, Tensor*> slots;
  detail::visit_model_tensors(ck.model, [&](const std::string& name, Tensor& t) { slots[name] = &t; });
  std::vector<Tensor> biases(ck.model.heads.size(), Tensor({1}));
  for (std::size_t i = 0; i < ck.model.heads.size(); ++i) slots["head." + ck.model.heads[i].task + ".bias"] = &biases[i];

  const auto count = detail::get_le<std::uint32_t>(in);
  if (count != slots.size())
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, expected " + std::to_string(slots.size()));
  std::map<std::string, bool> seen;
  for (std::uint32_t n = 0; n < count; ++n) {
    const std::string name = detail::get_bytes(in, detail::get_le<std::uint32_t>(in));
    auto it = slots.find(name);
    if (it == slots.end() || seen[name]) throw FormatError("unexpected tensor '" + name + "' in checkpoint");
    seen[name] = true;
    const auto rank = detail::get_le<std::uint32_t>(in);
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(static_cast<std::size_t>(detail::get_le<std::uint64_t>(in)));
    if (shape != it->second->shape())
      throw FormatError("tensor '" + name + "' has shape " + shape_string(shape) + ", expected " +
                        shape_string(it->second->shape()));
    for (double& v : it->second->data()) v = std::bit_cast<double>(detail::get_le<std::uint64_t>(in));
  }
  for (std::size_t i = 0; i < ck.model.heads.size(); ++i) ck.model.heads[i].bias = biases[i][0];
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint tensors");
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path + "'");
  try {
    return load_checkpoint(in);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace glstm
