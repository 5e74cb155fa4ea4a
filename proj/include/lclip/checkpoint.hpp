#pragma once

#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "lclip/encoder.hpp"
#include "lclip/ioutil.hpp"
#include "lclip/sha256.hpp"

namespace lclip {

// Checkpoint directory layout:
//   manifest.json  format version, kind, seed, configs, tensor index
//   tensors.bin    concatenated little-endian fp32, row-major, manifest order
inline constexpr int kCheckpointFormatVersion = 1;

namespace detail {

inline void push_f32_le(std::vector<std::uint8_t>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  out.push_back(static_cast<std::uint8_t>(bits));
  out.push_back(static_cast<std::uint8_t>(bits >> 8));
  out.push_back(static_cast<std::uint8_t>(bits >> 16));
  out.push_back(static_cast<std::uint8_t>(bits >> 24));
}

inline float read_f32_le(const std::uint8_t* p) {
  const std::uint32_t bits = std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
                             (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace detail

template <class T>
void save_checkpoint(const std::filesystem::path& dir, const std::string& kind,
                     std::uint64_t seed, const Json& configs,
                     const std::vector<ParamT<T>*>& params) {
  std::filesystem::create_directories(dir);
  Json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["kind"] = kind;
  manifest["seed"] = seed;
  manifest["configs"] = configs;
  std::vector<std::uint8_t> blob;
  Json tensors = Json::array();
  std::size_t offset = 0;
  for (const auto* p : params) {
    Json entry;
    entry["name"] = p->name;
    entry["shape"] = p->value.shape();
    entry["offset"] = offset;
    entry["frozen"] = p->frozen;
    tensors.push_back(entry);
    for (std::size_t i = 0; i < p->value.numel(); ++i)
      detail::push_f32_le(blob, static_cast<float>(p->value[i]));
    offset += p->value.numel() * 4;
  }
  manifest["tensors"] = tensors;
  atomic_write_file(dir / "tensors.bin", blob.data(), blob.size());
  atomic_write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline Json read_manifest(const std::filesystem::path& dir) {
  Json manifest = parse_json(read_text_file(dir / "manifest.json"), "manifest.json");
  const long version = require_integer(manifest, "format_version", "manifest.json");
  if (version != kCheckpointFormatVersion)
    throw ConfigError("manifest.json: format version " + std::to_string(version) +
                      " not supported (expected " + std::to_string(kCheckpointFormatVersion) + ")");
  return manifest;
}

// Loads tensor data into an already-built param list. Every name and shape
// must match, and the blob length must equal the manifest total.
template <class T>
void load_checkpoint_into(const std::filesystem::path& dir,
                          const std::vector<ParamT<T>*>& params) {
  const Json manifest = read_manifest(dir);
  const Json& tensors = require_field(manifest, "tensors", "manifest.json");
  if (!tensors.is_array() || tensors.size() != params.size())
    throw DataError("checkpoint: manifest lists " + std::to_string(tensors.size()) +
                    " tensors, model has " + std::to_string(params.size()));
  const std::vector<std::uint8_t> blob = read_binary_file(dir / "tensors.bin");
  std::size_t expected = 0;
  for (const auto& e : tensors) expected += shape_numel(e.at("shape").get<Shape>()) * 4;
  if (blob.size() != expected)
    throw DataError("checkpoint: tensors.bin is " + std::to_string(blob.size()) +
                    " bytes, manifest expects " + std::to_string(expected));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Json& e = tensors[i];
    const std::string name = require_string(e, "name", "tensor entry");
    if (name != params[i]->name)
      throw DataError("checkpoint: tensor " + std::to_string(i) + " is \"" + name +
                      "\", model expects \"" + params[i]->name + "\"");
    const Shape shape = e.at("shape").get<Shape>();
    if (shape != params[i]->value.shape())
      throw DataError("checkpoint: tensor \"" + name + "\" has shape " + shape_string(shape) +
                      ", model expects " + shape_string(params[i]->value.shape()));
    const std::size_t offset = e.at("offset").get<std::size_t>();
    if (offset + params[i]->value.numel() * 4 > blob.size())
      throw DataError("checkpoint: tensor \"" + name + "\" overruns tensors.bin");
    for (std::size_t j = 0; j < params[i]->value.numel(); ++j)
      params[i]->value[j] = static_cast<T>(detail::read_f32_le(blob.data() + offset + 4 * j));
    params[i]->zero_grad();
  }
}

inline Json encoder_config_to_json(const EncoderConfig& c) {
  return Json{{"num_layers", c.num_layers},   {"num_shared", c.num_shared},
              {"multiplex_factor", c.multiplex_factor}, {"model_dim", c.model_dim},
              {"heads", c.heads},             {"ffn_dim", c.ffn_dim},
              {"max_seq_len", c.max_seq_len}, {"input_dim", c.input_dim}};
}

inline EncoderConfig encoder_config_from_json(const Json& j, const std::string& what) {
  reject_unknown_keys(j, {"num_layers", "num_shared", "multiplex_factor", "model_dim", "heads",
                          "ffn_dim", "max_seq_len", "input_dim"}, what);
  EncoderConfig c;
  c.num_layers = static_cast<int>(require_integer(j, "num_layers", what));
  c.num_shared = static_cast<int>(require_integer(j, "num_shared", what));
  c.multiplex_factor = static_cast<int>(require_integer(j, "multiplex_factor", what));
  c.model_dim = static_cast<int>(require_integer(j, "model_dim", what));
  c.heads = static_cast<int>(require_integer(j, "heads", what));
  c.ffn_dim = static_cast<int>(require_integer(j, "ffn_dim", what));
  c.max_seq_len = static_cast<int>(require_integer(j, "max_seq_len", what));
  c.input_dim = j.contains("input_dim") ? static_cast<int>(require_integer(j, "input_dim", what)) : 0;
  return c;
}

template <class T>
void save_model_checkpoint(const std::filesystem::path& dir, LCLIPModelT<T>& model,
                           const Vocabulary& vocab) {
  Json configs;
  configs["vision"] = encoder_config_to_json(model.vision_cfg);
  configs["text"] = encoder_config_to_json(model.text_cfg);
  configs["vocab_size"] = model.vocab;
  configs["rank"] = model.rank;
  configs["joint_dim"] = model.joint_dim;
  configs["vocab_words"] = vocab.words();
  auto params = model.params();
  save_checkpoint(dir, "lclip", model.seed, configs, params);
}

template <class T>
std::pair<LCLIPModelT<T>, Vocabulary> load_model_checkpoint(const std::filesystem::path& dir) {
  const Json manifest = read_manifest(dir);
  if (require_string(manifest, "kind", "manifest.json") != "lclip")
    throw DataError("checkpoint: kind is not \"lclip\"");
  const Json& configs = require_field(manifest, "configs", "manifest.json");
  const EncoderConfig vis = encoder_config_from_json(configs.at("vision"), "configs.vision");
  const EncoderConfig txt = encoder_config_from_json(configs.at("text"), "configs.text");
  LCLIPModelT<T> model = build_model<T>(
      vis, txt, static_cast<int>(require_integer(configs, "vocab_size", "configs")),
      static_cast<int>(require_integer(configs, "rank", "configs")),
      static_cast<int>(require_integer(configs, "joint_dim", "configs")),
      manifest.at("seed").get<std::uint64_t>());
  auto params = model.params();
  load_checkpoint_into(dir, params);
  Vocabulary vocab = Vocabulary::from_words(configs.at("vocab_words").get<std::vector<std::string>>());
  return {std::move(model), std::move(vocab)};
}

// Digest of a param list's current values; frozen-weight audits compare these.
template <class T>
std::string params_sha256(const std::vector<ParamT<T>*>& params) {
  Sha256 h;
  for (const auto* p : params) {
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      const float f = static_cast<float>(p->value[i]);
      h.update(&f, sizeof(f));
    }
  }
  return to_hex(h.digest());
}

inline std::string config_hash(const Json& config) { return sha256_hex(config.dump()); }

}  // namespace lclip
