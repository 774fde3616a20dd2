#pragma once

// The trainable system as one unit (vocabulary, schema, generator,
// discriminator), versioned binary checkpoints, and batched rewriting.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "attrgen/discriminator.hpp"
#include "attrgen/generator.hpp"

namespace attrgen {

std::uint64_t fnv1a64(std::string_view text);
std::string format_hex64(std::uint64_t v);

/// Canonical `key = value` lines for the architecture.
std::string model_config_string(const ModelConfig& c);
ModelConfig parse_model_config(std::string_view text);
std::uint64_t model_config_digest(const ModelConfig& c);

/// Everything needed to rebuild a model before its tensors are read.
struct CheckpointMeta {
  ModelConfig model;
  AttributeSchema schema;
  std::vector<std::string> vocab_tokens;  // non-reserved tokens in id order
  int max_len = 0;
};

struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;
};

struct CheckpointFile {
  std::uint32_t version = 0;
  std::uint64_t digest = 0;
  CheckpointMeta meta;
  std::vector<NamedTensor> tensors;
};

inline constexpr char kCheckpointMagic[8] = {'A', 'T', 'G', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Generic container: header (magic, version, digest of `meta`), metadata
/// text, then named tensors as (name, rank, dims, little-endian f64 data).
void write_tensor_archive(const std::filesystem::path& path, std::uint64_t digest,
                          const std::string& meta, const std::vector<NamedTensor>& tensors);
struct TensorArchive {
  std::uint32_t version = 0;
  std::uint64_t digest = 0;
  std::string meta;
  std::vector<NamedTensor> tensors;
};
/// Throws InputError on a bad magic or version, or a truncated file.
TensorArchive read_tensor_archive(const std::filesystem::path& path);

void write_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta,
                      const std::vector<NamedTensor>& tensors);
/// Also rejects a digest that disagrees with the stored model config.
CheckpointFile read_checkpoint(const std::filesystem::path& path);

template <typename Scalar>
std::vector<NamedTensor> export_tensors(const ParameterList<Scalar>& params) {
  std::vector<NamedTensor> out;
  out.reserve(params.size());
  for (const auto& [name, t] : params) {
    NamedTensor nt;
    nt.name = name;
    for (auto d : t->shape()) nt.dims.push_back(static_cast<std::uint64_t>(d));
    for (auto v : std::as_const(*t).data()) nt.data.push_back(static_cast<double>(v));
    out.push_back(std::move(nt));
  }
  return out;
}

/// Copies stored values into params by name; shapes must match. Every
/// parameter must be present.
template <typename Scalar>
void import_tensors(const std::vector<NamedTensor>& stored, const ParameterList<Scalar>& params) {
  for (const auto& [name, t] : params) {
    const NamedTensor* found = nullptr;
    for (const auto& s : stored) {
      if (s.name == name) found = &s;
    }
    if (!found) throw InputError("checkpoint lacks tensor '" + name + "'");
    std::vector<std::uint64_t> dims;
    for (auto d : t->shape()) dims.push_back(static_cast<std::uint64_t>(d));
    if (dims != found->dims) throw InputError("checkpoint tensor '" + name + "' has the wrong shape");
    auto dst = t->data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<Scalar>(found->data[i]);
  }
}

/// Generator and discriminator with the vocabulary and schema they were built for.
template <typename Scalar>
struct TransferModel {
  ModelConfig config;
  Vocabulary vocab;
  AttributeSchema schema;
  int max_len = 20;
  Generator<Scalar> gen;
  Discriminator<Scalar> disc;

  TransferModel() = default;
  TransferModel(const ModelConfig& c, Vocabulary v, AttributeSchema s, int max_len_)
      : config(c),
        vocab(std::move(v)),
        schema(std::move(s)),
        max_len(max_len_),
        gen(c),
        disc(c.d_dec, c.attr_width, c.d_disc) {
    if (config.vocab_size != vocab.size()) throw ConfigError("model: vocabulary size mismatch");
    if (config.attr_width != schema.width()) throw ConfigError("model: attribute width mismatch");
  }

  void init(std::uint64_t seed) {
    Rng rng(seed);
    gen.init(rng);
    disc.init(rng);
  }

  ParameterList<Scalar> parameters() {
    auto p = gen.parameters();
    for (auto& e : disc.parameters()) p.push_back(e);
    return p;
  }

  CheckpointMeta meta() const {
    CheckpointMeta m;
    m.model = config;
    m.schema = schema;
    m.vocab_tokens.assign(vocab.tokens().begin() + Vocabulary::kNumReserved, vocab.tokens().end());
    m.max_len = max_len;
    return m;
  }

  void save(const std::filesystem::path& path) {
    write_checkpoint(path, meta(), export_tensors(parameters()));
  }

  static TransferModel load(const std::filesystem::path& path) {
    auto f = read_checkpoint(path);
    TransferModel m(f.meta.model, Vocabulary::from_tokens(f.meta.vocab_tokens), f.meta.schema,
                    f.meta.max_len);
    import_tensors(f.tensors, m.parameters());
    return m;
  }

  /// Decodes each input under its target labels.
  std::vector<TokenSequence> rewrite(std::span<const TokenSequence> xs,
                                     std::span<const AttributeVector> targets,
                                     SampleMode mode = SampleMode::greedy, std::uint64_t seed = 0,
                                     std::size_t chunk = 128) {
    if (xs.size() != targets.size()) throw DimensionError("rewrite: label count mismatch");
    std::vector<TokenSequence> out;
    out.reserve(xs.size());
    Rng rng(seed);
    for (std::size_t s = 0; s < xs.size(); s += chunk) {
      std::size_t n = std::min(chunk, xs.size() - s);
      Tape<Scalar> tape;
      auto g = gen.on(tape, false);
      auto z = g.encode(xs.subspan(s, n));
      auto tr = g.hard_sample(z, targets.subspan(s, n), schema, mode, rng, max_len);
      for (auto& y : tr.sequences()) out.push_back(std::move(y));
    }
    return out;
  }
};

/// Generation length limit: 1.5 times the longest sequence, EOS included.
int default_max_len(int longest_sequence);

}  // namespace attrgen
