#include "attrgen/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "attrgen/errors.hpp"

namespace attrgen {

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string format_hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string model_config_string(const ModelConfig& c) {
  std::ostringstream os;
  os << "vocab_size = " << c.vocab_size << "\n"
     << "attr_width = " << c.attr_width << "\n"
     << "d_emb = " << c.d_emb << "\n"
     << "d_enc = " << c.d_enc << "\n"
     << "d_dec = " << c.d_dec << "\n"
     << "d_attr = " << c.d_attr << "\n"
     << "d_disc = " << c.d_disc << "\n"
     << "bidirectional_encoder = " << (c.bidirectional_encoder ? 1 : 0) << "\n";
  return os.str();
}

ModelConfig parse_model_config(std::string_view text) {
  ModelConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    while (!key.empty() && key.back() == ' ') key.pop_back();
    int v = std::stoi(line.substr(eq + 1));
    if (key == "vocab_size") c.vocab_size = v;
    else if (key == "attr_width") c.attr_width = v;
    else if (key == "d_emb") c.d_emb = v;
    else if (key == "d_enc") c.d_enc = v;
    else if (key == "d_dec") c.d_dec = v;
    else if (key == "d_attr") c.d_attr = v;
    else if (key == "d_disc") c.d_disc = v;
    else if (key == "bidirectional_encoder") c.bidirectional_encoder = v != 0;
    else throw InputError("checkpoint: unknown model key '" + key + "'");
  }
  return c;
}

std::uint64_t model_config_digest(const ModelConfig& c) { return fnv1a64(model_config_string(c)); }

int default_max_len(int longest_sequence) {
  return static_cast<int>(std::ceil(1.5 * static_cast<double>(longest_sequence)));
}

namespace {

template <typename T>
void put(std::ostream& os, T v) {
  // little-endian host assumed; values are written byte by byte so the file
  // layout does not depend on struct padding
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

void put_string(std::ostream& os, std::string_view s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& is, const std::string& src) {
  T v{};
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw InputError(src + ": truncated checkpoint");
  std::memcpy(&v, b, sizeof(T));
  return v;
}

std::string get_string(std::istream& is, const std::string& src) {
  auto n = get<std::uint32_t>(is, src);
  if (n > (1u << 28)) throw InputError(src + ": corrupt string length");
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) throw InputError(src + ": truncated checkpoint");
  return s;
}

std::string meta_text(const CheckpointMeta& m) {
  std::ostringstream os;
  os << "[model]\n" << model_config_string(m.model) << "[schema]\n" << m.schema.to_string();
  os << "[max_len]\n" << m.max_len << "\n[vocab]\n";
  for (const auto& t : m.vocab_tokens) os << t << "\n";
  return os.str();
}

CheckpointMeta parse_meta(const std::string& text, const std::string& src) {
  CheckpointMeta m;
  std::istringstream in(text);
  std::string line, section;
  std::string model, schema;
  while (std::getline(in, line)) {
    if (line.size() > 2 && line.front() == '[' && line.back() == ']') {
      section = line;
      continue;
    }
    if (section == "[model]") model += line + "\n";
    else if (section == "[schema]") schema += line + "\n";
    else if (section == "[max_len]") m.max_len = std::stoi(line);
    else if (section == "[vocab]") m.vocab_tokens.push_back(line);
    else throw InputError(src + ": malformed checkpoint metadata");
  }
  m.model = parse_model_config(model);
  m.schema = AttributeSchema::parse(schema, src);
  return m;
}

}  // namespace

void write_tensor_archive(const std::filesystem::path& path, std::uint64_t digest,
                          const std::string& meta, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write " + path.string());
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint64_t>(os, digest);
  put_string(os, meta);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_string(os, t.name);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put<std::uint64_t>(os, d);
    for (double v : t.data) put<double>(os, v);
  }
  if (!os) throw InputError("failed writing " + path.string());
}

TensorArchive read_tensor_archive(const std::filesystem::path& path) {
  const std::string src = path.string();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + src);
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw InputError(src + ": not a checkpoint file");
  }
  TensorArchive f;
  f.version = get<std::uint32_t>(is, src);
  if (f.version != kCheckpointVersion) {
    throw InputError(src + ": unsupported checkpoint version " + std::to_string(f.version));
  }
  f.digest = get<std::uint64_t>(is, src);
  f.meta = get_string(is, src);
  auto n = get<std::uint32_t>(is, src);
  for (std::uint32_t i = 0; i < n; ++i) {
    NamedTensor t;
    t.name = get_string(is, src);
    auto rank = get<std::uint32_t>(is, src);
    if (rank > 4) throw InputError(src + ": corrupt tensor rank");
    std::uint64_t count = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      t.dims.push_back(get<std::uint64_t>(is, src));
      count *= t.dims.back();
    }
    if (count > (1ull << 32)) throw InputError(src + ": corrupt tensor size");
    t.data.resize(count);
    for (auto& v : t.data) v = get<double>(is, src);
    f.tensors.push_back(std::move(t));
  }
  return f;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta,
                      const std::vector<NamedTensor>& tensors) {
  write_tensor_archive(path, model_config_digest(meta.model), meta_text(meta), tensors);
}

CheckpointFile read_checkpoint(const std::filesystem::path& path) {
  auto a = read_tensor_archive(path);
  CheckpointFile f;
  f.version = a.version;
  f.digest = a.digest;
  f.meta = parse_meta(a.meta, path.string());
  if (model_config_digest(f.meta.model) != f.digest) {
    throw InputError(path.string() + ": config digest mismatch");
  }
  f.meta.model.validate();
  f.tensors = std::move(a.tensors);
  return f;
}

}  // namespace attrgen
