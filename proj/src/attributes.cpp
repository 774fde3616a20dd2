#include "attrgen/attributes.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "attrgen/errors.hpp"

namespace attrgen {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t p = s.find(sep, start);
    out.push_back(trim(s.substr(start, p == std::string_view::npos ? s.npos : p - start)));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

}  // namespace

AttributeSchema::AttributeSchema(std::vector<Attribute> attributes)
    : attributes_(std::move(attributes)) {
  if (attributes_.empty()) throw SchemaError("schema needs at least one attribute");
  std::set<std::string> names;
  for (const auto& a : attributes_) {
    if (a.name.empty()) throw SchemaError("attribute with empty name");
    if (!names.insert(a.name).second) throw SchemaError("duplicate attribute '" + a.name + "'");
    if (a.labels.size() < 2) throw SchemaError("attribute '" + a.name + "' needs >= 2 labels");
    std::set<std::string> labels(a.labels.begin(), a.labels.end());
    if (labels.size() != a.labels.size()) {
      throw SchemaError("attribute '" + a.name + "' has duplicate labels");
    }
    for (const auto& l : a.labels) {
      if (l.empty() || l.find_first_of(" \t,=") != std::string::npos) {
        throw SchemaError("invalid label '" + l + "' in attribute '" + a.name + "'");
      }
    }
    offsets_.push_back(width_);
    width_ += static_cast<int>(a.labels.size());
  }
}

AttributeSchema AttributeSchema::parse(std::string_view text, const std::string& source) {
  std::vector<Attribute> attrs;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto colon = t.find(':');
    if (colon == std::string::npos) throw ParseError(source, lineno, "expected 'name: labels'");
    Attribute a;
    a.name = trim(std::string_view(t).substr(0, colon));
    a.labels = split(std::string_view(t).substr(colon + 1), ',');
    attrs.push_back(std::move(a));
  }
  try {
    return AttributeSchema(std::move(attrs));
  } catch (const SchemaError& e) {
    throw SchemaError(source + ": " + e.what());
  }
}

AttributeSchema AttributeSchema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open schema file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void AttributeSchema::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write schema file " + path.string());
  out << to_string();
}

std::string AttributeSchema::to_string() const {
  std::string s;
  for (const auto& a : attributes_) {
    s += a.name + ": ";
    for (std::size_t i = 0; i < a.labels.size(); ++i) {
      if (i) s += ',';
      s += a.labels[i];
    }
    s += '\n';
  }
  return s;
}

int AttributeSchema::find_attribute(std::string_view name) const {
  for (std::size_t k = 0; k < attributes_.size(); ++k) {
    if (attributes_[k].name == name) return static_cast<int>(k);
  }
  return -1;
}

int AttributeSchema::label_index(int k, std::string_view label) const {
  const auto& a = attribute(k);
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    if (a.labels[i] == label) return static_cast<int>(i);
  }
  throw SchemaError("unknown label '" + std::string(label) + "' for attribute '" + a.name + "'");
}

std::int64_t AttributeSchema::num_combinations() const {
  std::int64_t n = 1;
  for (const auto& a : attributes_) n *= static_cast<std::int64_t>(a.labels.size());
  return n;
}

bool AttributeSchema::operator==(const AttributeSchema& o) const {
  if (attributes_.size() != o.attributes_.size()) return false;
  for (std::size_t k = 0; k < attributes_.size(); ++k) {
    if (attributes_[k].name != o.attributes_[k].name ||
        attributes_[k].labels != o.attributes_[k].labels)
      return false;
  }
  return true;
}

std::vector<int> AttributeVector::one_hot(const AttributeSchema& schema) const {
  if (size() != schema.num_attributes()) throw SchemaError("attribute vector does not fit schema");
  std::vector<int> bits(static_cast<std::size_t>(schema.width()), 0);
  for (int k = 0; k < size(); ++k) {
    int l = label(k);
    if (l < 0 || l >= schema.num_labels(k)) throw SchemaError("label index out of range");
    bits[static_cast<std::size_t>(schema.offset(k) + l)] = 1;
  }
  return bits;
}

std::int64_t AttributeVector::combination_index(const AttributeSchema& schema) const {
  std::int64_t idx = 0;
  for (int k = 0; k < schema.num_attributes(); ++k) idx = idx * schema.num_labels(k) + label(k);
  return idx;
}

AttributeVector AttributeVector::from_combination_index(std::int64_t index,
                                                        const AttributeSchema& schema) {
  std::vector<int> labels(static_cast<std::size_t>(schema.num_attributes()));
  for (int k = schema.num_attributes() - 1; k >= 0; --k) {
    labels[static_cast<std::size_t>(k)] = static_cast<int>(index % schema.num_labels(k));
    index /= schema.num_labels(k);
  }
  return AttributeVector(std::move(labels));
}

AttributeVector encode_attributes(std::span<const std::string> labels, const AttributeSchema& schema) {
  if (static_cast<int>(labels.size()) != schema.num_attributes()) {
    throw SchemaError("expected " + std::to_string(schema.num_attributes()) + " labels, got " +
                      std::to_string(labels.size()));
  }
  std::vector<int> idx;
  for (int k = 0; k < schema.num_attributes(); ++k) {
    idx.push_back(schema.label_index(k, labels[static_cast<std::size_t>(k)]));
  }
  return AttributeVector(std::move(idx));
}

std::vector<std::string> decode_attributes(const AttributeVector& v, const AttributeSchema& schema) {
  std::vector<std::string> out;
  for (int k = 0; k < schema.num_attributes(); ++k) {
    out.push_back(schema.attribute(k).labels.at(static_cast<std::size_t>(v.label(k))));
  }
  return out;
}

AttributeVector from_one_hot(std::span<const int> bits, const AttributeSchema& schema) {
  if (static_cast<int>(bits.size()) != schema.width()) throw SchemaError("one-hot width mismatch");
  std::vector<int> labels;
  for (int k = 0; k < schema.num_attributes(); ++k) {
    int found = -1;
    for (int i = 0; i < schema.num_labels(k); ++i) {
      int b = bits[static_cast<std::size_t>(schema.offset(k) + i)];
      if (b != 0 && b != 1) throw SchemaError("one-hot entries must be 0 or 1");
      if (b == 1) {
        if (found >= 0) throw SchemaError("more than one label set in a block");
        found = i;
      }
    }
    if (found < 0) throw SchemaError("no label set for attribute '" + schema.attribute(k).name + "'");
    labels.push_back(found);
  }
  return AttributeVector(std::move(labels));
}

AttributeVector parse_label_assignment(std::string_view text, const AttributeSchema& schema,
                                       const AttributeVector* fallback) {
  std::vector<int> labels(static_cast<std::size_t>(schema.num_attributes()), -1);
  if (!trim(text).empty()) {
    for (const auto& item : split(text, ',')) {
      auto eq = item.find('=');
      if (eq == std::string::npos) throw SchemaError("expected attr=label, got '" + item + "'");
      std::string name = trim(std::string_view(item).substr(0, eq));
      std::string value = trim(std::string_view(item).substr(eq + 1));
      int k = schema.find_attribute(name);
      if (k < 0) throw SchemaError("unknown attribute '" + name + "'");
      if (labels[static_cast<std::size_t>(k)] >= 0) {
        throw SchemaError("attribute '" + name + "' assigned twice");
      }
      labels[static_cast<std::size_t>(k)] = schema.label_index(k, value);
    }
  }
  for (int k = 0; k < schema.num_attributes(); ++k) {
    auto& l = labels[static_cast<std::size_t>(k)];
    if (l >= 0) continue;
    if (!fallback) throw SchemaError("no label given for attribute '" + schema.attribute(k).name + "'");
    l = fallback->label(k);
  }
  return AttributeVector(std::move(labels));
}

std::string format_label_assignment(const AttributeVector& v, const AttributeSchema& schema) {
  std::string s;
  for (int k = 0; k < schema.num_attributes(); ++k) {
    if (k) s += ',';
    s += schema.attribute(k).name + "=" + schema.attribute(k).labels.at(static_cast<std::size_t>(v.label(k)));
  }
  return s;
}

AttributeVector sample_mismatched_labels(const AttributeVector& l, const AttributeSchema& schema,
                                         Rng& rng) {
  const std::int64_t n = schema.num_combinations();
  if (n < 2) throw SchemaError("schema admits a single label combination");
  const std::int64_t own = l.combination_index(schema);
  std::uniform_int_distribution<std::int64_t> pick(0, n - 2);
  std::int64_t r = pick(rng);
  if (r >= own) ++r;
  return AttributeVector::from_combination_index(r, schema);
}

AttributeVector sample_labels(const AttributeSchema& schema, Rng& rng) {
  std::uniform_int_distribution<std::int64_t> pick(0, schema.num_combinations() - 1);
  return AttributeVector::from_combination_index(pick(rng), schema);
}

}  // namespace attrgen
