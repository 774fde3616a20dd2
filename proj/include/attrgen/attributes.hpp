#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace attrgen {

using Rng = std::mt19937_64;

struct Attribute {
  std::string name;
  std::vector<std::string> labels;
};

/// K categorical attributes; the one-hot encoding concatenates one block per
/// attribute in declaration order.
class AttributeSchema {
 public:
  AttributeSchema() = default;
  explicit AttributeSchema(std::vector<Attribute> attributes);

  /// Lines of the form `name: label1,label2,...`.
  static AttributeSchema parse(std::string_view text, const std::string& source = "<schema>");
  static AttributeSchema load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  std::string to_string() const;

  int num_attributes() const { return static_cast<int>(attributes_.size()); }
  const Attribute& attribute(int k) const { return attributes_.at(static_cast<std::size_t>(k)); }
  std::span<const Attribute> attributes() const { return attributes_; }

  /// Total one-hot width, the sum of label-set sizes.
  int width() const { return width_; }
  int offset(int k) const { return offsets_.at(static_cast<std::size_t>(k)); }
  int num_labels(int k) const { return static_cast<int>(attribute(k).labels.size()); }

  /// Index of the named attribute, or -1.
  int find_attribute(std::string_view name) const;
  /// Throws SchemaError on an unknown label.
  int label_index(int k, std::string_view label) const;

  /// Number of distinct label combinations.
  std::int64_t num_combinations() const;

  bool operator==(const AttributeSchema& o) const;

 private:
  std::vector<Attribute> attributes_;
  std::vector<int> offsets_;
  int width_ = 0;
};

/// One label index per attribute.
class AttributeVector {
 public:
  AttributeVector() = default;
  explicit AttributeVector(std::vector<int> labels) : labels_(std::move(labels)) {}

  std::span<const int> labels() const { return labels_; }
  int label(int k) const { return labels_.at(static_cast<std::size_t>(k)); }
  void set_label(int k, int v) { labels_.at(static_cast<std::size_t>(k)) = v; }
  int size() const { return static_cast<int>(labels_.size()); }

  /// Concatenated one-hot encoding l_v.
  std::vector<int> one_hot(const AttributeSchema& schema) const;

  /// Mixed-radix index over all label combinations of the schema.
  std::int64_t combination_index(const AttributeSchema& schema) const;
  static AttributeVector from_combination_index(std::int64_t index, const AttributeSchema& schema);

  bool operator==(const AttributeVector& o) const = default;

 private:
  std::vector<int> labels_;
};

/// Labels given by name, one per attribute in schema order.
AttributeVector encode_attributes(std::span<const std::string> labels, const AttributeSchema& schema);
std::vector<std::string> decode_attributes(const AttributeVector& v, const AttributeSchema& schema);

/// Inverse of one_hot; throws SchemaError unless every block holds exactly one 1.
AttributeVector from_one_hot(std::span<const int> bits, const AttributeSchema& schema);

/// Parses `attr=label,attr=label`. Unnamed attributes take their label from
/// `fallback` when given, otherwise a SchemaError is raised.
AttributeVector parse_label_assignment(std::string_view text, const AttributeSchema& schema,
                                       const AttributeVector* fallback = nullptr);
std::string format_label_assignment(const AttributeVector& v, const AttributeSchema& schema);

/// Draws uniformly among all label combinations different from l.
AttributeVector sample_mismatched_labels(const AttributeVector& l, const AttributeSchema& schema,
                                         Rng& rng);

/// Uniform over all label combinations.
AttributeVector sample_labels(const AttributeSchema& schema, Rng& rng);

}  // namespace attrgen
