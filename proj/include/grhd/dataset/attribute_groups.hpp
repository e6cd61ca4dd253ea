#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "grhd/dataset/metadata.hpp"

namespace grhd::dataset {

// Attribute groups of one section, indexed densely in lexicographic order of
// their canonical attribute keys.
struct SectionGroups {
  int section_id = 0;
  std::vector<std::string> keys;
  std::vector<std::size_t> counts;

  bool operator==(const SectionGroups&) const = default;
};

// Maps (section, attribute combination) to attribute-group labels. Local
// indices are per section; global labels concatenate sections in ascending
// section-id order and are what the attribute classifiers predict.
class AttributeGroupTable {
 public:
  AttributeGroupTable() = default;
  explicit AttributeGroupTable(std::vector<SectionGroups> sections);

  const std::vector<SectionGroups>& sections() const { return sections_; }
  std::size_t num_sections() const { return sections_.size(); }
  std::size_t num_groups() const;

  // Dense class index of a section id, or nullopt when unseen.
  std::optional<std::size_t> section_class(int section_id) const;
  std::optional<std::size_t> local_group(int section_id, const std::string& key) const;
  std::optional<std::size_t> global_group(const ClipMetadata& meta) const;

  // Clip counts per global group label.
  std::vector<std::size_t> global_counts() const;

  bool operator==(const AttributeGroupTable&) const = default;

 private:
  std::vector<SectionGroups> sections_;
};

// Deterministic and permutation invariant. Clips without attributes form a
// per-section "<no-attr>" group.
AttributeGroupTable build_attribute_groups(std::span<const ClipMetadata> clips);

}  // namespace grhd::dataset
