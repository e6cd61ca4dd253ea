#include "grhd/dataset/attribute_groups.hpp"

#include <algorithm>
#include <map>

#include "grhd/common/error.hpp"

namespace grhd::dataset {

AttributeGroupTable::AttributeGroupTable(std::vector<SectionGroups> sections)
    : sections_(std::move(sections)) {
  std::sort(sections_.begin(), sections_.end(),
            [](const SectionGroups& a, const SectionGroups& b) { return a.section_id < b.section_id; });
}

std::size_t AttributeGroupTable::num_groups() const {
  std::size_t n = 0;
  for (const auto& s : sections_) n += s.keys.size();
  return n;
}

std::optional<std::size_t> AttributeGroupTable::section_class(int section_id) const {
  for (std::size_t i = 0; i < sections_.size(); ++i) {
    if (sections_[i].section_id == section_id) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> AttributeGroupTable::local_group(int section_id, const std::string& key) const {
  const auto cls = section_class(section_id);
  if (!cls) return std::nullopt;
  const auto& keys = sections_[*cls].keys;
  const auto it = std::lower_bound(keys.begin(), keys.end(), key);
  if (it == keys.end() || *it != key) return std::nullopt;
  return static_cast<std::size_t>(it - keys.begin());
}

std::optional<std::size_t> AttributeGroupTable::global_group(const ClipMetadata& meta) const {
  const auto cls = section_class(meta.section_id);
  if (!cls) return std::nullopt;
  const auto local = local_group(meta.section_id, canonical_attribute_key(meta.attributes));
  if (!local) return std::nullopt;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < *cls; ++i) offset += sections_[i].keys.size();
  return offset + *local;
}

std::vector<std::size_t> AttributeGroupTable::global_counts() const {
  std::vector<std::size_t> out;
  for (const auto& s : sections_) out.insert(out.end(), s.counts.begin(), s.counts.end());
  return out;
}

AttributeGroupTable build_attribute_groups(std::span<const ClipMetadata> clips) {
  if (clips.empty()) throw Error(ErrorCode::ContractViolation, "build_attribute_groups needs at least one clip");
  std::map<int, std::map<std::string, std::size_t>> counts;
  for (const auto& clip : clips) ++counts[clip.section_id][canonical_attribute_key(clip.attributes)];

  std::vector<SectionGroups> sections;
  for (const auto& [section_id, groups] : counts) {
    SectionGroups sg;
    sg.section_id = section_id;
    for (const auto& [key, count] : groups) {
      sg.keys.push_back(key);
      sg.counts.push_back(count);
    }
    sections.push_back(std::move(sg));
  }
  return AttributeGroupTable(std::move(sections));
}

}  // namespace grhd::dataset
