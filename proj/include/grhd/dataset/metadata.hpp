#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace grhd::dataset {

enum class Domain { Source, Target };
enum class Split { Train, Test };
enum class Condition { Normal, Anomaly, Unknown };

std::string_view to_string(Domain d);
std::string_view to_string(Split s);
std::string_view to_string(Condition c);

Domain parse_domain(std::string_view s);
Split parse_split(std::string_view s);
Condition parse_condition(std::string_view s);

using Attribute = std::pair<std::string, std::string>;

// Labels carried by one recording. Filenames follow the DCASE 2022 Task 2
// convention:
//   section_<NN>_<domain>_<split>_<condition>_<index>[_<key>_<value>]*.wav
// machine_type is not part of the filename; it comes from the directory
// layout or the manifest.
struct ClipMetadata {
  std::string machine_type;
  int section_id = 0;
  Domain domain = Domain::Source;
  Split split = Split::Train;
  Condition condition = Condition::Normal;
  std::string index;
  std::vector<Attribute> attributes;

  bool operator==(const ClipMetadata&) const = default;
};

// Throws Error{MalformedFilename}. Accepts a bare filename or a path; only
// the last path component is inspected. When the condition token is absent,
// train clips are Normal and test clips Unknown. An attribute tail that does
// not split into key/value pairs is kept verbatim as ("raw", tail).
ClipMetadata parse_clip_metadata(std::string_view filename);

// Inverse of parse_clip_metadata for well-formed metadata (keys and values
// without underscores).
std::string format_clip_filename(const ClipMetadata& meta);

// Order-independent identity of an attribute combination: pairs sorted,
// joined as "k=v;k=v". Clips without attributes map to kNoAttrKey.
inline constexpr std::string_view kNoAttrKey = "<no-attr>";
std::string canonical_attribute_key(const std::vector<Attribute>& attributes);

}  // namespace grhd::dataset
