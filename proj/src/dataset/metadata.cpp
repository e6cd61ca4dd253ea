#include "grhd/dataset/metadata.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>

#include "grhd/common/error.hpp"

namespace grhd::dataset {

namespace {

std::vector<std::string_view> split_tokens(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

[[noreturn]] void malformed(std::string_view name, std::string_view why) {
  throw Error(ErrorCode::MalformedFilename, std::string(name) + " (" + std::string(why) + ")");
}

}  // namespace

std::string_view to_string(Domain d) { return d == Domain::Source ? "source" : "target"; }

std::string_view to_string(Split s) { return s == Split::Train ? "train" : "test"; }

std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::Normal: return "normal";
    case Condition::Anomaly: return "anomaly";
    case Condition::Unknown: return "unknown";
  }
  return "unknown";
}

Domain parse_domain(std::string_view s) {
  if (s == "source") return Domain::Source;
  if (s == "target") return Domain::Target;
  throw Error(ErrorCode::MalformedFilename, "bad domain '" + std::string(s) + "'");
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw Error(ErrorCode::MalformedFilename, "bad split '" + std::string(s) + "'");
}

Condition parse_condition(std::string_view s) {
  if (s == "normal") return Condition::Normal;
  if (s == "anomaly") return Condition::Anomaly;
  if (s == "unknown") return Condition::Unknown;
  throw Error(ErrorCode::MalformedFilename, "bad condition '" + std::string(s) + "'");
}

ClipMetadata parse_clip_metadata(std::string_view filename) {
  std::string_view name = filename;
  if (const auto slash = name.find_last_of("/\\"); slash != std::string_view::npos) {
    name = name.substr(slash + 1);
  }
  std::string_view stem = name;
  if (stem.size() >= 4 && stem.substr(stem.size() - 4) == ".wav") stem.remove_suffix(4);

  const auto tok = split_tokens(stem, '_');
  if (tok.size() < 5 || tok[0] != "section" || !all_digits(tok[1])) {
    malformed(name, "missing section segment");
  }

  ClipMetadata meta;
  std::from_chars(tok[1].data(), tok[1].data() + tok[1].size(), meta.section_id);
  if (tok[2] != "source" && tok[2] != "target") malformed(name, "missing domain segment");
  meta.domain = parse_domain(tok[2]);
  if (tok[3] != "train" && tok[3] != "test") malformed(name, "missing split segment");
  meta.split = parse_split(tok[3]);

  std::size_t pos = 4;
  if (tok[pos] == "normal" || tok[pos] == "anomaly") {
    meta.condition = parse_condition(tok[pos]);
    ++pos;
  } else {
    meta.condition = meta.split == Split::Train ? Condition::Normal : Condition::Unknown;
  }
  if (pos >= tok.size() || !all_digits(tok[pos])) malformed(name, "missing clip index");
  meta.index = std::string(tok[pos]);
  ++pos;

  const std::size_t tail_count = tok.size() - pos;
  if (tail_count == 0) return meta;

  bool pairs_ok = tail_count % 2 == 0;
  for (std::size_t i = pos; pairs_ok && i < tok.size(); ++i) pairs_ok = !tok[i].empty();
  if (pairs_ok) {
    for (std::size_t i = pos; i < tok.size(); i += 2) {
      meta.attributes.emplace_back(std::string(tok[i]), std::string(tok[i + 1]));
    }
  } else {
    // Rejoin the remaining tokens exactly as they appeared.
    const std::size_t offset = static_cast<std::size_t>(tok[pos].data() - stem.data());
    meta.attributes.emplace_back("raw", std::string(stem.substr(offset)));
  }
  return meta;
}

std::string format_clip_filename(const ClipMetadata& meta) {
  char section[16];
  std::snprintf(section, sizeof(section), "%02d", meta.section_id);
  std::string out = "section_";
  out += section;
  out += '_';
  out += to_string(meta.domain);
  out += '_';
  out += to_string(meta.split);
  if (meta.condition != Condition::Unknown) {
    out += '_';
    out += to_string(meta.condition);
  }
  out += '_';
  out += meta.index.empty() ? "0000" : meta.index;
  for (const auto& [key, value] : meta.attributes) {
    if (key == "raw" && meta.attributes.size() == 1) {
      out += '_';
      out += value;
      break;
    }
    out += '_';
    out += key;
    out += '_';
    out += value;
  }
  out += ".wav";
  return out;
}

std::string canonical_attribute_key(const std::vector<Attribute>& attributes) {
  if (attributes.empty()) return std::string(kNoAttrKey);
  std::vector<Attribute> sorted = attributes;
  std::sort(sorted.begin(), sorted.end());
  std::string out;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i) out += ';';
    out += sorted[i].first;
    out += '=';
    out += sorted[i].second;
  }
  return out;
}

}  // namespace grhd::dataset
