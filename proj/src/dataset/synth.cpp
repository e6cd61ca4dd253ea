#include "grhd/dataset/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "grhd/common/error.hpp"
#include "grhd/common/rng.hpp"
#include "grhd/dataset/attribute_groups.hpp"

namespace grhd::dataset {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double cents_ratio(double cents) { return std::exp2(cents / 1200.0); }

bool valid_name(const std::string& s) {
  return !s.empty() && s.find_first_of("_,/\\: \t") == std::string::npos;
}

std::string index_string(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", i);
  return buf;
}

std::vector<Attribute> group_attributes(int group, Domain domain) {
  return {{"spd", std::to_string(20 + 4 * group) + "V"}, {"noise", domain == Domain::Source ? "1" : "2"}};
}

std::uint64_t entry_seed(std::uint64_t seed, const SynthEntry& e) {
  std::uint64_t h = mix_seed(seed, static_cast<std::uint64_t>(e.machine));
  h = mix_seed(h, static_cast<std::uint64_t>(e.metadata.section_id));
  h = mix_seed(h, e.metadata.domain == Domain::Source ? 0 : 1);
  h = mix_seed(h, e.metadata.split == Split::Train ? 0 : 1);
  h = mix_seed(h, e.metadata.condition == Condition::Anomaly ? 1 : 0);
  return mix_seed(h, std::stoull(e.metadata.index));
}

const std::set<std::string>& synth_keys() {
  static const std::set<std::string> keys = {
      "machines",          "sections",          "groups_per_section", "source_count",   "target_count",
      "test_normal_count", "test_anomaly_count", "sample_rate",        "duration_s",     "signature_step_cents",
      "jitter_cents",      "modulation_depth",  "target_shift_cents", "source_noise",   "target_noise",
      "anomaly_mode",      "click_rate_hz",     "click_amplitude",    "click_ms",       "pitch_shift_cents",
      "seed"};
  return keys;
}

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); }

}  // namespace

void validate(const SynthConfig& c) {
  if (c.machines.empty()) invalid("no machines");
  std::set<std::string> names;
  for (const auto& m : c.machines) {
    if (!valid_name(m.name)) invalid("bad machine name '" + m.name + "'");
    if (!names.insert(m.name).second) invalid("duplicate machine '" + m.name + "'");
    if (!(m.base_hz > 0.0) || m.harmonics < 1) invalid("machine " + m.name + ": base_hz and harmonics must be positive");
  }
  if (c.sections < 1 || c.sections > 99) invalid("sections must be in [1, 99]");
  if (c.groups_per_section < 1) invalid("groups_per_section must be positive");
  if (c.target_count < 1 || c.source_count < c.target_count) invalid("need source_count >= target_count >= 1");
  if (c.test_normal_count < 0 || c.test_anomaly_count < 0) invalid("test counts must be nonnegative");
  if (!(c.sample_rate > 0.0) || !(c.duration_s > 0.0)) invalid("sample_rate and duration_s must be positive");
  if (std::lround(c.sample_rate * c.duration_s) < 1) invalid("clip would be empty");
  if (c.jitter_cents < 0.0 || c.source_noise < 0.0 || c.target_noise < 0.0) invalid("negative jitter/noise");
  if (c.modulation_depth < 0.0 || c.modulation_depth >= 1.0) invalid("modulation_depth must be in [0, 1)");
  if (c.click_rate_hz < 0.0 || c.click_amplitude < 0.0 || !(c.click_ms > 0.0)) invalid("bad click parameters");
}

bool is_synth_key(const std::string& key) { return synth_keys().contains(key); }

void apply_synth_keys(SynthConfig& c, const KeyValues& kv) {
  for (const auto& [key, value] : kv) {
    if (!is_synth_key(key)) invalid("unknown synth key '" + key + "'");
    if (key == "machines") {
      c.machines.clear();
      for (const auto& item : split_list(value)) {
        const auto parts = split_list(item, ':');
        MachineProfile m;
        m.name = parts.at(0);
        m.base_hz = 150.0 + 40.0 * static_cast<double>(c.machines.size());
        if (parts.size() > 1) m.base_hz = parse_double(key, parts[1]);
        if (parts.size() > 2) m.harmonics = static_cast<int>(parse_int(key, parts[2]));
        if (parts.size() > 3) invalid("machines: expected name[:base_hz[:harmonics]]");
        c.machines.push_back(m);
      }
    } else if (key == "sections") c.sections = static_cast<int>(parse_int(key, value));
    else if (key == "groups_per_section") c.groups_per_section = static_cast<int>(parse_int(key, value));
    else if (key == "source_count") c.source_count = static_cast<int>(parse_int(key, value));
    else if (key == "target_count") c.target_count = static_cast<int>(parse_int(key, value));
    else if (key == "test_normal_count") c.test_normal_count = static_cast<int>(parse_int(key, value));
    else if (key == "test_anomaly_count") c.test_anomaly_count = static_cast<int>(parse_int(key, value));
    else if (key == "sample_rate") c.sample_rate = parse_double(key, value);
    else if (key == "duration_s") c.duration_s = parse_double(key, value);
    else if (key == "signature_step_cents") c.signature_step_cents = parse_double(key, value);
    else if (key == "jitter_cents") c.jitter_cents = parse_double(key, value);
    else if (key == "modulation_depth") c.modulation_depth = parse_double(key, value);
    else if (key == "target_shift_cents") c.target_shift_cents = parse_double(key, value);
    else if (key == "source_noise") c.source_noise = parse_double(key, value);
    else if (key == "target_noise") c.target_noise = parse_double(key, value);
    else if (key == "anomaly_mode") {
      if (value == "click") c.anomaly_mode = AnomalyMode::Click;
      else if (value == "pitch") c.anomaly_mode = AnomalyMode::Pitch;
      else if (value == "both") c.anomaly_mode = AnomalyMode::Both;
      else invalid("anomaly_mode must be click, pitch or both");
    } else if (key == "click_rate_hz") c.click_rate_hz = parse_double(key, value);
    else if (key == "click_amplitude") c.click_amplitude = parse_double(key, value);
    else if (key == "click_ms") c.click_ms = parse_double(key, value);
    else if (key == "pitch_shift_cents") c.pitch_shift_cents = parse_double(key, value);
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(key, value));
  }
}

SynthCorpus::SynthCorpus(SynthConfig config) : config_(std::move(config)) {
  validate(config_);
  const int groups = config_.groups_per_section;
  auto add = [&](int machine, int section, Domain domain, Split split, Condition condition, int count) {
    for (int i = 0; i < count; ++i) {
      SynthEntry e;
      e.machine = machine;
      e.group = i % groups;
      e.metadata.machine_type = config_.machines[static_cast<std::size_t>(machine)].name;
      e.metadata.section_id = section;
      e.metadata.domain = domain;
      e.metadata.split = split;
      e.metadata.condition = condition;
      e.metadata.index = index_string(i);
      e.metadata.attributes = group_attributes(e.group, domain);
      e.relative_path = e.metadata.machine_type + "/" + std::string(to_string(split)) + "/" +
                        format_clip_filename(e.metadata);
      entries_.push_back(std::move(e));
    }
  };
  for (int m = 0; m < static_cast<int>(config_.machines.size()); ++m) {
    for (int s = 0; s < config_.sections; ++s) {
      add(m, s, Domain::Source, Split::Train, Condition::Normal, config_.source_count);
      add(m, s, Domain::Target, Split::Train, Condition::Normal, config_.target_count);
      for (const Domain d : {Domain::Source, Domain::Target}) {
        add(m, s, d, Split::Test, Condition::Normal, config_.test_normal_count);
        add(m, s, d, Split::Test, Condition::Anomaly, config_.test_anomaly_count);
      }
    }
  }
}

RenderedClip SynthCorpus::render(const SynthEntry& entry, bool inject_anomaly) const {
  const SynthConfig& c = config_;
  const MachineProfile& machine = c.machines.at(static_cast<std::size_t>(entry.machine));
  const bool target = entry.metadata.domain == Domain::Target;
  const bool anomaly = inject_anomaly && entry.metadata.condition == Condition::Anomaly;
  const std::uint64_t seed = entry_seed(c.seed, entry);
  Rng rng(seed);
  Rng anomaly_rng(mix_seed(seed, 0xA70A1ULL));

  const auto n = static_cast<std::size_t>(std::lround(c.sample_rate * c.duration_s));
  const int signature = entry.group * c.sections + entry.metadata.section_id;
  double f0 = machine.base_hz * cents_ratio(signature * c.signature_step_cents);
  f0 *= cents_ratio(rng.uniform(-c.jitter_cents, c.jitter_cents));
  if (target) f0 *= cents_ratio(c.target_shift_cents);
  if (anomaly && c.anomaly_mode != AnomalyMode::Click) {
    // Shift away from the signature, turning back at either end of the
    // machine's signature range so the shifted pitch stays inside it.
    double sign = anomaly_rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double top = (c.groups_per_section * c.sections - 1) * c.signature_step_cents;
    const double shifted = signature * c.signature_step_cents + sign * c.pitch_shift_cents;
    if (shifted < 0.0 || shifted > top) sign = -sign;
    f0 *= cents_ratio(sign * c.pitch_shift_cents);
  }
  const double mod_rate = 2.0 + 1.5 * entry.group;
  const double mod_phase = rng.uniform(0.0, kTwoPi);

  struct Partial {
    double omega, amp, phase;
  };
  std::vector<Partial> partials;
  double amp_sum = 0.0;
  for (int k = 1; k <= machine.harmonics; ++k) {
    const double amp = (1.0 / k) * (1.0 + 0.1 * rng.uniform(-1.0, 1.0));
    const double phase = rng.uniform(0.0, kTwoPi);
    amp_sum += 1.0 / k;
    if (k * f0 < 0.5 * c.sample_rate) partials.push_back({kTwoPi * k * f0 / c.sample_rate, amp, phase});
  }
  const double gain = 0.5 / (amp_sum * (1.0 + c.modulation_depth));
  const double noise = target ? c.target_noise : c.source_noise;
  const double mod_omega = kTwoPi * mod_rate / c.sample_rate;

  RenderedClip out;
  out.clip.sample_rate = c.sample_rate;
  out.clip.metadata = entry.metadata;
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t) {
    double s = 0.0;
    for (const auto& p : partials) s += p.amp * std::sin(p.omega * static_cast<double>(t) + p.phase);
    const double env = 1.0 + c.modulation_depth * std::sin(mod_omega * static_cast<double>(t) + mod_phase);
    x[t] = gain * env * s + noise * rng.normal();
  }

  if (anomaly && c.anomaly_mode != AnomalyMode::Pitch) {
    const auto len = std::min<std::size_t>(n, std::max<std::size_t>(1, std::lround(c.click_ms * 1e-3 * c.sample_rate)));
    const auto count = std::max<long>(1, std::lround(c.click_rate_hz * c.duration_s));
    const double tau = static_cast<double>(len) / 4.0;
    out.click_length = len;
    for (long i = 0; i < count; ++i) {
      const std::size_t start = static_cast<std::size_t>(anomaly_rng.below(n - len + 1));
      const double sign = anomaly_rng.uniform() < 0.5 ? -1.0 : 1.0;
      out.click_positions.push_back(start);
      for (std::size_t j = 0; j < len; ++j) {
        const double decay = std::exp(-static_cast<double>(j) / tau);
        x[start + j] += sign * c.click_amplitude * decay * (0.5 + 0.5 * anomaly_rng.uniform());
      }
    }
  }

  out.clip.samples.resize(n);
  for (std::size_t t = 0; t < n; ++t) out.clip.samples[t] = static_cast<float>(std::clamp(x[t], -1.0, 1.0));
  return out;
}

SynthCorpus synth_generate(const SynthConfig& config) { return SynthCorpus(config); }

std::vector<ManifestRow> manifest_rows(const SynthCorpus& corpus) {
  std::map<std::string, std::vector<ClipMetadata>> by_machine;
  for (const auto& e : corpus.entries()) by_machine[e.metadata.machine_type].push_back(e.metadata);
  std::map<std::string, AttributeGroupTable> tables;
  for (const auto& [machine, metas] : by_machine) tables[machine] = build_attribute_groups(metas);

  std::vector<ManifestRow> rows;
  rows.reserve(corpus.entries().size());
  for (const auto& e : corpus.entries()) {
    const auto& table = tables.at(e.metadata.machine_type);
    rows.push_back({e.relative_path, e.metadata,
                    *table.local_group(e.metadata.section_id, canonical_attribute_key(e.metadata.attributes))});
  }
  return rows;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "filename,machine_type,section,domain,split,condition,attr_group\n";
  for (const auto& r : rows) {
    out << r.filename << ',' << r.metadata.machine_type << ',' << r.metadata.section_id << ','
        << to_string(r.metadata.domain) << ',' << to_string(r.metadata.split) << ','
        << to_string(r.metadata.condition) << ',' << r.attr_group << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (trim(line) != "filename,machine_type,section,domain,split,condition,attr_group") {
    throw Error(ErrorCode::UnsupportedFormat, path.string() + ": unexpected manifest header");
  }
  std::vector<ManifestRow> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string col; std::getline(ss, col, ',');) cols.push_back(trim(col));
    if (cols.size() != 7) throw Error(ErrorCode::UnsupportedFormat, path.string() + ": bad row '" + line + "'");
    ManifestRow row;
    row.filename = cols[0];
    row.metadata = parse_clip_metadata(cols[0]);
    row.metadata.machine_type = cols[1];
    const bool consistent = std::to_string(row.metadata.section_id) == cols[2] &&
                            to_string(row.metadata.domain) == cols[3] && to_string(row.metadata.split) == cols[4] &&
                            to_string(row.metadata.condition) == cols[5];
    if (!consistent) throw Error(ErrorCode::ContractViolation, "manifest row disagrees with filename: " + cols[0]);
    row.attr_group = static_cast<std::size_t>(parse_int("attr_group", cols[6]));
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, out_dir.string() + ": " + ec.message());
  for (const auto& e : corpus.entries()) {
    const fs::path target = out_dir / e.relative_path;
    fs::create_directories(target.parent_path(), ec);
    if (ec) throw Error(ErrorCode::IoError, target.parent_path().string() + ": " + ec.message());
    const auto rendered = corpus.render(e);
    write_wav(target, rendered.clip.samples, rendered.clip.sample_rate);
  }
  write_manifest(out_dir / "manifest.csv", manifest_rows(corpus));
}

}  // namespace grhd::dataset
