#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "grhd/common/key_value.hpp"
#include "grhd/dataset/metadata.hpp"
#include "grhd/dataset/wav.hpp"

namespace grhd::dataset {

struct MachineProfile {
  std::string name;
  double base_hz = 150.0;  // fundamental of signature 0
  int harmonics = 6;
};

enum class AnomalyMode { Click, Pitch, Both };

// Synthetic domain-shifted corpus. Every attribute group gets its own
// harmonic stack and amplitude-modulation rate. Signatures of different
// sections are interleaved on a log-frequency grid: signature (section s,
// group g) sits at base_hz * 2^((g * sections + s) * signature_step_cents / 1200).
// Target-domain clips shift the stack by target_shift_cents and carry a higher
// noise floor; their attribute set differs in the "noise" value, so they form
// their own attribute groups.
struct SynthConfig {
  std::vector<MachineProfile> machines{{"ToyCar", 150.0, 6}};
  int sections = 3;
  int groups_per_section = 3;
  int source_count = 990;  // train clips per section
  int target_count = 10;
  int test_normal_count = 50;   // per section and domain
  int test_anomaly_count = 50;  // per section and domain
  double sample_rate = 16000.0;
  double duration_s = 1.0;
  double signature_step_cents = 300.0;
  double jitter_cents = 15.0;
  double modulation_depth = 0.3;
  double target_shift_cents = 50.0;
  double source_noise = 0.01;
  double target_noise = 0.04;
  AnomalyMode anomaly_mode = AnomalyMode::Both;
  double click_rate_hz = 6.0;
  double click_amplitude = 0.5;
  double click_ms = 4.0;
  double pitch_shift_cents = 300.0;  // one signature step by default
  std::uint64_t seed = 0;
};

// Throws InvalidConfig.
void validate(const SynthConfig& config);

// Documented keys: machines (name[:base_hz[:harmonics]], comma separated),
// sections, groups_per_section, source_count, target_count,
// test_normal_count, test_anomaly_count, sample_rate, duration_s,
// signature_step_cents, jitter_cents, modulation_depth, target_shift_cents,
// source_noise, target_noise, anomaly_mode (click|pitch|both), click_rate_hz,
// click_amplitude, click_ms, pitch_shift_cents, seed. Unknown keys throw.
void apply_synth_keys(SynthConfig& config, const KeyValues& kv);
bool is_synth_key(const std::string& key);

struct SynthEntry {
  ClipMetadata metadata;
  int machine = 0;  // index into SynthConfig::machines
  int group = 0;    // signature index within the section
  std::string relative_path;  // <machine>/<split>/<filename>
};

struct RenderedClip {
  AudioClip clip;
  std::vector<std::size_t> click_positions;
  std::size_t click_length = 0;
};

class SynthCorpus {
 public:
  explicit SynthCorpus(SynthConfig config);

  const SynthConfig& config() const { return config_; }
  const std::vector<SynthEntry>& entries() const { return entries_; }

  // Deterministic in (config, entry). With inject_anomaly = false an anomaly
  // entry renders as its normal twin.
  RenderedClip render(const SynthEntry& entry, bool inject_anomaly = true) const;
  AudioClip clip(std::size_t i) const { return render(entries_[i]).clip; }

 private:
  SynthConfig config_;
  std::vector<SynthEntry> entries_;
};

SynthCorpus synth_generate(const SynthConfig& config);

// Manifest CSV: filename,machine_type,section,domain,split,condition,attr_group
// attr_group is the per-section attribute-group index over all clips of the
// machine. LF line endings.
struct ManifestRow {
  std::string filename;
  ClipMetadata metadata;
  std::size_t attr_group = 0;
};

std::vector<ManifestRow> manifest_rows(const SynthCorpus& corpus);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);

// Writes WAVs under out_dir following relative_path plus manifest.csv.
void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& out_dir);

}  // namespace grhd::dataset
