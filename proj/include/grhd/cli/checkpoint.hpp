#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "grhd/autodiff/tensor.hpp"
#include "grhd/common/key_value.hpp"
#include "grhd/dataset/attribute_groups.hpp"
#include "grhd/dsp/spectrogram.hpp"
#include "grhd/model/grhd_model.hpp"

namespace grhd::cli {

// Byte layout (all integers and floats little-endian):
//   "GRHDCKPT"  u32 version  u64 payload_bytes  payload  u64 fnv1a64(everything before)
// payload:
//   4 key-value blocks: meta, model, spectrogram, training
//       block = u32 count, count x (str key, str value); str = u32 length + bytes
//   u32 tensor count, per tensor: str name, u8 dtype (0 = f32, 1 = f64),
//       u32 rank, rank x u64 dims, values
//   standardization: u32 mels, mels x f64 mean, mels x f64 std, mels x u8 degenerate
//   attribute groups: u32 sections, per section: i32 id, u32 groups,
//       per group: str key, u64 count
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class Dtype : std::uint8_t { F32 = 0, F64 = 1 };

struct NamedTensor {
  std::string name;
  ad::Shape shape;
  Dtype dtype = Dtype::F32;
  std::vector<float> f32;
  std::vector<double> f64;
};

struct Checkpoint {
  KeyValues meta;  // machine, precision
  KeyValues model;
  KeyValues spectrogram;
  KeyValues training;
  std::vector<NamedTensor> tensors;  // parameters, then batch-norm buffers
  dsp::StandardizationStats stats;
  dataset::AttributeGroupTable groups;

  std::string meta_value(const std::string& key) const;
};

std::vector<std::uint8_t> serialize(const Checkpoint& c);
// Throws UnsupportedFormat (bad magic), VersionMismatch, ChecksumMismatch
// (including truncation).
Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size);

KeyValues to_key_values(const dsp::SpectrogramConfig& c);
dsp::SpectrogramConfig spectrogram_config_from(const KeyValues& kv);

// Parameters and buffers by name, in the precision of T.
template <typename T>
void store_model(Checkpoint& c, const model::GrhdModel<T>& m);
// Rebuilds the model from the stored config and copies every named tensor;
// throws ContractViolation for missing or extra names, ShapeMismatch for
// shape or dtype disagreements.
template <typename T>
model::GrhdModel<T> restore_model(const Checkpoint& c);

}  // namespace grhd::cli
