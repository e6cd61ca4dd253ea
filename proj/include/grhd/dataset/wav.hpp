#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "grhd/dataset/metadata.hpp"

namespace grhd::dataset {

struct AudioClip {
  std::vector<float> samples;  // amplitudes in [-1, 1]
  double sample_rate = 0.0;
  ClipMetadata metadata;
};

enum class WavEncoding { Pcm16, Float32 };

struct WavData {
  std::vector<float> samples;
  double sample_rate = 0.0;
};

// Mono PCM16 or IEEE float32 only; anything else is UnsupportedFormat.
// PCM16 is normalized by 1/32768.
WavData read_wav(const std::filesystem::path& path);

// Metadata is parsed from the filename; machine_type is taken from the
// DCASE directory layout (<machine>/<train|test>/<file>.wav) when present.
AudioClip load_wav(const std::filesystem::path& path);

// PCM16 samples are rounded to nearest and clamped to the int16 range.
void write_wav(const std::filesystem::path& path, std::span<const float> samples, double sample_rate,
               WavEncoding encoding = WavEncoding::Pcm16);

}  // namespace grhd::dataset
