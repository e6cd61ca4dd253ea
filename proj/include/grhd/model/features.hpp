#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "grhd/autodiff/tensor.hpp"
#include "grhd/dataset/metadata.hpp"
#include "grhd/dataset/wav.hpp"
#include "grhd/dsp/spectrogram.hpp"

namespace grhd::model {

// Model inputs for a set of equal-length clips: raw waveforms for the
// temporal branch and standardized log-mel maps.
struct FeatureSet {
  double sample_rate = 0.0;
  std::size_t num_samples = 0;
  std::size_t num_mels = 0;
  std::size_t num_frames = 0;
  std::vector<dataset::ClipMetadata> metadata;
  std::vector<std::string> clip_ids;
  std::vector<float> waveforms;  // [clips x num_samples]
  std::vector<double> logmels;   // [clips x num_mels x num_frames]

  std::size_t size() const { return metadata.size(); }
};

// GRHD_THREADS: unset or 0 means single-threaded.
std::size_t preprocessing_threads();

// Computes log-mel maps (optionally on several threads; results do not depend
// on the thread count) and standardizes them, with the given stats or with
// stats computed from these clips. Throws ShapeMismatch on ragged lengths and
// InvalidConfig on mixed sample rates.
FeatureSet prepare_features(std::span<const dataset::AudioClip> clips, const dsp::SpectrogramConfig& config,
                            const std::optional<dsp::StandardizationStats>& stats,
                            dsp::StandardizationStats* stats_out = nullptr, std::size_t threads = 0);

template <typename T>
ad::Tensor<T> waveform_batch(const FeatureSet& f, std::span<const std::size_t> indices);
template <typename T>
ad::Tensor<T> logmel_batch(const FeatureSet& f, std::span<const std::size_t> indices);

}  // namespace grhd::model
