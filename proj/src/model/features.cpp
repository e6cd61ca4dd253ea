#include "grhd/model/features.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <thread>

#include "grhd/common/error.hpp"
#include "grhd/common/key_value.hpp"

namespace grhd::model {

std::size_t preprocessing_threads() {
  const char* env = std::getenv("GRHD_THREADS");
  if (env == nullptr || *env == '\0') return 0;
  const long long n = parse_int("GRHD_THREADS", env);
  if (n < 0) throw Error(ErrorCode::InvalidConfig, "GRHD_THREADS must be nonnegative");
  return static_cast<std::size_t>(n);
}

FeatureSet prepare_features(std::span<const dataset::AudioClip> clips, const dsp::SpectrogramConfig& config,
                            const std::optional<dsp::StandardizationStats>& stats,
                            dsp::StandardizationStats* stats_out, std::size_t threads) {
  if (clips.empty()) throw Error(ErrorCode::ContractViolation, "no clips to prepare");
  FeatureSet f;
  f.sample_rate = clips.front().sample_rate;
  f.num_samples = clips.front().samples.size();
  f.num_mels = config.num_mels;
  dsp::validate(config, f.sample_rate);
  f.num_frames = dsp::num_frames(f.num_samples, config);
  for (const auto& c : clips) {
    if (c.sample_rate != f.sample_rate) throw Error(ErrorCode::InvalidConfig, "clips mix sample rates");
    if (c.samples.size() != f.num_samples) {
      throw Error(ErrorCode::ShapeMismatch, "clip " + dataset::format_clip_filename(c.metadata) + " has " +
                                                std::to_string(c.samples.size()) + " samples, expected " +
                                                std::to_string(f.num_samples));
    }
  }

  std::vector<dsp::LogMelSpectrogram> specs(clips.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < clips.size(); i += stride) {
      specs[i] = dsp::log_mel(clips[i].samples, clips[i].sample_rate, config, dataset::format_clip_filename(clips[i].metadata));
    }
  };
  const std::size_t workers = std::min(threads, clips.size());
  if (workers <= 1) {
    work(0, 1);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          work(w, workers);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  const auto standardized = dsp::standardize(specs, stats);
  if (stats_out != nullptr) *stats_out = standardized.stats;

  const std::size_t per_clip = f.num_mels * f.num_frames;
  f.waveforms.reserve(clips.size() * f.num_samples);
  f.logmels.reserve(clips.size() * per_clip);
  for (std::size_t i = 0; i < clips.size(); ++i) {
    f.metadata.push_back(clips[i].metadata);
    f.clip_ids.push_back(specs[i].clip_id);
    f.waveforms.insert(f.waveforms.end(), clips[i].samples.begin(), clips[i].samples.end());
    const auto& v = standardized.spectrograms[i].values.values;
    f.logmels.insert(f.logmels.end(), v.begin(), v.end());
  }
  return f;
}

template <typename T>
ad::Tensor<T> waveform_batch(const FeatureSet& f, std::span<const std::size_t> indices) {
  std::vector<T> data;
  data.reserve(indices.size() * f.num_samples);
  for (const auto i : indices) {
    const float* src = f.waveforms.data() + i * f.num_samples;
    data.insert(data.end(), src, src + f.num_samples);
  }
  return ad::Tensor<T>::from_data({indices.size(), 1, f.num_samples}, std::move(data));
}

template <typename T>
ad::Tensor<T> logmel_batch(const FeatureSet& f, std::span<const std::size_t> indices) {
  const std::size_t per_clip = f.num_mels * f.num_frames;
  std::vector<T> data;
  data.reserve(indices.size() * per_clip);
  for (const auto i : indices) {
    const double* src = f.logmels.data() + i * per_clip;
    for (std::size_t k = 0; k < per_clip; ++k) data.push_back(static_cast<T>(src[k]));
  }
  return ad::Tensor<T>::from_data({indices.size(), f.num_mels, f.num_frames}, std::move(data));
}

template ad::Tensor<float> waveform_batch(const FeatureSet&, std::span<const std::size_t>);
template ad::Tensor<double> waveform_batch(const FeatureSet&, std::span<const std::size_t>);
template ad::Tensor<float> logmel_batch(const FeatureSet&, std::span<const std::size_t>);
template ad::Tensor<double> logmel_batch(const FeatureSet&, std::span<const std::size_t>);

}  // namespace grhd::model
