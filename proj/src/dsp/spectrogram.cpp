#include "grhd/dsp/spectrogram.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <shared_mutex>
#include <tuple>

#include "grhd/common/error.hpp"

namespace grhd::dsp {

namespace {

double nyquist_or(double fmax, double sample_rate) { return fmax > 0.0 ? fmax : 0.5 * sample_rate; }

// FFTW plans are created under a lock (the planner is not thread-safe) and
// executed with the new-array interface on fftw_malloc buffers.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    in_ = static_cast<double*>(fftw_malloc(sizeof(double) * n));
    out_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  const fftw_complex* output() const { return out_; }
  void execute() { fftw_execute_dft_r2c(plan_, in_, out_); }

 private:
  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }

  std::size_t n_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

}  // namespace

void validate(const SpectrogramConfig& c, double sample_rate) {
  if (!(sample_rate > 0.0)) throw Error(ErrorCode::InvalidConfig, "sample rate must be positive");
  if (c.frame_size < 2) throw Error(ErrorCode::InvalidConfig, "frame_size must be at least 2");
  if (c.hop == 0 || c.hop > c.frame_size) throw Error(ErrorCode::InvalidConfig, "need 0 < hop <= frame_size");
  if (c.num_mels == 0) throw Error(ErrorCode::InvalidConfig, "num_mels must be positive");
  const double fmax = nyquist_or(c.fmax, sample_rate);
  if (!(c.fmin >= 0.0 && c.fmin < fmax && fmax <= 0.5 * sample_rate)) {
    throw Error(ErrorCode::InvalidConfig, "need 0 <= fmin < fmax <= sample_rate / 2");
  }
  if (!(c.log_floor > 0.0)) throw Error(ErrorCode::InvalidConfig, "log_floor must be positive");
}

std::size_t num_frames(std::size_t num_samples, const SpectrogramConfig& c) {
  if (num_samples < c.frame_size) {
    throw Error(ErrorCode::SignalTooShort,
                std::to_string(num_samples) + " samples < frame size " + std::to_string(c.frame_size));
  }
  return 1 + (num_samples - c.frame_size) / c.hop;
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

ComplexMatrix stft(std::span<const float> samples, const SpectrogramConfig& c) {
  if (c.hop == 0 || c.hop > c.frame_size || c.frame_size < 2) throw Error(ErrorCode::InvalidConfig, "bad frame/hop");
  const std::size_t frames = num_frames(samples.size(), c);
  const std::size_t bins = c.frame_size / 2 + 1;
  const auto window = hann_window(c.frame_size);

  ComplexMatrix out;
  out.bins = bins;
  out.frames = frames;
  out.values.resize(bins * frames);

  RealFft fft(c.frame_size);
  for (std::size_t t = 0; t < frames; ++t) {
    const float* frame = samples.data() + t * c.hop;
    double* in = fft.input();
    for (std::size_t i = 0; i < c.frame_size; ++i) in[i] = window[i] * static_cast<double>(frame[i]);
    fft.execute();
    const fftw_complex* spec = fft.output();
    for (std::size_t k = 0; k < bins; ++k) out.values[k * frames + t] = {spec[k][0], spec[k][1]};
  }
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

Matrix build_filterbank(const SpectrogramConfig& c, double sample_rate) {
  validate(c, sample_rate);
  const std::size_t bins = c.frame_size / 2 + 1;
  const double mel_lo = hz_to_mel(c.fmin);
  const double mel_hi = hz_to_mel(nyquist_or(c.fmax, sample_rate));

  std::vector<double> edges(c.num_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(c.num_mels + 1));
  }

  Matrix fb{c.num_mels, bins, std::vector<double>(c.num_mels * bins, 0.0)};
  for (std::size_t m = 0; m < c.num_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    bool any = false;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(c.frame_size);
      double w = 0.0;
      if (f > left && f <= center) {
        w = (f - left) / (center - left);
      } else if (f > center && f < right) {
        w = (right - f) / (right - center);
      }
      if (w > 0.0) {
        fb.at(m, k) = w;
        any = true;
      }
    }
    if (!any) {
      throw Error(ErrorCode::InvalidConfig, "mel filter " + std::to_string(m) + " covers no FFT bin; reduce num_mels (" +
                                                std::to_string(c.num_mels) + ") or increase frame_size");
    }
  }
  return fb;
}

}  // namespace

std::shared_ptr<const Matrix> mel_filterbank(const SpectrogramConfig& c, double sample_rate) {
  using Key = std::tuple<std::size_t, std::size_t, double, double, double>;
  static std::shared_mutex mutex;
  static std::map<Key, std::shared_ptr<const Matrix>> cache;

  const Key key{c.frame_size, c.num_mels, c.fmin, nyquist_or(c.fmax, sample_rate), sample_rate};
  {
    std::shared_lock lock(mutex);
    if (const auto it = cache.find(key); it != cache.end()) return it->second;
  }
  auto fb = std::make_shared<const Matrix>(build_filterbank(c, sample_rate));
  std::unique_lock lock(mutex);
  return cache.try_emplace(key, std::move(fb)).first->second;
}

LogMelSpectrogram log_mel(std::span<const float> samples, double sample_rate, const SpectrogramConfig& c,
                          std::string clip_id) {
  const auto fb = mel_filterbank(c, sample_rate);
  const ComplexMatrix spec = stft(samples, c);
  const std::size_t frames = spec.frames;

  LogMelSpectrogram out;
  out.config = c;
  out.clip_id = std::move(clip_id);
  out.values = Matrix{c.num_mels, frames, std::vector<double>(c.num_mels * frames, 0.0)};

  std::vector<double> power(spec.bins * frames);
  for (std::size_t i = 0; i < power.size(); ++i) power[i] = std::norm(spec.values[i]);

  const double log_floor = std::log(c.log_floor);
  for (std::size_t m = 0; m < c.num_mels; ++m) {
    for (std::size_t t = 0; t < frames; ++t) {
      double e = 0.0;
      for (std::size_t k = 0; k < spec.bins; ++k) {
        const double w = fb->at(m, k);
        if (w != 0.0) e += w * power[k * frames + t];
      }
      out.values.at(m, t) = e > c.log_floor ? std::log(e) : log_floor;
    }
  }
  return out;
}

bool StandardizationStats::any_degenerate() const {
  return std::any_of(degenerate.begin(), degenerate.end(), [](bool b) { return b; });
}

StandardizationStats compute_stats(std::span<const LogMelSpectrogram> specs) {
  if (specs.empty()) throw Error(ErrorCode::ContractViolation, "standardize needs at least one spectrogram");
  const std::size_t mels = specs.front().num_mels();
  StandardizationStats stats;
  stats.mean.assign(mels, 0.0);
  stats.stddev.assign(mels, 1.0);
  stats.degenerate.assign(mels, false);

  std::size_t count = 0;
  for (const auto& s : specs) {
    if (s.num_mels() != mels) throw Error(ErrorCode::ShapeMismatch, "spectrograms disagree on num_mels");
    count += s.num_frames();
    for (std::size_t m = 0; m < mels; ++m) {
      for (std::size_t t = 0; t < s.num_frames(); ++t) stats.mean[m] += s.values.at(m, t);
    }
  }
  for (auto& v : stats.mean) v /= static_cast<double>(count);

  std::vector<double> var(mels, 0.0);
  for (const auto& s : specs) {
    for (std::size_t m = 0; m < mels; ++m) {
      for (std::size_t t = 0; t < s.num_frames(); ++t) {
        const double d = s.values.at(m, t) - stats.mean[m];
        var[m] += d * d;
      }
    }
  }
  for (std::size_t m = 0; m < mels; ++m) {
    var[m] /= static_cast<double>(count);
    // Constant bins still pick up rounding noise from the mean.
    if (var[m] <= 1e-20 * (1.0 + stats.mean[m] * stats.mean[m])) {
      stats.degenerate[m] = true;
      stats.stddev[m] = 1.0;
    } else {
      stats.stddev[m] = std::sqrt(var[m]);
    }
  }
  return stats;
}

LogMelSpectrogram apply_stats(const LogMelSpectrogram& spec, const StandardizationStats& stats) {
  if (spec.num_mels() != stats.mean.size()) throw Error(ErrorCode::ShapeMismatch, "stats do not match num_mels");
  LogMelSpectrogram out = spec;
  for (std::size_t m = 0; m < spec.num_mels(); ++m) {
    for (std::size_t t = 0; t < spec.num_frames(); ++t) {
      out.values.at(m, t) = stats.degenerate[m] ? 0.0 : (spec.values.at(m, t) - stats.mean[m]) / stats.stddev[m];
    }
  }
  return out;
}

Standardized standardize(std::span<const LogMelSpectrogram> specs, const std::optional<StandardizationStats>& stats) {
  if (specs.empty()) throw Error(ErrorCode::ContractViolation, "standardize needs at least one spectrogram");
  Standardized out;
  out.stats = stats ? *stats : compute_stats(specs);
  out.spectrograms.reserve(specs.size());
  for (const auto& s : specs) out.spectrograms.push_back(apply_stats(s, out.stats));
  return out;
}

}  // namespace grhd::dsp
