#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace grhd::dsp {

struct SpectrogramConfig {
  std::size_t frame_size = 1024;
  std::size_t hop = 512;
  std::size_t num_mels = 128;
  double fmin = 0.0;
  double fmax = 0.0;  // 0 selects Nyquist
  double log_floor = 1e-10;

  bool operator==(const SpectrogramConfig&) const = default;
};

// Throws InvalidConfig.
void validate(const SpectrogramConfig& config, double sample_rate);

// 1 + floor((T - frame) / hop); throws SignalTooShort for T < frame.
std::size_t num_frames(std::size_t num_samples, const SpectrogramConfig& config);

// Row-major real matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
};

// [frame/2 + 1 bins x frames], row-major by bin.
struct ComplexMatrix {
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<std::complex<double>> values;

  const std::complex<double>& at(std::size_t k, std::size_t t) const { return values[k * frames + t]; }
};

std::vector<double> hann_window(std::size_t n);  // periodic

// Unnormalized DFT of Hann-windowed frames fully inside the signal, so that
// sum_k c_k |X_k|^2 / N equals the windowed frame energy, with c_k = 2 for
// interior bins and 1 for DC and Nyquist.
ComplexMatrix stft(std::span<const float> samples, const SpectrogramConfig& config);

// HTK mel scale, triangular power filters [num_mels x frame/2+1]. Memoized per
// (config, sample_rate); safe for concurrent callers. Throws InvalidConfig if
// any filter covers no FFT bin.
std::shared_ptr<const Matrix> mel_filterbank(const SpectrogramConfig& config, double sample_rate);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

struct LogMelSpectrogram {
  Matrix values;  // [num_mels x num_frames], log(max(mel power, log_floor))
  SpectrogramConfig config;
  std::string clip_id;

  std::size_t num_mels() const { return values.rows; }
  std::size_t num_frames() const { return values.cols; }
};

LogMelSpectrogram log_mel(std::span<const float> samples, double sample_rate, const SpectrogramConfig& config,
                          std::string clip_id = {});

// Per-mel-bin statistics over every frame of a training corpus.
struct StandardizationStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // 1 where the bin is degenerate
  std::vector<bool> degenerate;

  bool any_degenerate() const;
  bool operator==(const StandardizationStats&) const = default;
};

StandardizationStats compute_stats(std::span<const LogMelSpectrogram> spectrograms);
LogMelSpectrogram apply_stats(const LogMelSpectrogram& spec, const StandardizationStats& stats);

struct Standardized {
  std::vector<LogMelSpectrogram> spectrograms;
  StandardizationStats stats;
};

// Without stats: computes them from the input (training path). With stats:
// reuses them (test path). Zero-variance bins get stddev 1 and are flagged.
Standardized standardize(std::span<const LogMelSpectrogram> spectrograms,
                         const std::optional<StandardizationStats>& stats = std::nullopt);

}  // namespace grhd::dsp
