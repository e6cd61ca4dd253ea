#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "grhd/common/key_value.hpp"
#include "grhd/dataset/synth.hpp"
#include "grhd/dsp/spectrogram.hpp"
#include "grhd/model/train.hpp"

namespace grhd::cli {

enum class Precision { F32, F64 };
enum class Scorer { Nls, Knn };

// Defaults, overridden by a key-value config file, overridden by flags.
// Keys: frame_size hop num_mels fmin fmax log_floor | backbone_channels
// head_channels grc_hidden | epochs batch_size lr alpha beta gamma
// lambda_gain focal_gamma class_weighting seed precision | scorer p knn_k |
// the synth keys of dataset::apply_synth_keys. Anything else is InvalidConfig.
struct RunConfig {
  dsp::SpectrogramConfig spectrogram;
  std::vector<std::size_t> backbone_channels{32, 64, 128};
  std::size_t head_channels = 128;
  std::size_t grc_hidden = 128;
  model::TrainConfig train;
  std::optional<std::uint64_t> seed;
  Precision precision = Precision::F32;
  Scorer scorer = Scorer::Nls;
  double p = 0.1;
  std::size_t knn_k = 1;
  KeyValues synth;  // passed through to the synthesizer

  void apply(const KeyValues& kv);
  void apply_file(const std::filesystem::path& path);
  // Every effective setting (synth keys excluded), for logs and checkpoints.
  KeyValues echo() const;
};

int cmd_synth(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream& log);

// Writes the checkpoint to out and the loss log to <out>.loss.csv.
int cmd_train(const RunConfig& config, const std::filesystem::path& data_dir, const std::string& machine,
              const std::filesystem::path& out, std::ostream& log);

// Scores the test clips of each checkpoint's machine and writes one report
// over all of them.
int cmd_eval(const RunConfig& config, const std::vector<std::filesystem::path>& checkpoints,
             const std::filesystem::path& data_dir, const std::filesystem::path& out, std::ostream& log);

int cmd_embed(const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir,
              const std::filesystem::path& out, std::ostream& log);

// Exit code 0 when every check passes, 1 otherwise.
int cmd_gradcheck(std::uint64_t seed, bool inject_grl_fault, std::ostream& log);

}  // namespace grhd::cli
