#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "grhd/autodiff/ops.hpp"
#include "grhd/autodiff/tensor.hpp"
#include "grhd/common/key_value.hpp"
#include "grhd/common/rng.hpp"

namespace grhd::model {

using ad::Tensor;

// Layer table (defaults, 1 s at 16 kHz):
//   temporal: conv1d 1->M (k=frame_size, stride=hop) + BN + relu,
//             conv1d M->M (k=3, pad 1) + BN + relu, conv1d M->M (k=3, pad 1)
//             -> [N x M x F]
//   stack with the standardized log-mel map -> [N x 2 x M x F]
//   three blocks conv2d 3x3 stride 2 pad 1 + BN + relu -> z_rev [N x C x M/8 x ceil(F/8)]
//   section head:   conv2d 3x3 + BN + relu -> z_sec, GAP, dense -> sections
//   attribute head: conv2d 3x3 + BN + relu on z_sec -> z_att, GAP, dense -> groups
//   GRC: grad_reverse(z_rev), GAP, dense -> hidden, relu, dense -> groups
struct ModelConfig {
  std::size_t num_samples = 16000;
  std::size_t frame_size = 1024;
  std::size_t hop = 512;
  std::size_t num_mels = 128;
  std::vector<std::size_t> backbone_channels{32, 64, 128};
  std::size_t head_channels = 128;
  std::size_t grc_hidden = 128;
  std::size_t num_sections = 1;
  std::size_t num_groups = 1;

  std::size_t num_frames() const;
  // Throws InvalidConfig.
  void validate() const;
};

KeyValues to_key_values(const ModelConfig& c);
ModelConfig model_config_from(const KeyValues& kv);

enum class GrlMode { Reverse, Identity };

template <typename T>
struct Outputs {
  Tensor<T> z_rev;
  Tensor<T> logits_rev;
  Tensor<T> z_sec;
  Tensor<T> logits_sec;
  Tensor<T> z_att;
  Tensor<T> logits_att;
};

template <typename T>
struct ConvBlock {
  Tensor<T> weight;
  Tensor<T> gamma;
  Tensor<T> beta;
  ad::BatchNormBuffers<T> bn;
};

template <typename T>
struct Dense {
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
class GrhdModel {
 public:
  GrhdModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // waveform [N x 1 x T], logmel [N x M x F] (standardized).
  Tensor<T> backbone_forward(const Tensor<T>& waveform, const Tensor<T>& logmel, bool training);
  Outputs<T> heads_forward(const Tensor<T>& z_rev, T lambda, bool training, GrlMode mode = GrlMode::Reverse);
  Outputs<T> forward(const Tensor<T>& waveform, const Tensor<T>& logmel, T lambda, bool training,
                     GrlMode mode = GrlMode::Reverse);

  // Stable names, e.g. "backbone.block1.weight", "grc.fc2.bias".
  std::vector<std::pair<std::string, Tensor<T>>> named_parameters() const;
  // Batch-norm running statistics, e.g. "head_sec.conv.running_mean".
  std::vector<std::pair<std::string, Tensor<T>>> named_buffers() const;
  std::vector<Tensor<T>> parameters() const;
  void zero_grad();

 private:
  ConvBlock<T> make_conv_block(std::size_t cout, std::size_t cin, std::size_t kh, std::size_t kw, Rng& rng);
  Dense<T> make_dense(std::size_t out, std::size_t in, Rng& rng);
  Tensor<T> apply(ConvBlock<T>& b, const Tensor<T>& conv_out, bool training);

  ModelConfig config_;
  ConvBlock<T> t1_, t2_;
  Tensor<T> t3_weight_, t3_bias_;
  std::vector<ConvBlock<T>> blocks_;
  ConvBlock<T> sec_conv_, att_conv_;
  Dense<T> sec_fc_, att_fc_, grc_fc1_, grc_fc2_;
};

extern template class GrhdModel<float>;
extern template class GrhdModel<double>;

// 2 / (1 + exp(-k p)) - 1. Throws InvalidSchedule unless 0 <= p <= 1, k > 0.
double lambda_schedule(double progress, double gain = 10.0);

}  // namespace grhd::model
