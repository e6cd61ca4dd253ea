#include "grhd/model/grhd_model.hpp"

#include <cmath>
#include <string>

#include "grhd/autodiff/init.hpp"
#include "grhd/common/error.hpp"

namespace grhd::model {

using ad::Conv2dOptions;

template <typename T>
const std::optional<Tensor<T>> kNoBias{};

std::size_t ModelConfig::num_frames() const {
  if (hop == 0 || num_samples < frame_size) return 0;
  return 1 + (num_samples - frame_size) / hop;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); };
  if (frame_size < 2 || hop == 0 || hop > frame_size) fail("need frame_size >= 2 and 0 < hop <= frame_size");
  if (num_samples < frame_size) fail("clip shorter than one frame");
  if (num_mels == 0) fail("num_mels must be positive");
  if (backbone_channels.empty()) fail("backbone_channels must list at least one block");
  for (const auto c : backbone_channels) {
    if (c == 0) fail("backbone channel counts must be positive");
  }
  if (head_channels == 0 || grc_hidden == 0) fail("head_channels and grc_hidden must be positive");
  if (num_sections == 0 || num_groups == 0) fail("need at least one section and one attribute group");
}

KeyValues to_key_values(const ModelConfig& c) {
  std::string channels;
  for (std::size_t i = 0; i < c.backbone_channels.size(); ++i) {
    channels += (i ? "," : "") + std::to_string(c.backbone_channels[i]);
  }
  return {
      {"num_samples", std::to_string(c.num_samples)},
      {"frame_size", std::to_string(c.frame_size)},
      {"hop", std::to_string(c.hop)},
      {"num_mels", std::to_string(c.num_mels)},
      {"backbone_channels", channels},
      {"head_channels", std::to_string(c.head_channels)},
      {"grc_hidden", std::to_string(c.grc_hidden)},
      {"num_sections", std::to_string(c.num_sections)},
      {"num_groups", std::to_string(c.num_groups)},
  };
}

ModelConfig model_config_from(const KeyValues& kv) {
  ModelConfig c;
  auto size = [](const std::string& k, const std::string& v) {
    const long long x = parse_int(k, v);
    if (x < 0) throw Error(ErrorCode::InvalidConfig, k + " must be nonnegative");
    return static_cast<std::size_t>(x);
  };
  for (const auto& [k, v] : kv) {
    if (k == "num_samples") c.num_samples = size(k, v);
    else if (k == "frame_size") c.frame_size = size(k, v);
    else if (k == "hop") c.hop = size(k, v);
    else if (k == "num_mels") c.num_mels = size(k, v);
    else if (k == "head_channels") c.head_channels = size(k, v);
    else if (k == "grc_hidden") c.grc_hidden = size(k, v);
    else if (k == "num_sections") c.num_sections = size(k, v);
    else if (k == "num_groups") c.num_groups = size(k, v);
    else if (k == "backbone_channels") {
      c.backbone_channels.clear();
      for (const auto& item : split_list(v)) c.backbone_channels.push_back(size(k, item));
    } else {
      throw Error(ErrorCode::InvalidConfig, "unknown model key '" + k + "'");
    }
  }
  c.validate();
  return c;
}

double lambda_schedule(double progress, double gain) {
  if (!(progress >= 0.0 && progress <= 1.0) || !(gain > 0.0)) {
    throw Error(ErrorCode::InvalidSchedule, "need 0 <= p <= 1 and k > 0, got p=" + std::to_string(progress) +
                                                " k=" + std::to_string(gain));
  }
  return 2.0 / (1.0 + std::exp(-gain * progress)) - 1.0;
}

template <typename T>
ConvBlock<T> GrhdModel<T>::make_conv_block(std::size_t cout, std::size_t cin, std::size_t kh, std::size_t kw,
                                           Rng& rng) {
  ConvBlock<T> b;
  b.weight = kh == 0 ? Tensor<T>::zeros({cout, cin, kw}, true) : Tensor<T>::zeros({cout, cin, kh, kw}, true);
  ad::kaiming_uniform(b.weight, cin * std::max<std::size_t>(kh, 1) * kw, rng);
  b.gamma = Tensor<T>::full({cout}, T(1), true);
  b.beta = Tensor<T>::zeros({cout}, true);
  b.bn.running_mean = Tensor<T>::zeros({cout});
  b.bn.running_var = Tensor<T>::full({cout}, T(1));
  return b;
}

template <typename T>
Dense<T> GrhdModel<T>::make_dense(std::size_t out, std::size_t in, Rng& rng) {
  Dense<T> d;
  d.weight = Tensor<T>::zeros({out, in}, true);
  ad::kaiming_uniform(d.weight, in, rng);
  d.bias = Tensor<T>::zeros({out}, true);
  return d;
}

template <typename T>
GrhdModel<T>::GrhdModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(seed);
  const std::size_t m = config_.num_mels;
  // kh = 0 marks a 1-D kernel.
  t1_ = make_conv_block(m, 1, 0, config_.frame_size, rng);
  t2_ = make_conv_block(m, m, 0, 3, rng);
  t3_weight_ = Tensor<T>::zeros({m, m, 3}, true);
  ad::kaiming_uniform(t3_weight_, m * 3, rng);
  t3_bias_ = Tensor<T>::zeros({m}, true);

  std::size_t cin = 2;
  for (const auto c : config_.backbone_channels) {
    blocks_.push_back(make_conv_block(c, cin, 3, 3, rng));
    cin = c;
  }
  const std::size_t h = config_.head_channels;
  sec_conv_ = make_conv_block(h, cin, 3, 3, rng);
  att_conv_ = make_conv_block(h, h, 3, 3, rng);
  sec_fc_ = make_dense(config_.num_sections, h, rng);
  att_fc_ = make_dense(config_.num_groups, h, rng);
  grc_fc1_ = make_dense(config_.grc_hidden, cin, rng);
  grc_fc2_ = make_dense(config_.num_groups, config_.grc_hidden, rng);
}

template <typename T>
Tensor<T> GrhdModel<T>::apply(ConvBlock<T>& b, const Tensor<T>& conv_out, bool training) {
  return ad::relu(ad::batch_norm(conv_out, b.gamma, b.beta, b.bn, training));
}

template <typename T>
Tensor<T> GrhdModel<T>::backbone_forward(const Tensor<T>& waveform, const Tensor<T>& logmel, bool training) {
  const std::size_t m = config_.num_mels, f = config_.num_frames();
  if (waveform.rank() != 3 || waveform.dim(1) != 1 || waveform.dim(2) != config_.num_samples) {
    throw Error(ErrorCode::ShapeMismatch, "waveform batch " + ad::shape_string(waveform.shape()) + ", expected [N, 1, " +
                                              std::to_string(config_.num_samples) + "]");
  }
  const std::size_t n = waveform.dim(0);
  if (logmel.shape() != ad::Shape{n, m, f}) {
    throw Error(ErrorCode::ShapeMismatch, "log-mel batch " + ad::shape_string(logmel.shape()) + ", expected " +
                                              ad::shape_string({n, m, f}));
  }

  auto t = apply(t1_, ad::conv1d(waveform, t1_.weight, kNoBias<T>, config_.hop, 0), training);
  t = apply(t2_, ad::conv1d(t, t2_.weight, kNoBias<T>, 1, 1), training);
  t = ad::conv1d(t, t3_weight_, std::optional<Tensor<T>>(t3_bias_), 1, 1);

  auto x = ad::concat(std::vector<Tensor<T>>{ad::reshape(t, {n, 1, m, f}), ad::reshape(logmel, {n, 1, m, f})}, 1);
  for (auto& b : blocks_) {
    x = apply(b, ad::conv2d(x, b.weight, kNoBias<T>, Conv2dOptions{2, 2, 1, 1}), training);
  }
  return x;
}

template <typename T>
Outputs<T> GrhdModel<T>::heads_forward(const Tensor<T>& z_rev, T lambda, bool training, GrlMode mode) {
  if (!(lambda >= T(0))) throw Error(ErrorCode::InvalidSchedule, "lambda must be nonnegative");
  Outputs<T> out;
  out.z_rev = z_rev;

  const auto reversed = mode == GrlMode::Reverse ? ad::grad_reverse(z_rev, lambda) : z_rev;
  auto h = ad::relu(ad::linear(ad::global_avg_pool(reversed), grc_fc1_.weight, std::optional(grc_fc1_.bias)));
  out.logits_rev = ad::linear(h, grc_fc2_.weight, std::optional(grc_fc2_.bias));

  const Conv2dOptions same{1, 1, 1, 1};
  out.z_sec = apply(sec_conv_, ad::conv2d(z_rev, sec_conv_.weight, kNoBias<T>, same), training);
  out.logits_sec = ad::linear(ad::global_avg_pool(out.z_sec), sec_fc_.weight, std::optional(sec_fc_.bias));
  out.z_att = apply(att_conv_, ad::conv2d(out.z_sec, att_conv_.weight, kNoBias<T>, same), training);
  out.logits_att = ad::linear(ad::global_avg_pool(out.z_att), att_fc_.weight, std::optional(att_fc_.bias));
  return out;
}

template <typename T>
Outputs<T> GrhdModel<T>::forward(const Tensor<T>& waveform, const Tensor<T>& logmel, T lambda, bool training,
                                 GrlMode mode) {
  return heads_forward(backbone_forward(waveform, logmel, training), lambda, training, mode);
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> GrhdModel<T>::named_parameters() const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  auto conv = [&](const std::string& prefix, const ConvBlock<T>& b) {
    out.emplace_back(prefix + ".weight", b.weight);
    out.emplace_back(prefix + ".bn_gamma", b.gamma);
    out.emplace_back(prefix + ".bn_beta", b.beta);
  };
  auto dense = [&](const std::string& prefix, const Dense<T>& d) {
    out.emplace_back(prefix + ".weight", d.weight);
    out.emplace_back(prefix + ".bias", d.bias);
  };
  conv("backbone.temporal1", t1_);
  conv("backbone.temporal2", t2_);
  out.emplace_back("backbone.temporal3.weight", t3_weight_);
  out.emplace_back("backbone.temporal3.bias", t3_bias_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) conv("backbone.block" + std::to_string(i + 1), blocks_[i]);
  conv("head_sec.conv", sec_conv_);
  dense("head_sec.fc", sec_fc_);
  conv("head_att.conv", att_conv_);
  dense("head_att.fc", att_fc_);
  dense("grc.fc1", grc_fc1_);
  dense("grc.fc2", grc_fc2_);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> GrhdModel<T>::named_buffers() const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  auto bn = [&](const std::string& prefix, const ConvBlock<T>& b) {
    out.emplace_back(prefix + ".running_mean", b.bn.running_mean);
    out.emplace_back(prefix + ".running_var", b.bn.running_var);
  };
  bn("backbone.temporal1", t1_);
  bn("backbone.temporal2", t2_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) bn("backbone.block" + std::to_string(i + 1), blocks_[i]);
  bn("head_sec.conv", sec_conv_);
  bn("head_att.conv", att_conv_);
  return out;
}

template <typename T>
std::vector<Tensor<T>> GrhdModel<T>::parameters() const {
  std::vector<Tensor<T>> out;
  for (auto& [_, t] : named_parameters()) out.push_back(t);
  return out;
}

template <typename T>
void GrhdModel<T>::zero_grad() {
  for (auto& t : parameters()) t.zero_grad();
}

template class GrhdModel<float>;
template class GrhdModel<double>;

}  // namespace grhd::model
