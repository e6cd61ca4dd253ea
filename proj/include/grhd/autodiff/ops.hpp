#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "grhd/autodiff/tensor.hpp"

namespace grhd::ad {

// Elementwise; shapes must match exactly (no broadcasting).
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);

template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);

template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);

template <typename T> Tensor<T> relu(const Tensor<T>& a);

// x [N x in], weight [out x in], bias [out] (optional) -> [N x out].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const std::optional<Tensor<T>>& bias = std::nullopt);

struct Conv2dOptions {
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;
};

// x [N x Cin x H x W], weight [Cout x Cin x KH x KW], bias [Cout].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const std::optional<Tensor<T>>& bias,
                 const Conv2dOptions& options);

// x [N x Cin x L], weight [Cout x Cin x K], bias [Cout].
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& weight, const std::optional<Tensor<T>>& bias,
                 std::size_t stride, std::size_t pad);

// Running statistics of a batch-norm layer (not trained by gradients).
template <typename T>
struct BatchNormBuffers {
  Tensor<T> running_mean;
  Tensor<T> running_var;
};

// Normalizes x [N x C x ...] per channel. Training mode uses batch statistics
// and updates the running buffers (unbiased variance); eval mode uses the
// running buffers.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, BatchNormBuffers<T>& buffers,
                     bool training, T momentum = T(0.1), T eps = T(1e-5));

// [N x C x ...] -> [N x C]
template <typename T> Tensor<T> global_avg_pool(const Tensor<T>& x);

// Row-wise over [N x C].
template <typename T> Tensor<T> softmax(const Tensor<T>& x);
template <typename T> Tensor<T> log_softmax(const Tensor<T>& x);

// Gradient reversal: identity forward, upstream gradient times -lambda
// backward.
template <typename T> Tensor<T> grad_reverse(const Tensor<T>& x, T lambda);

// Mean over the batch of -log softmax(logits)[label]. Throws LabelOutOfRange.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> labels);

// Mean over the batch of w[label] * (1 - p_t)^gamma_f * (-log p_t). Without
// weights and with gamma_f = 0 the forward value equals cross_entropy bit for
// bit.
template <typename T>
Tensor<T> focal_loss(const Tensor<T>& logits, std::span<const std::size_t> labels, T gamma_f,
                     std::span<const T> class_weights = {});

// Inverse-frequency weights normalized to mean 1 over classes; empty classes
// get weight 0 and do not count towards the mean.
std::vector<double> inverse_frequency_weights(std::span<const std::size_t> counts);

// Test hooks. ReluTrace records the activation pattern of every relu while
// alive (used to skip finite-difference probes that straddle a kink).
// GrlFaultInjection flips the reversal sign to prove the checks can fail.
class ReluTrace {
 public:
  ReluTrace();
  ~ReluTrace();
  ReluTrace(const ReluTrace&) = delete;
  ReluTrace& operator=(const ReluTrace&) = delete;
  const std::vector<std::uint8_t>& pattern() const { return pattern_; }

 private:
  std::vector<std::uint8_t> pattern_;
  std::vector<std::uint8_t>* previous_;
};

void set_grl_fault_injection(bool on);
bool grl_fault_injection();

}  // namespace grhd::ad
