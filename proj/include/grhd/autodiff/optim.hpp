#pragma once

#include <cstdint>
#include <vector>

#include "grhd/autodiff/tensor.hpp"

namespace grhd::ad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moments are sized on the first step and must keep matching the parameter
// list afterwards.
template <typename T>
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
};

// Bias-corrected Adam update of every parameter from its accumulated grad.
// A parameter without a grad buffer is treated as having zero gradient.
// Throws ShapeMismatch when the parameter list disagrees with the state.
template <typename T>
void adam_step(const std::vector<Tensor<T>>& params, AdamState<T>& state);

// eta_min + (lr0 - eta_min) (1 + cos(pi epoch / total)) / 2.
// Throws InvalidSchedule unless 0 <= epoch <= total and total >= 1.
double cosine_anneal(double lr0, double eta_min, long epoch, long total_epochs);

}  // namespace grhd::ad
