#include "grhd/autodiff/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "grhd/common/error.hpp"

namespace grhd::ad {

template <typename T>
void adam_step(const std::vector<Tensor<T>>& params, AdamState<T>& state) {
  if (state.m.empty() && state.step == 0) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), T(0));
      state.v.emplace_back(p.numel(), T(0));
    }
  }
  if (state.m.size() != params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "optimizer state tracks " + std::to_string(state.m.size()) +
                                              " tensors, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto g = params[i].grad();
    if (state.m[i].size() != params[i].numel() || (!g.empty() && g.size() != params[i].numel())) {
      throw Error(ErrorCode::ShapeMismatch, "parameter " + std::to_string(i) + " changed size");
    }
  }

  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
  const T correction1 = static_cast<T>(1.0 - std::pow(c.beta1, t));
  const T correction2 = static_cast<T>(1.0 - std::pow(c.beta2, t));
  const T lr = static_cast<T>(c.lr), eps = static_cast<T>(c.eps);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = Tensor<T>(params[i]).data();
    const auto g = params[i].grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const T gj = g.empty() ? T(0) : g[j];
      m[j] = b1 * m[j] + (T(1) - b1) * gj;
      v[j] = b2 * v[j] + (T(1) - b2) * gj * gj;
      const T m_hat = m[j] / correction1;
      const T v_hat = v[j] / correction2;
      w[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

double cosine_anneal(double lr0, double eta_min, long epoch, long total_epochs) {
  if (total_epochs < 1 || epoch < 0 || epoch > total_epochs) {
    throw Error(ErrorCode::InvalidSchedule,
                "epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(total_epochs) + "]");
  }
  if (epoch == total_epochs) return eta_min;
  return eta_min + 0.5 * (lr0 - eta_min) *
                       (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(total_epochs)));
}

template void adam_step(const std::vector<Tensor<float>>&, AdamState<float>&);
template void adam_step(const std::vector<Tensor<double>>&, AdamState<double>&);

}  // namespace grhd::ad
