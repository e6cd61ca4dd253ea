#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "grhd/autodiff/tensor.hpp"

namespace grhd::ad {

struct GradCheckOptions {
  double h = 1e-5;
  double tolerance = 1e-6;
  // Relative error is |a - n| / max(|a|, |n|, floor): gradients far below the
  // floor are compared absolutely, since their finite-difference estimate is
  // dominated by rounding in the loss.
  double floor = 1e-3;
  // Probes per block; 0 checks every element.
  std::size_t max_probes = 0;
  std::uint64_t seed = 0;
};

struct BlockReport {
  std::string name;
  std::size_t probes = 0;
  // Probes whose +-h evaluation flips some relu, so the loss is not smooth
  // across the stencil.
  std::size_t skipped = 0;
  double max_rel_err = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::string name;
  std::vector<BlockReport> blocks;

  bool passed() const;
  double max_rel_err() const;
};

double relative_error(double analytic, double numeric, double floor);

// Compares the analytic gradient of loss() with central differences for every
// named block. loss() must rebuild the graph from the current block values on
// each call.
GradCheckReport grad_check(std::string name, const std::function<Tensor<double>()>& loss,
                           const std::vector<std::pair<std::string, Tensor<double>>>& blocks,
                           const GradCheckOptions& options = {});

// Same, but the finite differences are taken on reference() instead. Used for
// gradient reversal, whose backward rule deliberately disagrees with its
// forward: the reference applies an explicit -lambda scaling.
GradCheckReport grad_check(std::string name, const std::function<Tensor<double>()>& loss,
                           const std::function<Tensor<double>()>& reference,
                           const std::vector<std::pair<std::string, Tensor<double>>>& blocks,
                           const GradCheckOptions& options = {});

}  // namespace grhd::ad
