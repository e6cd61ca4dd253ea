#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "grhd/autodiff/gradcheck.hpp"
#include "grhd/model/grhd_model.hpp"

namespace grhd::model {

// Small 64-bit network shape used by the gradient checks.
ModelConfig tiny_config();

// Finite-difference checks for every differentiable op (one report each).
std::vector<ad::GradCheckReport> op_grad_checks(std::uint64_t seed);

// The assembled network under the joint loss, every parameter block probed.
// Heads and GRC are compared with finite differences of L_total itself;
// backbone blocks and the input with finite differences of the same network
// where the reversal is folded into the loss as -lambda alpha L_rev.
std::vector<ad::GradCheckReport> network_grad_checks(std::uint64_t seed);

// Gradients of L_rev w.r.t. backbone parameters with grad_reverse(lambda = c)
// against -c times the same gradients with the reversal replaced by identity.
// max_rel_err is per block: max |g_rev + c g_id| / max |c g_id|.
struct TwinCheck {
  std::uint64_t seed = 0;
  double lambda = 0.0;
  double max_rel_err = 0.0;
  bool passed = false;
};
TwinCheck grl_twin_check(std::uint64_t seed, double tolerance = 1e-9);

struct SuiteOptions {
  std::uint64_t seed = 0;
  std::size_t twin_seeds = 20;
  double tolerance = 1e-6;
  double twin_tolerance = 1e-9;
};

struct SuiteReport {
  std::vector<ad::GradCheckReport> checks;
  std::vector<TwinCheck> twins;

  bool passed() const;
  // CSV: check,block,probes,skipped,max_rel_err,status
  std::string format() const;
};

SuiteReport run_gradcheck_suite(const SuiteOptions& options = {});

}  // namespace grhd::model
