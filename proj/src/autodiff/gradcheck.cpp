#include "grhd/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "grhd/autodiff/ops.hpp"
#include "grhd/common/rng.hpp"

namespace grhd::ad {

bool GradCheckReport::passed() const {
  return !blocks.empty() && std::all_of(blocks.begin(), blocks.end(), [](const auto& b) { return b.passed; });
}

double GradCheckReport::max_rel_err() const {
  double m = 0.0;
  for (const auto& b : blocks) m = std::max(m, b.max_rel_err);
  return m;
}

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

GradCheckReport grad_check(std::string name, const std::function<Tensor<double>()>& loss,
                           const std::vector<std::pair<std::string, Tensor<double>>>& blocks,
                           const GradCheckOptions& options) {
  return grad_check(std::move(name), loss, loss, blocks, options);
}

GradCheckReport grad_check(std::string name, const std::function<Tensor<double>()>& loss,
                           const std::function<Tensor<double>()>& reference,
                           const std::vector<std::pair<std::string, Tensor<double>>>& blocks,
                           const GradCheckOptions& options) {
  GradCheckReport report{std::move(name), {}};

  std::vector<std::uint8_t> baseline;
  {
    for (auto [_, t] : blocks) {
      t.set_requires_grad(true);
      t.zero_grad();
    }
    ReluTrace trace;
    loss().backward();
  }
  {
    NoGradGuard no_grad;
    ReluTrace trace;
    reference();
    baseline = trace.pattern();
  }

  auto probe = [&](Tensor<double>& t, std::size_t i, double delta, bool& smooth) {
    const double saved = t.data()[i];
    t.data()[i] = saved + delta;
    NoGradGuard no_grad;
    ReluTrace trace;
    const double value = reference().item();
    t.data()[i] = saved;
    if (trace.pattern() != baseline) smooth = false;
    return value;
  };

  Rng rng(options.seed);
  for (auto [block_name, t] : blocks) {
    BlockReport b;
    b.name = block_name;
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());

    std::vector<std::size_t> indices(t.numel());
    std::iota(indices.begin(), indices.end(), 0);
    if (options.max_probes > 0 && indices.size() > options.max_probes) {
      rng.shuffle(std::span<std::size_t>(indices));
      indices.resize(options.max_probes);
      std::sort(indices.begin(), indices.end());
    }

    for (const auto i : indices) {
      bool smooth = true;
      const double plus = probe(t, i, options.h, smooth);
      const double minus = probe(t, i, -options.h, smooth);
      if (!smooth) {
        ++b.skipped;
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * options.h);
      b.max_rel_err = std::max(b.max_rel_err, relative_error(analytic[i], numeric, options.floor));
      ++b.probes;
    }
    b.passed = b.probes > 0 && b.max_rel_err < options.tolerance;
    report.blocks.push_back(std::move(b));
  }
  return report;
}

}  // namespace grhd::ad
