#include "grhd/model/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "grhd/autodiff/ops.hpp"
#include "grhd/common/rng.hpp"
#include "grhd/model/train.hpp"

namespace grhd::model {

namespace {

using TD = Tensor<double>;
using Blocks = std::vector<std::pair<std::string, TD>>;

TD random_tensor(ad::Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(ad::numel(shape));
  for (auto& x : v) x = scale * rng.normal();
  return TD::from_data(std::move(shape), std::move(v), true);
}

// Keeps entries away from zero so relu probes do not sit on the kink.
TD random_away_from_zero(ad::Shape shape, Rng& rng) {
  auto t = random_tensor(std::move(shape), rng);
  for (auto& x : t.data()) x += x >= 0.0 ? 0.1 : -0.1;
  return t;
}

TD constant_like(const TD& t, Rng& rng) {
  std::vector<double> v(t.numel());
  for (auto& x : v) x = rng.normal();
  return TD::from_data(t.shape(), std::move(v));
}

// Projects a tensor-valued op onto a random direction so one scalar loss
// exercises every output element.
ad::GradCheckReport check_op(const std::string& name, const std::function<TD()>& op, const Blocks& blocks, Rng& rng,
                             const ad::GradCheckOptions& options) {
  TD r;
  {
    ad::NoGradGuard no_grad;
    r = constant_like(op(), rng);
  }
  return ad::grad_check(name, [op, r] { return ad::sum(ad::mul(op(), r)); }, blocks, options);
}

std::vector<std::size_t> random_labels(std::size_t n, std::size_t classes, Rng& rng) {
  std::vector<std::size_t> out(n);
  for (auto& l : out) l = static_cast<std::size_t>(rng.below(classes));
  return out;
}

struct TinyBatch {
  TD waveform;
  TD logmel;
  std::vector<std::size_t> sections;
  std::vector<std::size_t> groups;
  std::vector<double> class_weights;
};

TinyBatch tiny_batch(const ModelConfig& c, std::size_t n, Rng& rng) {
  TinyBatch b;
  b.waveform = random_tensor({n, 1, c.num_samples}, rng, 0.3);
  b.logmel = random_tensor({n, c.num_mels, c.num_frames()}, rng);
  b.waveform.set_requires_grad(false);
  b.logmel.set_requires_grad(false);
  b.sections = random_labels(n, c.num_sections, rng);
  b.groups = random_labels(n, c.num_groups, rng);
  for (std::size_t g = 0; g < c.num_groups; ++g) b.class_weights.push_back(0.5 + rng.uniform());
  return b;
}

}  // namespace

ModelConfig tiny_config() {
  ModelConfig c;
  c.num_samples = 320;
  c.frame_size = 64;
  c.hop = 32;
  c.num_mels = 8;
  c.backbone_channels = {4, 6, 8};
  c.head_channels = 6;
  c.grc_hidden = 5;
  c.num_sections = 2;
  c.num_groups = 3;
  return c;
}

std::vector<ad::GradCheckReport> op_grad_checks(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 1));
  ad::GradCheckOptions opt;
  opt.seed = seed;
  std::vector<ad::GradCheckReport> out;

  {
    auto a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
    out.push_back(check_op("add", [=] { return ad::add(a, b); }, {{"a", a}, {"b", b}}, rng, opt));
    out.push_back(check_op("mul", [=] { return ad::mul(a, b); }, {{"a", a}, {"b", b}}, rng, opt));
    out.push_back(check_op("scale", [=] { return ad::scale(a, 1.7); }, {{"a", a}}, rng, opt));
    out.push_back(check_op("sum", [=] { return ad::sum(a); }, {{"a", a}}, rng, opt));
    out.push_back(check_op("mean", [=] { return ad::mean(a); }, {{"a", a}}, rng, opt));
  }
  {
    auto a = random_tensor({2, 3, 4}, rng);
    out.push_back(check_op("reshape", [=] { return ad::reshape(a, {6, 4}); }, {{"x", a}}, rng, opt));
    auto b = random_tensor({2, 1, 4}, rng);
    out.push_back(check_op("concat", [=] { return ad::concat(std::vector<TD>{a, b}, 1); }, {{"a", a}, {"b", b}}, rng,
                           opt));
  }
  {
    auto x = random_away_from_zero({4, 6}, rng);
    out.push_back(check_op("relu", [=] { return ad::relu(x); }, {{"x", x}}, rng, opt));
  }
  {
    auto x = random_tensor({4, 5}, rng), w = random_tensor({3, 5}, rng), b = random_tensor({3}, rng);
    out.push_back(check_op("dense", [=] { return ad::linear(x, w, std::optional(b)); },
                           {{"x", x}, {"weight", w}, {"bias", b}}, rng, opt));
  }
  {
    auto x = random_tensor({2, 3, 11}, rng), w = random_tensor({4, 3, 3}, rng), b = random_tensor({4}, rng);
    out.push_back(check_op("conv1d", [=] { return ad::conv1d(x, w, std::optional(b), 2, 1); },
                           {{"x", x}, {"weight", w}, {"bias", b}}, rng, opt));
  }
  {
    auto x = random_tensor({2, 3, 7, 6}, rng), w = random_tensor({4, 3, 3, 2}, rng), b = random_tensor({4}, rng);
    out.push_back(check_op("conv2d", [=] { return ad::conv2d(x, w, std::optional(b), ad::Conv2dOptions{2, 1, 1, 0}); },
                           {{"x", x}, {"weight", w}, {"bias", b}}, rng, opt));
  }
  {
    auto x = random_tensor({3, 4, 5}, rng), g = random_tensor({4}, rng), b = random_tensor({4}, rng);
    ad::BatchNormBuffers<double> buf{TD::zeros({4}), TD::full({4}, 1.0)};
    out.push_back(check_op("batch_norm_train", [=]() mutable { return ad::batch_norm(x, g, b, buf, true); },
                           {{"x", x}, {"gamma", g}, {"beta", b}}, rng, opt));
    ad::BatchNormBuffers<double> eval_buf{constant_like(g, rng), TD::full({4}, 1.7)};
    out.push_back(check_op("batch_norm_eval", [=]() mutable { return ad::batch_norm(x, g, b, eval_buf, false); },
                           {{"x", x}, {"gamma", g}, {"beta", b}}, rng, opt));
  }
  {
    auto x = random_tensor({2, 3, 4, 2}, rng);
    out.push_back(check_op("global_avg_pool", [=] { return ad::global_avg_pool(x); }, {{"x", x}}, rng, opt));
  }
  {
    auto x = random_tensor({3, 5}, rng);
    out.push_back(check_op("softmax", [=] { return ad::softmax(x); }, {{"x", x}}, rng, opt));
    out.push_back(check_op("log_softmax", [=] { return ad::log_softmax(x); }, {{"x", x}}, rng, opt));
  }
  {
    auto x = random_tensor({4, 5}, rng, 2.0);
    const auto labels = random_labels(4, 5, rng);
    out.push_back(ad::grad_check("cross_entropy", [=] { return ad::cross_entropy<double>(x, labels); }, {{"logits", x}},
                                 opt));
    std::vector<double> w{0.5, 1.5, 1.0, 0.7, 1.3};
    out.push_back(ad::grad_check("focal_loss", [=] { return ad::focal_loss<double>(x, labels, 2.0, w); },
                                 {{"logits", x}}, opt));
    out.push_back(ad::grad_check("focal_loss_gamma0.5", [=] { return ad::focal_loss<double>(x, labels, 0.5); },
                                 {{"logits", x}}, opt));
  }
  {
    auto x = random_tensor({3, 4}, rng);
    TD r;
    {
      ad::NoGradGuard no_grad;
      r = constant_like(x, rng);
    }
    const double lambda = 0.3;
    out.push_back(ad::grad_check(
        "grad_reverse", [=] { return ad::sum(ad::mul(ad::grad_reverse(x, lambda), r)); },
        [=] { return ad::sum(ad::mul(ad::scale(x, -lambda), r)); }, {{"x", x}}, opt));
  }
  {
    // Two-layer dense network.
    auto x = random_tensor({5, 4}, rng), w1 = random_tensor({6, 4}, rng), b1 = random_tensor({6}, rng);
    auto w2 = random_tensor({3, 6}, rng), b2 = random_tensor({3}, rng);
    const auto labels = random_labels(5, 3, rng);
    out.push_back(ad::grad_check(
        "dense2_net",
        [=] {
          const auto h = ad::relu(ad::linear(x, w1, std::optional(b1)));
          return ad::cross_entropy<double>(ad::linear(h, w2, std::optional(b2)), labels);
        },
        {{"x", x}, {"w1", w1}, {"b1", b1}, {"w2", w2}, {"b2", b2}}, opt));
  }
  {
    // Shared subexpression: a feeds the graph twice.
    auto a = random_tensor({3, 3}, rng);
    out.push_back(check_op("fan_out", [=] { return ad::mul(ad::add(a, a), ad::relu(a)); }, {{"a", a}}, rng, opt));
  }
  return out;
}

std::vector<ad::GradCheckReport> network_grad_checks(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 2));
  const auto config = tiny_config();
  auto model = std::make_shared<GrhdModel<double>>(config, mix_seed(seed, 3));
  const auto batch = std::make_shared<TinyBatch>(tiny_batch(config, 3, rng));
  auto logmel = batch->logmel;
  logmel.set_requires_grad(true);
  const LossWeights weights{0.7, 1.1, 0.9};
  const double lambda = 0.3;

  auto loss = [=](GrlMode mode) {
    const auto out = model->forward(batch->waveform, logmel, lambda, true, mode);
    return grhd_loss<double>(out.logits_rev, out.logits_sec, out.logits_att, batch->sections, batch->groups, weights,
                             2.0, batch->class_weights);
  };
  const auto analytic = [=] { return loss(GrlMode::Reverse).l_total; };
  // Upstream of the reversal the analytic gradient is that of
  // beta L_sec + gamma L_att - lambda alpha L_rev.
  const auto reversed_reference = [=] {
    const auto t = loss(GrlMode::Identity);
    return ad::add(ad::add(ad::scale(t.l_sec, weights.beta), ad::scale(t.l_att, weights.gamma)),
                   ad::scale(t.l_rev, -lambda * weights.alpha));
  };

  Blocks upstream, downstream;
  for (auto& [name, t] : model->named_parameters()) {
    (name.rfind("backbone.", 0) == 0 ? upstream : downstream).emplace_back(name, t);
  }
  upstream.emplace_back("input.logmel", logmel);

  ad::GradCheckOptions opt;
  opt.seed = seed;
  opt.max_probes = 8;
  return {ad::grad_check("grhd_network_heads", analytic, downstream, opt),
          ad::grad_check("grhd_network_backbone", analytic, reversed_reference, upstream, opt)};
}

TwinCheck grl_twin_check(std::uint64_t seed, double tolerance) {
  Rng rng(mix_seed(seed, 4));
  const auto config = tiny_config();
  GrhdModel<double> model(config, mix_seed(seed, 5));
  const auto batch = tiny_batch(config, 4, rng);
  const double c = 0.05 + 0.9 * rng.uniform();

  auto backbone_grads = [&](GrlMode mode, double lambda) {
    model.zero_grad();
    const auto out = model.forward(batch.waveform, batch.logmel, lambda, true, mode);
    ad::focal_loss<double>(out.logits_rev, batch.groups, 2.0, batch.class_weights).backward();
    std::vector<std::vector<double>> grads;
    for (const auto& [name, t] : model.named_parameters()) {
      if (name.rfind("backbone.", 0) == 0) grads.emplace_back(t.grad().begin(), t.grad().end());
    }
    return grads;
  };
  const auto reversed = backbone_grads(GrlMode::Reverse, c);
  const auto identity = backbone_grads(GrlMode::Identity, 1.0);

  TwinCheck r;
  r.seed = seed;
  r.lambda = c;
  bool nonzero = true;
  for (std::size_t b = 0; b < reversed.size(); ++b) {
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < reversed[b].size(); ++i) {
      const double expected = -c * identity[b][i];
      diff = std::max(diff, std::abs(reversed[b][i] - expected));
      scale = std::max(scale, std::abs(expected));
    }
    if (scale == 0.0) {
      nonzero = false;
      continue;
    }
    r.max_rel_err = std::max(r.max_rel_err, diff / scale);
  }
  r.passed = nonzero && r.max_rel_err < tolerance;
  return r;
}

bool SuiteReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed(); }) &&
         std::all_of(twins.begin(), twins.end(), [](const auto& t) { return t.passed; });
}

std::string SuiteReport::format() const {
  std::string out = "check,block,probes,skipped,max_rel_err,status\n";
  char buf[256];
  for (const auto& c : checks) {
    for (const auto& b : c.blocks) {
      std::snprintf(buf, sizeof buf, "%s,%s,%zu,%zu,%.3e,%s\n", c.name.c_str(), b.name.c_str(), b.probes, b.skipped,
                    b.max_rel_err, b.passed ? "PASS" : "FAIL");
      out += buf;
    }
  }
  for (const auto& t : twins) {
    std::snprintf(buf, sizeof buf, "grl_twin,seed=%llu lambda=%.6f,-,-,%.3e,%s\n",
                  static_cast<unsigned long long>(t.seed), t.lambda, t.max_rel_err, t.passed ? "PASS" : "FAIL");
    out += buf;
  }
  return out;
}

SuiteReport run_gradcheck_suite(const SuiteOptions& options) {
  SuiteReport r;
  r.checks = op_grad_checks(options.seed);
  for (auto& c : network_grad_checks(options.seed)) r.checks.push_back(std::move(c));
  for (auto& c : r.checks) {
    for (auto& b : c.blocks) b.passed = b.probes > 0 && b.max_rel_err < options.tolerance;
  }
  for (std::size_t i = 0; i < options.twin_seeds; ++i) {
    r.twins.push_back(grl_twin_check(mix_seed(options.seed, 100 + i), options.twin_tolerance));
  }
  return r;
}

}  // namespace grhd::model
