#include "grhd/model/train.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "grhd/autodiff/optim.hpp"
#include "grhd/common/error.hpp"

namespace grhd::model {

void LossWeights::validate() const {
  if (!(alpha >= 0.0 && beta >= 0.0 && gamma >= 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "loss weights must be nonnegative");
  }
  if (alpha == 0.0 && beta == 0.0 && gamma == 0.0) {
    throw Error(ErrorCode::InvalidConfig, "alpha, beta and gamma cannot all be zero");
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorCode::InvalidConfig, "epochs must be at least 1");
  if (batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch_size must be at least 1");
  if (!(lr >= 0.0)) throw Error(ErrorCode::InvalidConfig, "lr must be nonnegative");
  if (!(lambda_gain > 0.0)) throw Error(ErrorCode::InvalidConfig, "lambda_gain must be positive");
  if (!(focal_gamma >= 0.0)) throw Error(ErrorCode::InvalidConfig, "focal_gamma must be nonnegative");
  weights.validate();
}

namespace {

std::string number(double v) { return format_double(v); }

}  // namespace

KeyValues to_key_values(const TrainConfig& c) {
  return {
      {"epochs", std::to_string(c.epochs)},
      {"batch_size", std::to_string(c.batch_size)},
      {"lr", number(c.lr)},
      {"alpha", number(c.weights.alpha)},
      {"beta", number(c.weights.beta)},
      {"gamma", number(c.weights.gamma)},
      {"lambda_gain", number(c.lambda_gain)},
      {"focal_gamma", number(c.focal_gamma)},
      {"class_weighting", c.class_weighting ? "true" : "false"},
      {"seed", std::to_string(c.seed)},
  };
}

template <typename T>
LossTerms<T> grhd_loss(const Tensor<T>& logits_rev, const Tensor<T>& logits_sec, const Tensor<T>& logits_att,
                       std::span<const std::size_t> section_labels, std::span<const std::size_t> group_labels,
                       const LossWeights& weights, T focal_gamma, std::span<const T> class_weights) {
  weights.validate();
  LossTerms<T> t;
  t.l_rev = ad::focal_loss(logits_rev, group_labels, focal_gamma, class_weights);
  t.l_sec = ad::cross_entropy(logits_sec, section_labels);
  t.l_att = ad::focal_loss(logits_att, group_labels, focal_gamma, class_weights);
  t.l_total = ad::add(ad::add(ad::scale(t.l_rev, static_cast<T>(weights.alpha)),
                              ad::scale(t.l_sec, static_cast<T>(weights.beta))),
                      ad::scale(t.l_att, static_cast<T>(weights.gamma)));
  return t;
}

Labels make_labels(const FeatureSet& f, const dataset::AttributeGroupTable& table) {
  Labels l;
  for (const auto& m : f.metadata) {
    const auto s = table.section_class(m.section_id);
    const auto g = table.global_group(m);
    if (!s || !g) {
      throw Error(ErrorCode::NoTrainingData, "clip " + dataset::format_clip_filename(m) +
                                                 " has a section or attribute group without training data");
    }
    l.section.push_back(*s);
    l.group.push_back(*g);
  }
  return l;
}

template <typename T>
std::vector<LossBreakdown> train(GrhdModel<T>& model, const FeatureSet& data, const Labels& labels,
                                 std::span<const std::size_t> group_counts, const TrainConfig& config,
                                 const std::function<void(const LossBreakdown&)>& on_epoch) {
  config.validate();
  if (data.size() == 0) throw Error(ErrorCode::NoTrainingData, "empty training set");
  if (labels.section.size() != data.size() || labels.group.size() != data.size()) {
    throw Error(ErrorCode::ShapeMismatch, "labels do not match the training set");
  }
  if (group_counts.size() != model.config().num_groups) {
    throw Error(ErrorCode::ShapeMismatch, "group counts do not match the model's attribute groups");
  }

  std::vector<T> class_weights;
  if (config.class_weighting) {
    for (const double w : ad::inverse_frequency_weights(group_counts)) class_weights.push_back(static_cast<T>(w));
  }

  const auto params = model.parameters();
  ad::AdamState<T> adam;
  adam.config.lr = config.lr;

  Rng rng(mix_seed(config.seed, 0x5eed));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<LossBreakdown> log;
  for (long epoch = 0; epoch < config.epochs; ++epoch) {
    LossBreakdown e;
    e.epoch = epoch + 1;
    e.lr = ad::cosine_anneal(config.lr, 0.0, epoch, config.epochs);
    e.lambda_used = lambda_schedule(static_cast<double>(epoch) / static_cast<double>(config.epochs), config.lambda_gain);
    adam.config.lr = e.lr;
    rng.shuffle(std::span<std::size_t>(order));

    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      std::vector<std::size_t> sec, grp;
      for (const auto i : idx) {
        sec.push_back(labels.section[i]);
        grp.push_back(labels.group[i]);
      }

      model.zero_grad();
      const auto out = model.forward(waveform_batch<T>(data, idx), logmel_batch<T>(data, idx),
                                     static_cast<T>(e.lambda_used), true);
      const auto loss = grhd_loss<T>(out.logits_rev, out.logits_sec, out.logits_att, sec, grp, config.weights,
                                     static_cast<T>(config.focal_gamma), class_weights);
      const double total = loss.l_total.item();
      if (!std::isfinite(total)) {
        throw Error(ErrorCode::DivergenceDetected,
                    "non-finite l_total at epoch " + std::to_string(e.epoch) + " (l_rev=" + number(loss.l_rev.item()) +
                        " l_sec=" + number(loss.l_sec.item()) + " l_att=" + number(loss.l_att.item()) + ")");
      }
      loss.l_total.backward();
      ad::adam_step(params, adam);

      const double n = static_cast<double>(idx.size());
      e.l_rev += n * loss.l_rev.item();
      e.l_sec += n * loss.l_sec.item();
      e.l_att += n * loss.l_att.item();
    }
    const double count = static_cast<double>(data.size());
    e.l_rev /= count;
    e.l_sec /= count;
    e.l_att /= count;
    e.l_total = config.weights.alpha * e.l_rev + config.weights.beta * e.l_sec + config.weights.gamma * e.l_att;
    log.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  return log;
}

std::string format_loss_log(const std::vector<LossBreakdown>& log) {
  std::string out = "epoch,lr,lambda,l_rev,l_sec,l_att,l_total\n";
  for (const auto& e : log) {
    out += std::to_string(e.epoch) + "," + number(e.lr) + "," + number(e.lambda_used) + "," + number(e.l_rev) + "," +
           number(e.l_sec) + "," + number(e.l_att) + "," + number(e.l_total) + "\n";
  }
  return out;
}

void write_loss_log(const std::filesystem::path& path, const std::vector<LossBreakdown>& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << format_loss_log(log);
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

template <typename T>
Inference infer(GrhdModel<T>& model, const FeatureSet& data, std::size_t batch_size) {
  ad::NoGradGuard no_grad;
  Inference r;
  auto rows = [](const Tensor<T>& t, std::vector<std::vector<double>>& dst) {
    const std::size_t n = t.dim(0), c = t.numel() / n;
    for (std::size_t i = 0; i < n; ++i) dst.emplace_back(t.data().begin() + i * c, t.data().begin() + (i + 1) * c);
  };
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    idx.clear();
    for (std::size_t i = begin; i < std::min(data.size(), begin + batch_size); ++i) idx.push_back(i);
    const auto out = model.forward(waveform_batch<T>(data, idx), logmel_batch<T>(data, idx), T(0), false);
    rows(ad::global_avg_pool(out.z_rev), r.z_rev);
    rows(ad::global_avg_pool(out.z_sec), r.z_sec);
    rows(ad::global_avg_pool(out.z_att), r.z_att);
    rows(out.logits_sec, r.logits_sec);
  }
  return r;
}

#define GRHD_INSTANTIATE_TRAIN(T)                                                                               \
  template LossTerms<T> grhd_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                        \
                                  std::span<const std::size_t>, std::span<const std::size_t>, const LossWeights&, \
                                  T, std::span<const T>);                                                      \
  template std::vector<LossBreakdown> train(GrhdModel<T>&, const FeatureSet&, const Labels&,                   \
                                            std::span<const std::size_t>, const TrainConfig&,                  \
                                            const std::function<void(const LossBreakdown&)>&);                 \
  template Inference infer(GrhdModel<T>&, const FeatureSet&, std::size_t);

GRHD_INSTANTIATE_TRAIN(float)
GRHD_INSTANTIATE_TRAIN(double)

#undef GRHD_INSTANTIATE_TRAIN

}  // namespace grhd::model
