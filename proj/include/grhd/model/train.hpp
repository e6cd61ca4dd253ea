#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "grhd/dataset/attribute_groups.hpp"
#include "grhd/model/features.hpp"
#include "grhd/model/grhd_model.hpp"

namespace grhd::model {

struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;

  // Throws InvalidConfig for negative or all-zero weights.
  void validate() const;
};

struct LossBreakdown {
  long epoch = 0;  // 1-based in training logs
  double lr = 0.0;
  double lambda_used = 0.0;
  double l_rev = 0.0;
  double l_sec = 0.0;
  double l_att = 0.0;
  double l_total = 0.0;
};

template <typename T>
struct LossTerms {
  Tensor<T> l_rev, l_sec, l_att, l_total;
};

// l_rev = focal(logits_rev, att), l_sec = CE(logits_sec, sec),
// l_att = focal(logits_att, att), l_total = alpha l_rev + beta l_sec + gamma l_att.
template <typename T>
LossTerms<T> grhd_loss(const Tensor<T>& logits_rev, const Tensor<T>& logits_sec, const Tensor<T>& logits_att,
                       std::span<const std::size_t> section_labels, std::span<const std::size_t> group_labels,
                       const LossWeights& weights, T focal_gamma, std::span<const T> class_weights = {});

struct TrainConfig {
  long epochs = 150;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  LossWeights weights;
  double lambda_gain = 10.0;
  double focal_gamma = 2.0;
  bool class_weighting = true;
  std::uint64_t seed = 0;

  void validate() const;
};

KeyValues to_key_values(const TrainConfig& c);

// Section and global attribute-group label per clip. Clips whose section or
// group is missing from the table are NoTrainingData errors.
struct Labels {
  std::vector<std::size_t> section;
  std::vector<std::size_t> group;
};
Labels make_labels(const FeatureSet& f, const dataset::AttributeGroupTable& table);

// Seeded shuffle, forward, joint loss, backward and Adam per minibatch, with
// lambda = lambda_schedule(epoch / epochs) and cosine-annealed lr. Reports the
// sample-weighted epoch means. Throws DivergenceDetected on a non-finite loss.
template <typename T>
std::vector<LossBreakdown> train(GrhdModel<T>& model, const FeatureSet& data, const Labels& labels,
                                 std::span<const std::size_t> group_counts, const TrainConfig& config,
                                 const std::function<void(const LossBreakdown&)>& on_epoch = {});

// CSV: epoch,lr,lambda,l_rev,l_sec,l_att,l_total
std::string format_loss_log(const std::vector<LossBreakdown>& log);
void write_loss_log(const std::filesystem::path& path, const std::vector<LossBreakdown>& log);

// Eval-mode forward without graph recording.
struct Inference {
  std::vector<std::vector<double>> z_rev, z_sec, z_att;  // pooled, one row per clip
  std::vector<std::vector<double>> logits_sec;
};

template <typename T>
Inference infer(GrhdModel<T>& model, const FeatureSet& data, std::size_t batch_size = 64);

}  // namespace grhd::model
