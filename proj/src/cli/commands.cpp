#include "grhd/cli/commands.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "grhd/autodiff/ops.hpp"
#include "grhd/cli/checkpoint.hpp"
#include "grhd/common/error.hpp"
#include "grhd/dataset/attribute_groups.hpp"
#include "grhd/dataset/corpus.hpp"
#include "grhd/metrics/metrics.hpp"
#include "grhd/model/features.hpp"
#include "grhd/model/gradcheck_suite.hpp"

namespace grhd::cli {

namespace fs = std::filesystem;

namespace {

std::size_t parse_size(const std::string& key, const std::string& value) {
  const long long v = parse_int(key, value);
  if (v < 0) throw Error(ErrorCode::InvalidConfig, key + " must be nonnegative");
  return static_cast<std::size_t>(v);
}

std::string precision_name(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }

Precision parse_precision(const std::string& v) {
  if (v == "f32") return Precision::F32;
  if (v == "f64") return Precision::F64;
  throw Error(ErrorCode::InvalidConfig, "precision must be f32 or f64, got '" + v + "'");
}

template <typename F>
auto with_precision(Precision p, F&& f) {
  if (p == Precision::F32) return f(float{});
  return f(double{});
}

std::string percent(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

std::uint64_t file_checksum(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a64(bytes.data(), bytes.size());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

std::vector<dataset::AudioClip> select_split(std::vector<dataset::AudioClip> clips, dataset::Split split) {
  std::vector<dataset::AudioClip> out;
  for (auto& c : clips) {
    if (c.metadata.split != split) continue;
    if (split == dataset::Split::Train && c.metadata.condition == dataset::Condition::Anomaly) {
      throw Error(ErrorCode::ContractViolation,
                  "training clip " + dataset::format_clip_filename(c.metadata) + " is labelled anomaly");
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<dataset::ClipMetadata> metadata_of(const std::vector<dataset::AudioClip>& clips) {
  std::vector<dataset::ClipMetadata> out;
  for (const auto& c : clips) out.push_back(c.metadata);
  return out;
}

Precision checkpoint_precision(const Checkpoint& c) { return parse_precision(c.meta_value("precision")); }

}  // namespace

void RunConfig::apply(const KeyValues& kv) {
  for (const auto& [k, v] : kv) {
    if (k == "frame_size") spectrogram.frame_size = parse_size(k, v);
    else if (k == "hop") spectrogram.hop = parse_size(k, v);
    else if (k == "num_mels") spectrogram.num_mels = parse_size(k, v);
    else if (k == "fmin") spectrogram.fmin = parse_double(k, v);
    else if (k == "fmax") spectrogram.fmax = parse_double(k, v);
    else if (k == "log_floor") spectrogram.log_floor = parse_double(k, v);
    else if (k == "backbone_channels") {
      backbone_channels.clear();
      for (const auto& item : split_list(v)) backbone_channels.push_back(parse_size(k, item));
    } else if (k == "head_channels") head_channels = parse_size(k, v);
    else if (k == "grc_hidden") grc_hidden = parse_size(k, v);
    else if (k == "epochs") train.epochs = static_cast<long>(parse_int(k, v));
    else if (k == "batch_size") train.batch_size = parse_size(k, v);
    else if (k == "lr") train.lr = parse_double(k, v);
    else if (k == "alpha") train.weights.alpha = parse_double(k, v);
    else if (k == "beta") train.weights.beta = parse_double(k, v);
    else if (k == "gamma") train.weights.gamma = parse_double(k, v);
    else if (k == "lambda_gain") train.lambda_gain = parse_double(k, v);
    else if (k == "focal_gamma") train.focal_gamma = parse_double(k, v);
    else if (k == "class_weighting") train.class_weighting = parse_bool(k, v);
    else if (k == "seed") seed = static_cast<std::uint64_t>(parse_size(k, v));
    else if (k == "precision") precision = parse_precision(v);
    else if (k == "scorer") {
      if (v == "nls") scorer = Scorer::Nls;
      else if (v == "knn") scorer = Scorer::Knn;
      else throw Error(ErrorCode::InvalidConfig, "scorer must be nls or knn, got '" + v + "'");
    } else if (k == "p") p = parse_double(k, v);
    else if (k == "knn_k") knn_k = parse_size(k, v);
    else if (dataset::is_synth_key(k)) synth.emplace_back(k, v);
    else throw Error(ErrorCode::InvalidConfig, "unknown config key '" + k + "'");
  }
}

void RunConfig::apply_file(const fs::path& path) { apply(read_key_value_file(path)); }

KeyValues RunConfig::echo() const {
  KeyValues out = to_key_values(spectrogram);
  model::ModelConfig m;
  m.backbone_channels = backbone_channels;
  m.head_channels = head_channels;
  m.grc_hidden = grc_hidden;
  for (auto& kv : model::to_key_values(m)) {
    if (kv.first == "backbone_channels" || kv.first == "head_channels" || kv.first == "grc_hidden") out.push_back(kv);
  }
  auto t = train;
  t.seed = seed.value_or(0);
  for (auto& kv : model::to_key_values(t)) {
    if (kv.first == "seed" && !seed) kv.second = "unset";
    out.push_back(kv);
  }
  out.emplace_back("precision", precision_name(precision));
  out.emplace_back("scorer", scorer == Scorer::Nls ? "nls" : "knn");
  out.emplace_back("p", format_double(p));
  out.emplace_back("knn_k", std::to_string(knn_k));
  return out;
}

int cmd_synth(const RunConfig& config, const fs::path& out_dir, std::ostream& log) {
  dataset::SynthConfig synth;
  dataset::apply_synth_keys(synth, config.synth);
  if (config.seed) synth.seed = *config.seed;
  const auto corpus = dataset::synth_generate(synth);
  dataset::write_corpus(corpus, out_dir);
  log << "wrote " << corpus.entries().size() << " clips to " << out_dir.string() << "\n";
  log << "manifest fnv1a64 " << hex64(file_checksum(out_dir / "manifest.csv")) << "\n";
  return 0;
}

int cmd_train(const RunConfig& config, const fs::path& data_dir, const std::string& machine, const fs::path& out,
              std::ostream& log) {
  if (!config.seed) throw Error(ErrorCode::InvalidConfig, "train needs an explicit seed (--seed or 'seed' key)");
  model::TrainConfig tc = config.train;
  tc.seed = *config.seed;
  tc.validate();
  for (const auto& [k, v] : config.echo()) log << "config " << k << "=" << v << "\n";

  const auto train_clips = select_split(dataset::load_machine_corpus(data_dir, machine), dataset::Split::Train);
  if (train_clips.empty()) {
    throw Error(ErrorCode::NoTrainingData, "no training clips for machine '" + machine + "' in " + data_dir.string());
  }
  const auto metas = metadata_of(train_clips);
  const auto table = dataset::build_attribute_groups(metas);

  dsp::StandardizationStats stats;
  const auto features =
      model::prepare_features(train_clips, config.spectrogram, std::nullopt, &stats, model::preprocessing_threads());
  if (stats.any_degenerate()) log << "warning: some mel bins have zero variance and are zeroed\n";

  model::ModelConfig mc;
  mc.num_samples = features.num_samples;
  mc.frame_size = config.spectrogram.frame_size;
  mc.hop = config.spectrogram.hop;
  mc.num_mels = config.spectrogram.num_mels;
  mc.backbone_channels = config.backbone_channels;
  mc.head_channels = config.head_channels;
  mc.grc_hidden = config.grc_hidden;
  mc.num_sections = table.num_sections();
  mc.num_groups = table.num_groups();
  const auto labels = model::make_labels(features, table);
  const auto counts = table.global_counts();
  log << "training " << machine << ": " << features.size() << " clips, " << mc.num_sections << " sections, "
      << mc.num_groups << " attribute groups\n";

  Checkpoint ckpt;
  ckpt.meta = {{"machine", machine},
               {"precision", precision_name(config.precision)},
               {"sample_rate", format_double(features.sample_rate)}};
  ckpt.spectrogram = to_key_values(config.spectrogram);
  ckpt.training = config.echo();
  ckpt.stats = stats;
  ckpt.groups = table;

  const auto history = with_precision(config.precision, [&](auto tag) {
    using T = decltype(tag);
    model::GrhdModel<T> net(mc, mix_seed(tc.seed, 1));
    auto h = model::train(net, features, labels, counts, tc, [&](const model::LossBreakdown& e) {
      log << "epoch " << e.epoch << "/" << tc.epochs << " lr=" << format_double(e.lr)
          << " lambda=" << format_double(e.lambda_used) << " l_total=" << format_double(e.l_total) << "\n";
    });
    store_model(ckpt, net);
    return h;
  });

  save_checkpoint(out, ckpt);
  model::write_loss_log(fs::path(out.string() + ".loss.csv"), history);
  const auto& last = history.back();
  log << "final epoch=" << last.epoch << " lambda=" << format_double(last.lambda_used)
      << " l_rev=" << format_double(last.l_rev) << " l_sec=" << format_double(last.l_sec)
      << " l_att=" << format_double(last.l_att) << " l_total=" << format_double(last.l_total) << "\n";
  return 0;
}

namespace {

template <typename T>
std::vector<double> score_machine(const RunConfig& config, const Checkpoint& ckpt, model::GrhdModel<T>& net,
                                  const std::vector<dataset::AudioClip>& all_clips,
                                  const model::FeatureSet& test_features) {
  const auto inference = model::infer(net, test_features);
  if (config.scorer == Scorer::Nls) return metrics::score_nls(inference.logits_sec, test_features.metadata, ckpt.groups);

  const auto train_clips = select_split(all_clips, dataset::Split::Train);
  if (train_clips.empty()) throw Error(ErrorCode::EmptyBank, "no training clips to build the k-NN reference bank");
  const auto spec = spectrogram_config_from(ckpt.spectrogram);
  const auto bank_features = model::prepare_features(train_clips, spec, ckpt.stats, nullptr, model::preprocessing_threads());
  const auto bank = model::infer(net, bank_features).z_att;
  std::vector<double> scores;
  for (const auto& z : inference.z_att) scores.push_back(metrics::score_knn(z, bank, config.knn_k));
  return scores;
}

}  // namespace

int cmd_eval(const RunConfig& config, const std::vector<fs::path>& checkpoints, const fs::path& data_dir,
             const fs::path& out, std::ostream& log) {
  if (checkpoints.empty()) throw Error(ErrorCode::InvalidConfig, "eval needs at least one checkpoint");
  if (!(config.p > 0.0 && config.p <= 1.0)) throw Error(ErrorCode::InvalidP, "p must lie in (0, 1]");
  std::vector<metrics::ScoredClip> scored;
  for (const auto& path : checkpoints) {
    const auto ckpt = load_checkpoint(path);
    const auto machine = ckpt.meta_value("machine");
    const auto all_clips = dataset::load_machine_corpus(data_dir, machine);
    const auto test_clips = select_split(all_clips, dataset::Split::Test);
    if (test_clips.empty()) throw Error(ErrorCode::EmptySplit, "no test clips for machine '" + machine + "'");
    const auto spec = spectrogram_config_from(ckpt.spectrogram);
    const auto features = model::prepare_features(test_clips, spec, ckpt.stats, nullptr, model::preprocessing_threads());

    const auto scores = with_precision(checkpoint_precision(ckpt), [&](auto tag) {
      using T = decltype(tag);
      auto net = restore_model<T>(ckpt);
      return score_machine(config, ckpt, net, all_clips, features);
    });
    for (std::size_t i = 0; i < features.size(); ++i) {
      scored.push_back({features.clip_ids[i], features.metadata[i], scores[i]});
    }
    log << "scored " << features.size() << " test clips of " << machine << "\n";
  }

  const auto report = metrics::evaluate(scored, config.p);
  write_text(out, report.to_csv());
  for (const auto& c : report.cells) {
    if (!c.note.empty()) log << "degenerate " << c.machine << " section " << c.section << " " << c.domain << " "
                             << c.metric << ": " << c.note << "\n";
  }
  if (report.skipped_unlabeled > 0) log << "skipped " << report.skipped_unlabeled << " clips without labels\n";
  log << "totals AUC-s=" << percent(report.auc_source) << " AUC-t=" << percent(report.auc_target)
      << " pAUC=" << percent(report.pauc) << " HAUC=" << percent(report.hauc) << "\n";
  return 0;
}

int cmd_embed(const fs::path& checkpoint, const fs::path& data_dir, const fs::path& out, std::ostream& log) {
  const auto ckpt = load_checkpoint(checkpoint);
  const auto machine = ckpt.meta_value("machine");
  const auto clips = dataset::load_machine_corpus(data_dir, machine);
  if (clips.empty()) throw Error(ErrorCode::EmptySplit, "no clips for machine '" + machine + "'");
  const auto features = model::prepare_features(clips, spectrogram_config_from(ckpt.spectrogram), ckpt.stats, nullptr,
                                                model::preprocessing_threads());
  const auto inference = with_precision(checkpoint_precision(ckpt), [&](auto tag) {
    using T = decltype(tag);
    auto net = restore_model<T>(ckpt);
    return model::infer(net, features);
  });

  std::string text = "clip_id,machine,section,domain,split,condition";
  auto header = [&](const char* kind, std::size_t width) {
    for (std::size_t j = 0; j < width; ++j) text += "," + std::string(kind) + "_" + std::to_string(j);
  };
  header("z_rev", inference.z_rev.front().size());
  header("z_sec", inference.z_sec.front().size());
  header("z_att", inference.z_att.front().size());
  text += "\n";
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& m = features.metadata[i];
    text += features.clip_ids[i] + "," + m.machine_type + "," + std::to_string(m.section_id) + "," +
            std::string(dataset::to_string(m.domain)) + "," + std::string(dataset::to_string(m.split)) + "," +
            std::string(dataset::to_string(m.condition));
    for (const auto* rows : {&inference.z_rev, &inference.z_sec, &inference.z_att}) {
      for (const double v : (*rows)[i]) text += "," + format_double(v);
    }
    text += "\n";
  }
  write_text(out, text);
  log << "wrote " << features.size() << " embeddings to " << out.string() << "\n";
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, bool inject_grl_fault, std::ostream& log) {
  ad::set_grl_fault_injection(inject_grl_fault);
  model::SuiteOptions options;
  options.seed = seed;
  const auto report = model::run_gradcheck_suite(options);
  ad::set_grl_fault_injection(false);
  log << report.format();
  std::size_t failed = 0, total = 0;
  for (const auto& c : report.checks) {
    for (const auto& b : c.blocks) failed += b.passed ? 0 : 1;
    total += c.blocks.size();
  }
  for (const auto& t : report.twins) failed += t.passed ? 0 : 1;
  total += report.twins.size();
  log << "summary " << (report.passed() ? "PASS" : "FAIL") << " failed=" << failed << " total=" << total << "\n";
  return report.passed() ? 0 : 1;
}

}  // namespace grhd::cli
