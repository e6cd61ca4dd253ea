#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "grhd/cli/checkpoint.hpp"
#include "grhd/model/gradcheck_suite.hpp"
#include "test_util.hpp"

using namespace grhd;
using namespace grhd::cli;

namespace {

Checkpoint sample_checkpoint() {
  Checkpoint c;
  c.meta = {{"machine", "ToyCar"}, {"precision", "f32"}};
  c.spectrogram = to_key_values(dsp::SpectrogramConfig{});
  c.training = {{"epochs", "3"}};
  NamedTensor a;
  a.name = "w";
  a.shape = {2, 3};
  a.f32 = {1.5f, -0.0f, std::numeric_limits<float>::denorm_min(), 3.4e38f, -1e-7f, 7.0f};
  NamedTensor b;
  b.name = "v";
  b.shape = {2};
  b.dtype = Dtype::F64;
  b.f64 = {0.1, -std::numeric_limits<double>::infinity()};
  c.tensors = {a, b};
  c.stats.mean = {0.25, -3.0};
  c.stats.stddev = {1.0, 0.5};
  c.stats.degenerate = {true, false};
  std::vector<dataset::SectionGroups> sections(1);
  sections[0].section_id = 4;
  sections[0].keys = {"spd=28V", "spd=31V"};
  sections[0].counts = {10, 20};
  c.groups = dataset::AttributeGroupTable(sections);
  return c;
}

std::uint64_t read_le64(const std::vector<std::uint8_t>& b, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[at + static_cast<std::size_t>(i)];
  return v;
}

void rewrite_checksum(std::vector<std::uint8_t>& b) {
  const auto sum = fnv1a64(b.data(), b.size() - 8);
  for (int i = 0; i < 8; ++i) b[b.size() - 8 + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(sum >> (8 * i));
}

}  // namespace

TEST(Fnv1a64, ReferenceVectors) {
  const auto h = [](const char* s) { return fnv1a64(reinterpret_cast<const std::uint8_t*>(s), std::strlen(s)); };
  EXPECT_EQ(h(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(h("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(h("foobar"), 0x85944171f73967e8ull);
}

TEST(Checkpoint, HeaderLayout) {
  const auto bytes = serialize(sample_checkpoint());
  ASSERT_GE(bytes.size(), 28u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "GRHDCKPT");
  EXPECT_EQ(bytes[8], kCheckpointVersion);
  EXPECT_EQ(bytes[9] | bytes[10] | bytes[11], 0);
  EXPECT_EQ(read_le64(bytes, 12), bytes.size() - 28);
  EXPECT_EQ(read_le64(bytes, bytes.size() - 8), fnv1a64(bytes.data(), bytes.size() - 8));
  // The first meta block starts with its entry count and the first key.
  EXPECT_EQ(bytes[20], 2);
  EXPECT_EQ(bytes[24], 7);
  EXPECT_EQ(std::string(bytes.begin() + 28, bytes.begin() + 35), "machine");
}

TEST(Checkpoint, BitExactRoundTrip) {
  const auto c = sample_checkpoint();
  const auto d = deserialize(serialize(c));
  EXPECT_EQ(d.meta, c.meta);
  EXPECT_EQ(d.spectrogram, c.spectrogram);
  EXPECT_EQ(d.training, c.training);
  ASSERT_EQ(d.tensors.size(), 2u);
  for (std::size_t i = 0; i < c.tensors[0].f32.size(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint32_t>(d.tensors[0].f32[i]), std::bit_cast<std::uint32_t>(c.tensors[0].f32[i]));
  }
  EXPECT_EQ(d.tensors[1].dtype, Dtype::F64);
  EXPECT_EQ(d.tensors[1].shape, c.tensors[1].shape);
  EXPECT_EQ(d.tensors[1].f64, c.tensors[1].f64);
  EXPECT_EQ(d.stats, c.stats);
  EXPECT_EQ(d.groups, c.groups);
  EXPECT_EQ(serialize(d), serialize(c));
  EXPECT_EQ(d.meta_value("machine"), "ToyCar");
}

TEST(Checkpoint, ModelRoundTripGivesIdenticalOutputs) {
  const auto config = model::tiny_config();
  for (const bool f64 : {false, true}) {
    Checkpoint c;
    std::vector<double> before, after;
    Rng rng(1);
    std::vector<double> wave(2 * config.num_samples), lm(2 * config.num_mels * config.num_frames());
    for (auto& v : wave) v = rng.uniform(-1, 1);
    for (auto& v : lm) v = rng.uniform(-1, 1);
    auto run = [&]<typename T>(model::GrhdModel<T>& m, std::vector<double>& out) {
      const auto w = ad::Tensor<T>::from_data({2, 1, config.num_samples}, std::vector<T>(wave.begin(), wave.end()));
      const auto x = ad::Tensor<T>::from_data({2, config.num_mels, config.num_frames()}, std::vector<T>(lm.begin(), lm.end()));
      const auto o = m.forward(w, x, T(0), false);
      out.assign(o.logits_att.data().begin(), o.logits_att.data().end());
    };
    if (f64) {
      model::GrhdModel<double> m(config, 9);
      m.forward(ad::Tensor<double>::zeros({2, 1, config.num_samples}),
                ad::Tensor<double>::zeros({2, config.num_mels, config.num_frames()}), 0.0, true);  // moves BN stats
      store_model(c, m);
      run(m, before);
      auto r = restore_model<double>(deserialize(serialize(c)));
      run(r, after);
      EXPECT_GRHD_ERROR(restore_model<float>(c), ShapeMismatch);
    } else {
      model::GrhdModel<float> m(config, 9);
      store_model(c, m);
      run(m, before);
      auto r = restore_model<float>(deserialize(serialize(c)));
      run(r, after);
    }
    EXPECT_EQ(before, after);
  }
}

TEST(Checkpoint, MissingOrExtraTensorsRejected) {
  const auto config = model::tiny_config();
  model::GrhdModel<double> m(config, 1);
  Checkpoint c;
  store_model(c, m);
  auto missing = c;
  missing.tensors.pop_back();
  EXPECT_GRHD_ERROR(restore_model<double>(missing), ContractViolation);
  auto extra = c;
  extra.tensors.push_back(extra.tensors.front());
  extra.tensors.back().name = "nope";
  EXPECT_GRHD_ERROR(restore_model<double>(extra), ContractViolation);
}

TEST(Checkpoint, CorruptionDetected) {
  const auto good = serialize(sample_checkpoint());

  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_GRHD_ERROR(deserialize(bad_magic), UnsupportedFormat);
  EXPECT_GRHD_ERROR(deserialize({}), UnsupportedFormat);

  auto version = good;
  version[8] = 2;
  EXPECT_GRHD_ERROR(deserialize(version), VersionMismatch);

  for (std::size_t at = 20; at < good.size(); at += 7) {
    auto flipped = good;
    flipped[at] ^= 0x10;
    EXPECT_GRHD_ERROR(deserialize(flipped), ChecksumMismatch);
  }
  for (const std::size_t keep : {std::size_t{10}, std::size_t{27}, good.size() / 2, good.size() - 1}) {
    EXPECT_GRHD_ERROR(deserialize(std::vector<std::uint8_t>(good.begin(), good.begin() + static_cast<long>(keep))),
                      ChecksumMismatch);
  }

  // A consistent checksum over a bad dtype tag still fails on the tag.
  auto tag = good;
  const std::string name = "w";
  for (std::size_t i = 28; i + 5 < tag.size(); ++i) {
    if (tag[i] == 1 && tag[i + 1] == 0 && tag[i + 2] == 0 && tag[i + 3] == 0 && tag[i + 4] == 'w') {
      tag[i + 5] = 7;
      break;
    }
  }
  rewrite_checksum(tag);
  EXPECT_GRHD_ERROR(deserialize(tag), UnsupportedFormat);
}

TEST(Checkpoint, FileIo) {
  grhd::testing::TempDir dir("ckpt");
  const auto path = dir / "a.ckpt";
  save_checkpoint(path, sample_checkpoint());
  const auto bytes = serialize(sample_checkpoint());
  EXPECT_EQ(grhd::testing::read_bytes(path), std::vector<char>(bytes.begin(), bytes.end()));
  EXPECT_EQ(load_checkpoint(path).groups, sample_checkpoint().groups);
  EXPECT_GRHD_ERROR(load_checkpoint(dir / "missing.ckpt"), IoError);
  EXPECT_GRHD_ERROR(save_checkpoint(dir / "no" / "such" / "dir.ckpt", sample_checkpoint()), IoError);
}

TEST(Checkpoint, SpectrogramKeys) {
  dsp::SpectrogramConfig s;
  s.hop = 256;
  s.fmax = 7000.5;
  const auto r = spectrogram_config_from(to_key_values(s));
  EXPECT_EQ(r.hop, 256u);
  EXPECT_EQ(r.fmax, 7000.5);
  EXPECT_GRHD_ERROR(spectrogram_config_from({{"hopp", "1"}}), InvalidConfig);
}
