#include "grhd/cli/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "grhd/common/error.hpp"

namespace grhd::cli {

namespace {

constexpr char kMagic[8] = {'G', 'R', 'H', 'D', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  template <typename U>
  void put(U v) {
    static_assert(std::is_integral_v<U>);
    using Unsigned = std::make_unsigned_t<U>;
    auto u = static_cast<Unsigned>(v);
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  void put_f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  void put_f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void put_str(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  void put_kv(const KeyValues& kv) {
    put(static_cast<std::uint32_t>(kv.size()));
    for (const auto& [k, v] : kv) {
      put_str(k);
      put_str(v);
    }
  }

  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    std::make_unsigned_t<U> u = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) u |= static_cast<std::make_unsigned_t<U>>(data_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return static_cast<U>(u);
  }
  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::string get_str() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  KeyValues get_kv() {
    KeyValues kv;
    const auto n = get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i) {
      auto k = get_str();
      kv.emplace_back(std::move(k), get_str());
    }
    return kv;
  }
  bool done() const { return pos_ == size_; }

 private:
  void need(std::size_t n) const {
    if (size_ - pos_ < n) throw Error(ErrorCode::ChecksumMismatch, "checkpoint payload is truncated");
  }

  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string Checkpoint::meta_value(const std::string& key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return v;
  }
  throw Error(ErrorCode::ContractViolation, "checkpoint lacks meta key '" + key + "'");
}

std::vector<std::uint8_t> serialize(const Checkpoint& c) {
  Writer p;
  p.put_kv(c.meta);
  p.put_kv(c.model);
  p.put_kv(c.spectrogram);
  p.put_kv(c.training);

  p.put(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& t : c.tensors) {
    p.put_str(t.name);
    p.put(static_cast<std::uint8_t>(t.dtype));
    p.put(static_cast<std::uint32_t>(t.shape.size()));
    for (const auto d : t.shape) p.put(static_cast<std::uint64_t>(d));
    const std::size_t n = ad::numel(t.shape);
    if ((t.dtype == Dtype::F32 ? t.f32.size() : t.f64.size()) != n) {
      throw Error(ErrorCode::ShapeMismatch, "tensor " + t.name + " holds the wrong number of values");
    }
    if (t.dtype == Dtype::F32) {
      for (const float v : t.f32) p.put_f32(v);
    } else {
      for (const double v : t.f64) p.put_f64(v);
    }
  }

  const auto& s = c.stats;
  p.put(static_cast<std::uint32_t>(s.mean.size()));
  for (const double v : s.mean) p.put_f64(v);
  for (const double v : s.stddev) p.put_f64(v);
  for (const bool d : s.degenerate) p.put(static_cast<std::uint8_t>(d ? 1 : 0));

  p.put(static_cast<std::uint32_t>(c.groups.sections().size()));
  for (const auto& sec : c.groups.sections()) {
    p.put(static_cast<std::int32_t>(sec.section_id));
    p.put(static_cast<std::uint32_t>(sec.keys.size()));
    for (std::size_t g = 0; g < sec.keys.size(); ++g) {
      p.put_str(sec.keys[g]);
      p.put(static_cast<std::uint64_t>(sec.counts[g]));
    }
  }

  Writer out;
  out.bytes.assign(std::begin(kMagic), std::end(kMagic));
  out.put(kCheckpointVersion);
  out.put(static_cast<std::uint64_t>(p.bytes.size()));
  out.bytes.insert(out.bytes.end(), p.bytes.begin(), p.bytes.end());
  out.put(fnv1a64(out.bytes.data(), out.bytes.size()));
  return out.bytes;
}

Checkpoint deserialize(const std::vector<std::uint8_t>& bytes) {
  constexpr std::size_t header = sizeof kMagic + 4 + 8;
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw Error(ErrorCode::UnsupportedFormat, "not a GRHD checkpoint (bad magic)");
  }
  if (bytes.size() < header + 8) throw Error(ErrorCode::ChecksumMismatch, "checkpoint is truncated");
  Reader head(bytes.data() + sizeof kMagic, 12);
  const auto version = head.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::VersionMismatch, "checkpoint version " + std::to_string(version) + ", this build reads " +
                                                std::to_string(kCheckpointVersion));
  }
  const auto payload = head.get<std::uint64_t>();
  if (payload != bytes.size() - header - 8) throw Error(ErrorCode::ChecksumMismatch, "checkpoint length field is wrong");
  Reader tail(bytes.data() + header + payload, 8);
  if (tail.get<std::uint64_t>() != fnv1a64(bytes.data(), header + payload)) {
    throw Error(ErrorCode::ChecksumMismatch, "checkpoint checksum does not match its contents");
  }

  Reader r(bytes.data() + header, payload);
  Checkpoint c;
  c.meta = r.get_kv();
  c.model = r.get_kv();
  c.spectrogram = r.get_kv();
  c.training = r.get_kv();

  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.get_str();
    const auto dtype = r.get<std::uint8_t>();
    if (dtype > 1) throw Error(ErrorCode::UnsupportedFormat, "unknown dtype tag for tensor " + t.name);
    t.dtype = static_cast<Dtype>(dtype);
    const auto rank = r.get<std::uint32_t>();
    for (std::uint32_t d = 0; d < rank; ++d) t.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
    const std::size_t n = ad::numel(t.shape);
    if (n > payload) throw Error(ErrorCode::ChecksumMismatch, "tensor " + t.name + " is larger than the file");
    if (t.dtype == Dtype::F32) {
      t.f32.resize(n);
      for (auto& v : t.f32) v = r.get_f32();
    } else {
      t.f64.resize(n);
      for (auto& v : t.f64) v = r.get_f64();
    }
    c.tensors.push_back(std::move(t));
  }

  const auto mels = r.get<std::uint32_t>();
  c.stats.mean.resize(mels);
  c.stats.stddev.resize(mels);
  c.stats.degenerate.resize(mels);
  for (auto& v : c.stats.mean) v = r.get_f64();
  for (auto& v : c.stats.stddev) v = r.get_f64();
  for (std::uint32_t m = 0; m < mels; ++m) c.stats.degenerate[m] = r.get<std::uint8_t>() != 0;

  std::vector<dataset::SectionGroups> sections(r.get<std::uint32_t>());
  for (auto& s : sections) {
    s.section_id = r.get<std::int32_t>();
    const auto groups = r.get<std::uint32_t>();
    for (std::uint32_t g = 0; g < groups; ++g) {
      s.keys.push_back(r.get_str());
      s.counts.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
    }
  }
  c.groups = dataset::AttributeGroupTable(std::move(sections));
  if (!r.done()) throw Error(ErrorCode::ChecksumMismatch, "trailing bytes in checkpoint payload");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  const auto bytes = serialize(c);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

KeyValues to_key_values(const dsp::SpectrogramConfig& c) {
  return {
      {"frame_size", std::to_string(c.frame_size)},
      {"hop", std::to_string(c.hop)},
      {"num_mels", std::to_string(c.num_mels)},
      {"fmin", format_double(c.fmin)},
      {"fmax", format_double(c.fmax)},
      {"log_floor", format_double(c.log_floor)},
  };
}

dsp::SpectrogramConfig spectrogram_config_from(const KeyValues& kv) {
  dsp::SpectrogramConfig c;
  for (const auto& [k, v] : kv) {
    if (k == "frame_size") c.frame_size = static_cast<std::size_t>(parse_int(k, v));
    else if (k == "hop") c.hop = static_cast<std::size_t>(parse_int(k, v));
    else if (k == "num_mels") c.num_mels = static_cast<std::size_t>(parse_int(k, v));
    else if (k == "fmin") c.fmin = parse_double(k, v);
    else if (k == "fmax") c.fmax = parse_double(k, v);
    else if (k == "log_floor") c.log_floor = parse_double(k, v);
    else throw Error(ErrorCode::InvalidConfig, "unknown spectrogram key '" + k + "'");
  }
  return c;
}

template <typename T>
void store_model(Checkpoint& c, const model::GrhdModel<T>& m) {
  c.model = model::to_key_values(m.config());
  c.tensors.clear();
  auto add = [&](const std::string& name, const ad::Tensor<T>& t) {
    NamedTensor nt;
    nt.name = name;
    nt.shape = t.shape();
    if constexpr (std::is_same_v<T, float>) {
      nt.dtype = Dtype::F32;
      nt.f32.assign(t.data().begin(), t.data().end());
    } else {
      nt.dtype = Dtype::F64;
      nt.f64.assign(t.data().begin(), t.data().end());
    }
    c.tensors.push_back(std::move(nt));
  };
  for (const auto& [name, t] : m.named_parameters()) add(name, t);
  for (const auto& [name, t] : m.named_buffers()) add(name, t);
}

template <typename T>
model::GrhdModel<T> restore_model(const Checkpoint& c) {
  model::GrhdModel<T> m(model::model_config_from(c.model), 0);
  std::vector<std::pair<std::string, ad::Tensor<T>>> targets = m.named_parameters();
  for (auto& b : m.named_buffers()) targets.push_back(b);

  const Dtype want = std::is_same_v<T, float> ? Dtype::F32 : Dtype::F64;
  std::set<std::string> seen;
  for (const auto& nt : c.tensors) {
    auto it = std::find_if(targets.begin(), targets.end(), [&](const auto& p) { return p.first == nt.name; });
    if (it == targets.end()) throw Error(ErrorCode::ContractViolation, "checkpoint tensor " + nt.name + " is not in the model");
    if (nt.shape != it->second.shape() || nt.dtype != want) {
      throw Error(ErrorCode::ShapeMismatch, "checkpoint tensor " + nt.name + " has shape " + ad::shape_string(nt.shape) +
                                                " or dtype incompatible with the model");
    }
    auto dst = it->second.data();
    if constexpr (std::is_same_v<T, float>) {
      std::copy(nt.f32.begin(), nt.f32.end(), dst.begin());
    } else {
      std::copy(nt.f64.begin(), nt.f64.end(), dst.begin());
    }
    seen.insert(nt.name);
  }
  if (seen.size() != targets.size()) throw Error(ErrorCode::ContractViolation, "checkpoint is missing model tensors");
  return m;
}

template void store_model(Checkpoint&, const model::GrhdModel<float>&);
template void store_model(Checkpoint&, const model::GrhdModel<double>&);
template model::GrhdModel<float> restore_model(const Checkpoint&);
template model::GrhdModel<double> restore_model(const Checkpoint&);

}  // namespace grhd::cli
