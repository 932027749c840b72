#include "snmt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace snmt {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void raw(const char* data, std::size_t n) { bytes_.insert(bytes_.end(), data, data + n); }

  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(bytes_.begin() + static_cast<long>(pos_), bytes_.begin() + static_cast<long>(pos_ + n));
    pos_ += n;
    return s;
  }
  void expect(const char* data, std::size_t n) {
    need(n);
    if (std::memcmp(bytes_.data() + pos_, data, n) != 0) throw std::runtime_error("checkpoint: bad magic header");
    pos_ += n;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("checkpoint: truncated data");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u8(kCheckpointVersion);

  const ModelConfig& c = ck.config;
  w.u32(static_cast<std::uint32_t>(c.source.features.size()));
  for (const auto& f : c.source.features) {
    w.str(f.name);
    w.u64(f.vocab_size);
    w.u64(f.width);
  }
  w.u64(c.hidden);
  w.u64(c.attention);
  w.u64(c.output_width);
  w.f64(c.init_range);
  w.u32(static_cast<std::uint32_t>(c.decoders.size()));
  for (const auto& d : c.decoders) {
    w.str(d.prefix);
    w.u64(d.vocab_size);
    w.u64(d.embed_width);
  }

  w.u32(static_cast<std::uint32_t>(ck.vocabulary_hashes.size()));
  for (const auto& [role, hash] : ck.vocabulary_hashes) {
    w.str(role);
    w.u64(hash);
  }
  w.u32(static_cast<std::uint32_t>(ck.metadata.size()));
  for (const auto& [k, v] : ck.metadata) {
    w.str(k);
    w.str(v);
  }

  w.u32(static_cast<std::uint32_t>(ck.params.size()));
  for (const auto& [name, t] : ck.params) {
    w.str(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t e : t.shape()) w.u64(e);
    for (double v : t.values()) w.f64(v);
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.expect(kCheckpointMagic, sizeof kCheckpointMagic);
  const std::uint8_t version = r.u8();
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

  Checkpoint ck;
  ModelConfig& c = ck.config;
  for (std::uint32_t n = r.u32(); n > 0; --n) {
    FeatureEmbedding f;
    f.name = r.str();
    f.vocab_size = r.u64();
    f.width = r.u64();
    c.source.features.push_back(std::move(f));
  }
  c.hidden = r.u64();
  c.attention = r.u64();
  c.output_width = r.u64();
  c.init_range = r.f64();
  for (std::uint32_t n = r.u32(); n > 0; --n) {
    DecoderSpec d;
    d.prefix = r.str();
    d.vocab_size = r.u64();
    d.embed_width = r.u64();
    c.decoders.push_back(std::move(d));
  }

  for (std::uint32_t n = r.u32(); n > 0; --n) {
    std::string role = r.str();
    ck.vocabulary_hashes[role] = r.u64();
  }
  for (std::uint32_t n = r.u32(); n > 0; --n) {
    std::string k = r.str();
    ck.metadata[k] = r.str();
  }

  for (std::uint32_t n = r.u32(); n > 0; --n) {
    std::string name = r.str();
    const std::uint8_t rank = r.u8();
    std::vector<std::size_t> shape(rank);
    std::size_t count = 1;
    for (auto& e : shape) {
      e = r.u64();
      count *= e;
    }
    std::vector<double> values(count);
    for (auto& v : values) v = r.f64();
    ck.params.set(name, Tensor(std::move(shape), std::move(values)));
  }
  if (!r.done()) throw std::runtime_error("checkpoint: trailing bytes");

  // Shapes must agree with what the stored config implies.
  for (const auto& [name, shape] : parameter_shapes(c)) {
    if (!ck.params.contains(name)) throw std::runtime_error("checkpoint: missing parameter '" + name + "'");
    if (ck.params.at(name).shape() != shape)
      throw std::runtime_error("checkpoint: parameter '" + name + "' has the wrong shape");
  }
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  const auto bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("error writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace snmt
