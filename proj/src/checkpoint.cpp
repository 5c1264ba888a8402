// Checkpoint container, all integers and reals little-endian:
//
//   char[8]  "FFUSECKP"
//   u32      version (1)
//   -- TrainConfig --
//   u32      number of alpha levels, then f64 each
//   f64      epsilon, q, gamma, learning_rate
//   u32      batch_size, steps
//   u64      seed
//   u32      crop_size
//   u8       norm (0 = L1, 1 = L2)
//   -- metadata --
//   u32      entry count, then per entry: u32 key length, key bytes,
//            u32 value length, value bytes
//   -- tensors --
//   u32      tensor count, then per tensor: u32 name length, name bytes,
//            u32 rank (4), u32 dims[rank] (N, C, H, W), f64 payload[prod(dims)]

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "flowfuse/autodiff.hpp"
#include "flowfuse/errors.hpp"

namespace flowfuse::nn {

namespace {

constexpr std::array<char, 8> kMagic{'F', 'F', 'U', 'S', 'E', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  template <typename T>
  void put(T value) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    buf_.insert(buf_.end(), bytes, bytes + sizeof(T));
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void put_raw(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  const std::vector<unsigned char>& bytes() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<unsigned char> buf) : buf_(std::move(buf)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, buf_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) {
      throw FormatError(FormatError::Kind::kTruncated, "checkpoint truncated");
    }
  }
  const unsigned char* peek() const { return buf_.data() + pos_; }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }

 private:
  std::vector<unsigned char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Writer w;
  w.put_raw(kMagic.data(), kMagic.size());
  w.put(kVersion);
  const TrainConfig& c = ckpt.config;
  w.put(static_cast<std::uint32_t>(c.alpha_levels.size()));
  for (double a : c.alpha_levels) w.put(a);
  w.put(c.epsilon);
  w.put(c.q);
  w.put(c.gamma);
  w.put(c.learning_rate);
  w.put(static_cast<std::uint32_t>(c.batch_size));
  w.put(static_cast<std::uint32_t>(c.steps));
  w.put(static_cast<std::uint64_t>(c.seed));
  w.put(static_cast<std::uint32_t>(c.crop_size));
  w.put(static_cast<std::uint8_t>(c.norm == FlowNorm::kL1 ? 0 : 1));
  w.put(static_cast<std::uint32_t>(ckpt.meta.size()));
  for (const auto& [k, v] : ckpt.meta) {
    w.put_string(k);
    w.put_string(v);
  }
  w.put(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const NamedTensor& t : ckpt.tensors) {
    if (t.values.size() != t.shape.size()) {
      throw std::invalid_argument("save_checkpoint: tensor '" + t.name + "' payload mismatch");
    }
    w.put_string(t.name);
    w.put(std::uint32_t{4});
    w.put(static_cast<std::uint32_t>(t.shape.n));
    w.put(static_cast<std::uint32_t>(t.shape.c));
    w.put(static_cast<std::uint32_t>(t.shape.h));
    w.put(static_cast<std::uint32_t>(t.shape.w));
    for (double v : t.values) w.put(v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(w.bytes().data()),
            static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw FormatError(FormatError::Kind::kIo, "short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::kIo, "cannot open " + path.string());
  Reader r(std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {}));
  r.need(kMagic.size());
  if (!std::equal(kMagic.begin(), kMagic.end(), reinterpret_cast<const char*>(r.peek()))) {
    throw FormatError(FormatError::Kind::kBadMagic, "not a checkpoint: " + path.string());
  }
  r.skip(kMagic.size());
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw FormatError(FormatError::Kind::kUnsupported,
                      "unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  TrainConfig& c = ckpt.config;
  c.alpha_levels.resize(r.get<std::uint32_t>());
  for (double& a : c.alpha_levels) a = r.get<double>();
  c.epsilon = r.get<double>();
  c.q = r.get<double>();
  c.gamma = r.get<double>();
  c.learning_rate = r.get<double>();
  c.batch_size = static_cast<int>(r.get<std::uint32_t>());
  c.steps = static_cast<int>(r.get<std::uint32_t>());
  c.seed = r.get<std::uint64_t>();
  c.crop_size = static_cast<int>(r.get<std::uint32_t>());
  c.norm = r.get<std::uint8_t>() == 0 ? FlowNorm::kL1 : FlowNorm::kL2;
  const auto n_meta = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.get_string();
    ckpt.meta[k] = r.get_string();
  }
  const auto n_tensors = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    NamedTensor t;
    t.name = r.get_string();
    const auto rank = r.get<std::uint32_t>();
    if (rank != 4) {
      throw FormatError(FormatError::Kind::kUnsupported,
                        "tensor '" + t.name + "' has rank " + std::to_string(rank));
    }
    t.shape.n = static_cast<int>(r.get<std::uint32_t>());
    t.shape.c = static_cast<int>(r.get<std::uint32_t>());
    t.shape.h = static_cast<int>(r.get<std::uint32_t>());
    t.shape.w = static_cast<int>(r.get<std::uint32_t>());
    r.need(t.shape.size() * sizeof(double));
    t.values.resize(t.shape.size());
    for (double& v : t.values) v = r.get<double>();
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

}  // namespace flowfuse::nn
