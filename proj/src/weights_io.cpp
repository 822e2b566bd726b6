#include "s2p/weights_io.hpp"

#include "s2p/error.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

namespace s2p {

namespace {

constexpr char kMagic[4] = {'S', '2', 'P', 'W'};

class Writer {
 public:
  void bytes(const void* p, size_t n) { buf_.append(static_cast<const char*>(p), n); }
  template <class T>
  void le(T v) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(v);
    for (size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
  }
  void f32(float v) { le(std::bit_cast<uint32_t>(v)); }
  void str(const std::string& s) {
    le(static_cast<uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& buf, size_t end, std::string path) : buf_(buf), end_(end), path_(std::move(path)) {}

  void need(size_t n) const {
    if (pos_ + n > end_) fail(ErrorKind::Load, path_ + ": truncated weight file");
  }
  template <class T>
  T le() {
    need(sizeof(T));
    std::make_unsigned_t<T> u = 0;
    for (size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }
  float f32() { return std::bit_cast<float>(le<uint32_t>()); }
  std::string str() {
    const auto n = le<uint32_t>();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  size_t pos() const { return pos_; }
  size_t end() const { return end_; }

 private:
  const std::string& buf_;
  size_t end_;
  size_t pos_ = 0;
  std::string path_;
};

}  // namespace

uint64_t fnv1a(const void* data, size_t size, uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

const torch::Tensor* WeightFile::find(const std::string& name) const {
  for (const auto& [n, t] : arrays) {
    if (n == name) return &t;
  }
  return nullptr;
}

void write_weight_file(const std::string& path, const WeightFile& file) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.le(file.format_version);
  w.str(file.network);
  w.str(file.metadata);
  w.le(static_cast<uint32_t>(file.arrays.size()));
  for (const auto& [name, tensor] : file.arrays) {
    auto t = tensor.detach().to(torch::kCPU, torch::kFloat32).contiguous();
    w.str(name);
    w.le(static_cast<uint32_t>(t.dim()));
    for (auto d : t.sizes()) w.le(static_cast<int64_t>(d));
    const float* v = t.data_ptr<float>();
    for (int64_t i = 0; i < t.numel(); ++i) w.f32(v[i]);
  }
  w.le(fnv1a(w.buffer().data(), w.buffer().size()));

  const std::filesystem::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(target.parent_path(), ec);
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot open " + tmp + " for writing");
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    if (!out) fail(ErrorKind::Io, "write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) fail(ErrorKind::Io, "cannot move " + tmp + " to " + path + ": " + ec.message());
}

WeightFile read_weight_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Load, "cannot open weight file " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof kMagic + 4 + 8 || std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) {
    fail(ErrorKind::Load, path + ": not a weight file or truncated");
  }
  const size_t body = buf.size() - 8;
  uint64_t stored = 0;
  for (size_t i = 0; i < 8; ++i) stored |= static_cast<uint64_t>(static_cast<unsigned char>(buf[body + i])) << (8 * i);
  if (stored != fnv1a(buf.data(), body)) fail(ErrorKind::Load, path + ": checksum mismatch (corrupt or truncated)");

  Reader r(buf, body, path);
  r.need(sizeof kMagic);
  for (size_t i = 0; i < sizeof kMagic; ++i) (void)r.le<uint8_t>();
  WeightFile file;
  file.format_version = r.le<uint32_t>();
  if (file.format_version != kWeightFormatVersion) {
    fail(ErrorKind::Load, path + ": unsupported format version " + std::to_string(file.format_version));
  }
  file.network = r.str();
  file.metadata = r.str();
  const auto count = r.le<uint32_t>();
  for (uint32_t k = 0; k < count; ++k) {
    std::string name = r.str();
    const auto ndim = r.le<uint32_t>();
    if (ndim > 8) fail(ErrorKind::Load, path + ": implausible rank for " + name);
    std::vector<int64_t> shape(ndim);
    int64_t numel = 1;
    for (auto& d : shape) {
      d = r.le<int64_t>();
      if (d < 0) fail(ErrorKind::Load, path + ": negative dimension in " + name);
      numel *= d;
    }
    r.need(static_cast<size_t>(numel) * 4);
    auto t = torch::empty(shape, torch::kFloat32);
    float* v = t.data_ptr<float>();
    for (int64_t i = 0; i < numel; ++i) v[i] = r.f32();
    file.arrays.emplace_back(std::move(name), std::move(t));
  }
  if (r.pos() != r.end()) fail(ErrorKind::Load, path + ": trailing bytes after last array");
  return file;
}

WeightFile module_to_weights(const torch::nn::Module& module, std::string network, std::string metadata) {
  WeightFile file;
  file.network = std::move(network);
  file.metadata = std::move(metadata);
  for (const auto& p : module.named_parameters(true)) file.arrays.emplace_back(p.key(), p.value().detach().clone());
  for (const auto& b : module.named_buffers(true)) file.arrays.emplace_back(b.key(), b.value().detach().clone());
  return file;
}

void weights_to_module(const WeightFile& file, torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  auto assign = [&](const std::string& name, torch::Tensor& dst) {
    const torch::Tensor* src = file.find(name);
    if (src == nullptr) fail(ErrorKind::Compatibility, file.network + ": missing array " + name);
    if (src->sizes() != dst.sizes()) {
      std::ostringstream os;
      os << file.network << ": shape mismatch for " << name << " " << src->sizes() << " vs " << dst.sizes();
      fail(ErrorKind::Compatibility, os.str());
    }
    dst.copy_(*src);
  };
  size_t expected = 0;
  for (auto& p : module.named_parameters(true)) {
    assign(p.key(), p.value());
    ++expected;
  }
  for (auto& b : module.named_buffers(true)) {
    assign(b.key(), b.value());
    ++expected;
  }
  if (expected != file.arrays.size()) {
    fail(ErrorKind::Compatibility, file.network + ": file holds " + std::to_string(file.arrays.size()) +
                                       " arrays, module expects " + std::to_string(expected));
  }
}

}  // namespace s2p
