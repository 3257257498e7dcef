#include <zlib.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string_view>

#include "spectral_gain/error.hpp"
#include "spectral_gain/network.hpp"

namespace spectral_gain {

namespace {

constexpr std::array<char, 8> kMagic = {'S', 'P', 'G', 'S', 'N', 'A', 'P', '\0'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void text(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void shape(const Shape& s) {
    u32(static_cast<std::uint32_t>(s.rank()));
    for (std::size_t d : s.dims()) u64(d);
  }
  void tensor(const Tensor& t) {
    shape(t.shape());
    for (double v : t.values()) f64(v);
  }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  Reader(const std::vector<char>& bytes, std::size_t end)
      : bytes_(bytes), end_(end) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_++]))
           << (8 * i);
    }
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_++]))
           << (8 * i);
    }
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string text() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  Shape shape() {
    const std::uint32_t rank = u32();
    if (rank > 8) throw FormatError("snapshot: implausible tensor rank");
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) {
      d = u64();
      if (d == 0 || d > (std::uint64_t{1} << 32)) {
        throw FormatError("snapshot: invalid tensor extent");
      }
    }
    return rank == 0 ? Shape{} : Shape(std::move(dims));
  }
  Tensor tensor() {
    Shape s = shape();
    const std::size_t count = s.element_count();
    need(count * 8);
    std::vector<double> values(count);
    for (double& v : values) v = f64();
    if (s.rank() == 0) return Tensor{};
    return Tensor(std::move(s), std::move(values));
  }
  void expect_magic() {
    need(kMagic.size());
    if (std::memcmp(bytes_.data() + pos_, kMagic.data(), kMagic.size()) != 0) {
      throw FormatError("snapshot: bad magic");
    }
    pos_ += kMagic.size();
  }
  bool at_end() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) throw FormatError("snapshot: unexpected end of payload");
  }

  const std::vector<char>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t checksum(const char* data, std::size_t n) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

}  // namespace

void save_snapshot(const Network& net, const std::filesystem::path& path) {
  Writer w;
  w.raw(kMagic.data(), kMagic.size());
  w.u32(kSnapshotVersion);
  w.text(net.meta.architecture);
  w.text(net.meta.dataset);
  w.u64(net.meta.seed);
  w.u64(net.num_classes);
  w.shape(net.input_shape);
  w.tensor(net.meta.mean_image);
  w.u32(static_cast<std::uint32_t>(net.layers.size()));
  for (const LayerSpec& layer : net.layers) {
    w.u32(static_cast<std::uint32_t>(layer.kind));
    for (std::size_t v : {layer.kernel_h, layer.kernel_w, layer.in_channels,
                          layer.out_channels, layer.stride, layer.pad.top,
                          layer.pad.bottom, layer.pad.left, layer.pad.right}) {
      w.u64(v);
    }
    w.tensor(layer.weights);
    w.tensor(layer.bias);
  }
  const std::uint32_t crc = checksum(w.bytes().data(), w.bytes().size());
  w.u32(crc);

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move snapshot into " + path.string() + ": " + ec.message());
}

Network load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open snapshot " + path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  if (bytes.size() < kMagic.size() + 8) {
    throw FormatError("snapshot: checksum mismatch (file too short)");
  }
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) {
    stored |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[body + i]))
              << (8 * i);
  }
  if (stored != checksum(bytes.data(), body)) {
    throw FormatError("snapshot: checksum mismatch in " + path.string());
  }

  Reader r(bytes, body);
  r.expect_magic();
  const std::uint32_t version = r.u32();
  if (version != kSnapshotVersion) {
    throw FormatError("snapshot: unsupported version " + std::to_string(version));
  }
  Network net;
  net.meta.architecture = r.text();
  net.meta.dataset = r.text();
  net.meta.seed = r.u64();
  net.num_classes = r.u64();
  net.input_shape = r.shape();
  net.meta.mean_image = r.tensor();
  const std::uint32_t count = r.u32();
  net.layers.resize(count);
  for (LayerSpec& layer : net.layers) {
    const std::uint32_t kind = r.u32();
    if (kind > static_cast<std::uint32_t>(LayerKind::softmax)) {
      throw FormatError("snapshot: unknown layer kind " + std::to_string(kind));
    }
    layer.kind = static_cast<LayerKind>(kind);
    layer.kernel_h = r.u64();
    layer.kernel_w = r.u64();
    layer.in_channels = r.u64();
    layer.out_channels = r.u64();
    layer.stride = r.u64();
    layer.pad.top = r.u64();
    layer.pad.bottom = r.u64();
    layer.pad.left = r.u64();
    layer.pad.right = r.u64();
    layer.weights = r.tensor();
    layer.bias = r.tensor();
  }
  if (!r.at_end()) throw FormatError("snapshot: trailing bytes before checksum");
  try {
    net.validate();
  } catch (const ShapeError& e) {
    throw FormatError(std::string("snapshot: inconsistent network: ") + e.what());
  }
  return net;
}

}  // namespace spectral_gain
