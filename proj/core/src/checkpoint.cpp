#include "byteshot/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "byteshot/error.hpp"
#include "byteshot/rng.hpp"

namespace byteshot {

namespace {

constexpr char kMagic[8] = {'B', 'S', 'H', 'T', 'N', 'S', 'R', '\0'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  void raw(void* p, std::size_t n) {
    if (n > in_.size() - pos_) throw Error(ErrorCode::CorruptCheckpoint, "truncated container");
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > in_.size() - pos_) throw Error(ErrorCode::CorruptCheckpoint, "string length out of range");
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

const std::string& TensorContainer::header_value(const std::string& key) const {
  for (const auto& [k, v] : header)
    if (k == key) return v;
  throw Error(ErrorCode::CorruptCheckpoint, "missing header key '" + key + "'");
}

const NamedTensor& TensorContainer::tensor(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw Error(ErrorCode::CorruptCheckpoint, "missing tensor '" + name + "'");
}

std::vector<std::uint8_t> TensorContainer::serialize() const {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kFormatVersion);
  w.str(kind);
  w.u32(static_cast<std::uint32_t>(header.size()));
  for (const auto& [k, v] : header) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    std::uint64_t count = 1;
    for (auto d : t.shape) {
      w.u64(d);
      count *= d;
    }
    if (count != t.values.size())
      throw Error(ErrorCode::CorruptCheckpoint, "tensor '" + t.name + "' shape/value mismatch");
    w.raw(t.values.data(), t.values.size() * sizeof(float));
  }
  return w.take();
}

TensorContainer TensorContainer::deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw Error(ErrorCode::CorruptCheckpoint, "bad magic");
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion)
    throw Error(ErrorCode::CorruptCheckpoint, "unsupported format version " + std::to_string(version));

  TensorContainer c;
  c.kind = r.str();
  const std::uint32_t header_count = r.u32();
  for (std::uint32_t i = 0; i < header_count; ++i) {
    std::string k = r.str();
    std::string v = r.str();
    c.header.emplace_back(std::move(k), std::move(v));
  }
  const std::uint32_t tensor_count = r.u32();
  for (std::uint32_t i = 0; i < tensor_count; ++i) {
    NamedTensor t;
    t.name = r.str();
    const std::uint32_t rank = r.u32();
    std::uint64_t count = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      t.shape.push_back(r.u64());
      count *= t.shape.back();
    }
    if (count > r.remaining() / sizeof(float))
      throw Error(ErrorCode::CorruptCheckpoint, "tensor '" + t.name + "' exceeds container");
    t.values.resize(count);
    r.raw(t.values.data(), count * sizeof(float));
    c.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw Error(ErrorCode::CorruptCheckpoint, "trailing bytes");
  return c;
}

void TensorContainer::save(const std::filesystem::path& path) const {
  write_file_bytes(path, serialize());
}

TensorContainer TensorContainer::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw Error(ErrorCode::MissingCheckpoint, path.string());
  return deserialize(read_file_bytes(path));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::uint8_t> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size)))
    throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
}

std::string file_fingerprint(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(bytes.data(), bytes.size());
  return os.str();
}

}  // namespace byteshot
