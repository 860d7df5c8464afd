#include "restoregrad/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "restoregrad/error.hpp"

namespace restoregrad {

namespace {

constexpr char kMagic[8] = {'R', 'G', 'C', 'K', 'P', 'T', '\0', '\1'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  template <class U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string& str() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& s, std::size_t end) : s_(s), end_(end) {}
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw CheckpointError("checkpoint is truncated");
  }
  template <class U>
  U le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(s_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  std::string take(std::size_t n) {
    need(n);
    std::string out = s_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::string& s_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::size_t elem_size(DType t) { return t == DType::kF32 ? 4 : 8; }

std::uint32_t crc(const std::string& s, std::size_t n) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(n)));
}

}  // namespace

const CheckpointArray* Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

std::string serialize_checkpoint(const Checkpoint& c) {
  Writer payload;
  std::vector<std::uint64_t> offsets;
  for (const CheckpointArray& a : c.arrays) {
    if (a.values.size() != ad::numel(a.shape))
      throw CheckpointError("array " + a.name + " does not match its shape");
    offsets.push_back(payload.str().size());
    for (double v : a.values) {
      if (a.dtype == DType::kF32) {
        if (static_cast<double>(static_cast<float>(v)) != v && !std::isnan(v))
          throw CheckpointError("array " + a.name + " holds a value that is not a 32-bit float");
        payload.le(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      } else {
        payload.le(std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.le<std::uint32_t>(Checkpoint::kVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(c.config_text.size()));
  w.bytes(c.config_text.data(), c.config_text.size());
  w.le<std::uint64_t>(c.step);
  w.le<std::uint64_t>(c.rng_seed);
  w.le<std::uint64_t>(c.rng_counter);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(c.arrays.size()));
  for (std::size_t i = 0; i < c.arrays.size(); ++i) {
    const CheckpointArray& a = c.arrays[i];
    if (a.name.size() > 0xffff || a.shape.size() > 0xff) throw CheckpointError("array header too large");
    w.le<std::uint16_t>(static_cast<std::uint16_t>(a.name.size()));
    w.bytes(a.name.data(), a.name.size());
    w.le<std::uint8_t>(static_cast<std::uint8_t>(a.dtype));
    w.le<std::uint8_t>(static_cast<std::uint8_t>(a.shape.size()));
    for (std::size_t dim : a.shape) w.le<std::uint64_t>(dim);
    w.le<std::uint64_t>(offsets[i]);
    w.le<std::uint64_t>(a.values.size() * elem_size(a.dtype));
  }
  w.le<std::uint64_t>(payload.str().size());
  w.str() += payload.str();
  w.le<std::uint32_t>(crc(w.str(), w.str().size()));
  return w.str();
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic + 8) throw CheckpointError("checkpoint is truncated");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw CheckpointError("not a checkpoint file");
  const std::size_t body = bytes.size() - 4;
  {
    std::uint32_t stored = 0;
    for (std::size_t i = 0; i < 4; ++i)
      stored |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[body + i])) << (8 * i);
    if (stored != crc(bytes, body)) throw CheckpointError("checkpoint checksum mismatch (corrupt or truncated)");
  }
  Reader r(bytes, body);
  r.take(sizeof kMagic);
  const auto version = r.le<std::uint32_t>();
  if (version != Checkpoint::kVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.config_text = r.take(r.le<std::uint32_t>());
  c.step = r.le<std::uint64_t>();
  c.rng_seed = r.le<std::uint64_t>();
  c.rng_counter = r.le<std::uint64_t>();
  const auto n = r.le<std::uint32_t>();
  struct Slot {
    std::uint64_t offset, length;
  };
  std::vector<Slot> slots;
  for (std::uint32_t i = 0; i < n; ++i) {
    CheckpointArray a;
    a.name = r.take(r.le<std::uint16_t>());
    const auto dt = r.le<std::uint8_t>();
    if (dt > 1) throw CheckpointError("array " + a.name + " has an unknown dtype");
    a.dtype = static_cast<DType>(dt);
    const auto rank = r.le<std::uint8_t>();
    for (std::uint8_t k = 0; k < rank; ++k) a.shape.push_back(static_cast<std::size_t>(r.le<std::uint64_t>()));
    const auto offset = r.le<std::uint64_t>();
    const auto length = r.le<std::uint64_t>();
    if (length != ad::numel(a.shape) * elem_size(a.dtype))
      throw CheckpointError("manifest length of " + a.name + " does not match its shape");
    slots.push_back({offset, length});
    c.arrays.push_back(std::move(a));
  }
  const auto payload_len = r.le<std::uint64_t>();
  if (r.pos() + payload_len != body) throw CheckpointError("payload length does not match the file size");
  const std::size_t base = r.pos();
  std::uint64_t expected = 0;
  for (std::size_t i = 0; i < c.arrays.size(); ++i) {
    if (slots[i].offset != expected) throw CheckpointError("manifest offsets are inconsistent");
    expected += slots[i].length;
    CheckpointArray& a = c.arrays[i];
    const std::size_t es = elem_size(a.dtype);
    a.values.resize(ad::numel(a.shape));
    for (std::size_t k = 0; k < a.values.size(); ++k) {
      std::uint64_t bits = 0;
      for (std::size_t b = 0; b < es; ++b)
        bits |= static_cast<std::uint64_t>(
                    static_cast<unsigned char>(bytes[base + slots[i].offset + k * es + b]))
                << (8 * b);
      a.values[k] = a.dtype == DType::kF32
                        ? static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(bits)))
                        : std::bit_cast<double>(bits);
    }
  }
  if (expected != payload_len) throw CheckpointError("manifest does not cover the payload");
  return c;
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace restoregrad
