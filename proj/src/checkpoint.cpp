#include "framelog/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "framelog/error.hpp"

namespace framelog {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t uint(int width) {
    need(width);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    }
    pos_ += width;
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw FormatError("checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void Checkpoint::add(std::string name, nn::Tensor tensor) {
  if (has(name)) throw ValueError("checkpoint: duplicate tensor name '" + name + "'");
  entries_.emplace_back(std::move(name), std::move(tensor));
}

bool Checkpoint::has(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == name; });
}

const nn::Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw ValueError("checkpoint: no tensor named '" + name + "'");
}

std::vector<std::string> Checkpoint::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.first);
  return out;
}

std::string Checkpoint::serialize() const {
  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(entries_.size()));
  put_u32(out, static_cast<std::uint32_t>(metadata.size()));
  out += metadata;
  std::uint64_t offset = 0;
  for (const auto& [name, t] : entries_) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    const nn::Shape s = t.shape();
    for (int d : {s.n, s.c, s.h, s.w}) put_u32(out, static_cast<std::uint32_t>(d));
    put_u64(out, offset);
    put_u64(out, t.size());
    offset += t.size() * sizeof(float);
  }
  out.reserve(out.size() + offset);
  for (const auto& [name, t] : entries_) {
    for (float v : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  Reader r(bytes);
  if (r.str(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw FormatError("checkpoint: bad magic bytes");
  }
  const auto version = r.uint(4);
  if (version != kVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = r.uint(4);
  Checkpoint ckpt;
  ckpt.metadata = r.str(r.uint(4));
  struct Entry {
    std::string name;
    nn::Shape shape;
    std::uint64_t offset, elements;
  };
  std::vector<Entry> manifest;
  for (std::uint64_t i = 0; i < count; ++i) {
    Entry e;
    e.name = r.str(r.uint(4));
    e.shape.n = static_cast<int>(r.uint(4));
    e.shape.c = static_cast<int>(r.uint(4));
    e.shape.h = static_cast<int>(r.uint(4));
    e.shape.w = static_cast<int>(r.uint(4));
    e.offset = r.uint(8);
    e.elements = r.uint(8);
    if (e.elements != e.shape.numel()) {
      throw FormatError("checkpoint: element count mismatch for '" + e.name + "'");
    }
    manifest.push_back(std::move(e));
  }
  const std::size_t data_start = r.pos();
  for (const Entry& e : manifest) {
    const std::size_t begin = data_start + e.offset;
    if (begin + e.elements * 4 > bytes.size()) {
      throw FormatError("checkpoint: data for '" + e.name + "' out of range");
    }
    std::vector<float> values(e.elements);
    for (std::size_t k = 0; k < e.elements; ++k) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) {
        u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[begin + 4 * k + b]))
             << (8 * b);
      }
      values[k] = std::bit_cast<float>(u);
    }
    ckpt.add(e.name, nn::Tensor(e.shape, std::move(values)));
  }
  return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  write_file(path, serialize());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  return deserialize(read_file(path));
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace framelog
