#pragma once

// `CSLW` tensor container shared by extractor weights and policy checkpoints.
//
//   magic "CSLW" | u32 version | u32 tensor count
//   per tensor: u32 tag length | tag bytes | u32 dtype (0 = f32, 1 = f64)
//               | u32 ndims | u32 dims[ndims] | data, little-endian, row-major
//
// All integers are little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace chartsim::cslw {

inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::string_view kMagic = "CSLW";

enum class DType : std::uint32_t { f32 = 0, f64 = 1 };

struct Tensor {
  std::string tag;
  DType dtype = DType::f32;
  std::vector<std::uint32_t> shape;
  std::vector<double> data;  // widened; f32 tensors hold exactly representable floats

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

class FormatError : public std::runtime_error {
 public:
  enum class Kind { bad_magic, bad_version, truncated, shape_mismatch, io };

  FormatError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }

  bool done() const noexcept { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError(FormatError::Kind::truncated, "truncated weights file");
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode(const std::vector<Tensor>& tensors) {
  std::string out(kMagic);
  detail::put_u32(out, kVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const Tensor& t : tensors) {
    if (t.data.size() != t.element_count()) {
      throw FormatError(FormatError::Kind::shape_mismatch, "tensor '" + t.tag + "' data does not match its shape");
    }
    detail::put_u32(out, static_cast<std::uint32_t>(t.tag.size()));
    out += t.tag;
    detail::put_u32(out, static_cast<std::uint32_t>(t.dtype));
    detail::put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) detail::put_u32(out, d);
    for (double v : t.data) {
      if (t.dtype == DType::f32) {
        detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      } else {
        detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  return out;
}

inline std::vector<Tensor> decode(std::string_view data) {
  if (data.size() < 4) throw FormatError(FormatError::Kind::truncated, "truncated weights file");
  if (data.substr(0, 4) != kMagic) throw FormatError(FormatError::Kind::bad_magic, "bad magic: not a CSLW file");
  detail::Reader r(data.substr(4));
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw FormatError(FormatError::Kind::bad_version, "unsupported CSLW version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  std::vector<Tensor> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    Tensor t;
    t.tag = r.bytes(r.u32());
    const std::uint32_t dtype = r.u32();
    if (dtype > 1) throw FormatError(FormatError::Kind::shape_mismatch, "unknown dtype in tensor '" + t.tag + "'");
    t.dtype = static_cast<DType>(dtype);
    const std::uint32_t ndims = r.u32();
    if (ndims > 8) throw FormatError(FormatError::Kind::shape_mismatch, "too many dims in tensor '" + t.tag + "'");
    for (std::uint32_t i = 0; i < ndims; ++i) t.shape.push_back(r.u32());
    const std::size_t n = t.element_count();
    if (n > (std::size_t{1} << 28)) throw FormatError(FormatError::Kind::shape_mismatch, "tensor too large");
    t.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      t.data[i] = t.dtype == DType::f32 ? static_cast<double>(std::bit_cast<float>(r.u32()))
                                        : std::bit_cast<double>(r.u64());
    }
    out.push_back(std::move(t));
  }
  if (!r.done()) throw FormatError(FormatError::Kind::shape_mismatch, "trailing bytes after last tensor");
  return out;
}

inline void save(const std::vector<Tensor>& tensors, const std::string& path) {
  const std::string bytes = encode(tensors);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError(FormatError::Kind::io, "cannot open " + path + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError(FormatError::Kind::io, "write failed: " + path);
}

inline std::vector<Tensor> load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(FormatError::Kind::io, "cannot open " + path);
  const std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode(data);
}

// Finds `tag` and checks its shape.
inline const Tensor& expect(const std::vector<Tensor>& tensors, std::string_view tag,
                            const std::vector<std::uint32_t>& shape) {
  for (const Tensor& t : tensors) {
    if (t.tag != tag) continue;
    if (t.shape != shape) throw FormatError(FormatError::Kind::shape_mismatch, "shape mismatch for tensor '" + t.tag + "'");
    return t;
  }
  throw FormatError(FormatError::Kind::shape_mismatch, "missing tensor '" + std::string(tag) + "'");
}

}  // namespace chartsim::cslw
