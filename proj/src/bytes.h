#ifndef FAEMB_SRC_BYTES_H_
#define FAEMB_SRC_BYTES_H_

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <utility>

#include "faemb/core.h"

namespace faemb::detail {

// Little-endian serialization helpers.
class ByteWriter {
 public:
  void U32(std::uint32_t v) { Uint(v, 4); }
  void U64(std::uint64_t v) { Uint(v, 8); }
  void F32(float v) { U32(std::bit_cast<std::uint32_t>(v)); }
  void F64(double v) { U64(std::bit_cast<std::uint64_t>(v)); }
  void Bytes(std::string_view s) { out_.append(s); }

  std::string& str() { return out_; }

 private:
  void Uint(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) {
      out_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
    }
  }
  std::string out_;
};

class ByteReader {
 public:
  ByteReader(std::string_view data, std::string context)
      : data_(data), context_(std::move(context)) {}

  std::uint32_t U32() { return static_cast<std::uint32_t>(Uint(4)); }
  std::uint64_t U64() { return Uint(8); }
  float F32() { return std::bit_cast<float>(U32()); }
  double F64() { return std::bit_cast<double>(U64()); }
  std::string_view Bytes(std::size_t n) {
    Need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

  void Need(std::size_t n) const {
    if (remaining() < n) {
      throw Error(ErrorKind::kFormat, context_ + ": truncated file");
    }
  }

 private:
  std::uint64_t Uint(int width) {
    Need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i]))
           << (8 * i);
    }
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::string_view data_;
  std::string context_;
  std::size_t pos_ = 0;
};

}  // namespace faemb::detail

#endif  // FAEMB_SRC_BYTES_H_
