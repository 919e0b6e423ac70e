#include "faemb/descriptor_io.h"

#include <fstream>
#include <iterator>
#include <sstream>

#include <zlib.h>

#include "bytes.h"

namespace faemb {

std::uint32_t Crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in bounded chunks.
  constexpr std::size_t kChunk = 1u << 30;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t n = std::min(kChunk, bytes.size() - pos);
    crc = crc32(crc, bytes.data() + pos, static_cast<uInt>(n));
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

namespace {

std::uint32_t Crc32Of(std::string_view s) {
  return Crc32({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

}  // namespace

std::string EncodeDescriptorFile(const std::vector<DescriptorSet>& sets,
                                 std::uint32_t dim) {
  ValidateDescriptorSets(sets, dim);
  detail::ByteWriter w;
  w.Bytes("FAEB");
  w.U32(kDescriptorFormatVersion);
  w.U32(dim);
  w.U64(sets.size());
  for (const auto& set : sets) {
    w.U32(static_cast<std::uint32_t>(set.image_id.size()));
    w.Bytes(set.image_id);
    w.U64(static_cast<std::uint64_t>(set.size()));
    for (Eigen::Index c = 0; c < set.size(); ++c) {
      for (Eigen::Index r = 0; r < set.dim(); ++r) {
        w.F32(static_cast<float>(set.descriptors(r, c)));
      }
    }
  }
  const std::string_view payload =
      std::string_view(w.str()).substr(kDescriptorHeaderSize);
  w.U32(Crc32Of(payload));
  return std::move(w.str());
}

std::vector<DescriptorSet> DecodeDescriptorFile(const std::string& bytes) {
  detail::ByteReader r(bytes, "descriptor file");
  if (r.Bytes(4) != "FAEB") {
    throw Error(ErrorKind::kFormat, "descriptor file: bad magic");
  }
  const std::uint32_t version = r.U32();
  if (version != kDescriptorFormatVersion) {
    throw Error(ErrorKind::kVersion,
                "descriptor file: unsupported version " + std::to_string(version));
  }
  const std::uint32_t dim = r.U32();
  const std::uint64_t count = r.U64();
  if (bytes.size() < kDescriptorHeaderSize + 4) {
    throw Error(ErrorKind::kFormat, "descriptor file: truncated file");
  }
  const std::size_t payload_end = bytes.size() - 4;
  const std::string_view payload = std::string_view(bytes).substr(
      kDescriptorHeaderSize, payload_end - kDescriptorHeaderSize);
  detail::ByteReader tail(std::string_view(bytes).substr(payload_end), "descriptor file");
  if (Crc32Of(payload) != tail.U32()) {
    throw Error(ErrorKind::kChecksum, "descriptor file: CRC32 mismatch");
  }
  std::vector<DescriptorSet> sets;
  for (std::uint64_t i = 0; i < count; ++i) {
    DescriptorSet set;
    const std::uint32_t id_len = r.U32();
    set.image_id = std::string(r.Bytes(id_len));
    const std::uint64_t n = r.U64();
    if (dim != 0 && n > r.remaining() / (4ull * dim)) {
      throw Error(ErrorKind::kFormat, "descriptor file: truncated file");
    }
    set.descriptors.resize(dim, static_cast<Eigen::Index>(n));
    for (std::uint64_t c = 0; c < n; ++c) {
      for (std::uint32_t k = 0; k < dim; ++k) {
        set.descriptors(k, static_cast<Eigen::Index>(c)) = r.F32();
      }
    }
    sets.push_back(std::move(set));
  }
  if (r.pos() != payload_end) {
    throw Error(ErrorKind::kFormat, "descriptor file: payload length does not match the header");
  }
  ValidateDescriptorSets(sets, dim);
  return sets;
}

std::string ReadFileBytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFileBytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "write failed for '" + path + "'");
}

void WriteDescriptorFile(const std::string& path,
                         const std::vector<DescriptorSet>& sets) {
  const auto dim = sets.empty() ? 0u : static_cast<std::uint32_t>(sets.front().dim());
  if (sets.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "refusing to write an empty descriptor file");
  }
  WriteFileBytes(path, EncodeDescriptorFile(sets, dim));
}

std::vector<DescriptorSet> ReadDescriptorFile(const std::string& path) {
  return DecodeDescriptorFile(ReadFileBytes(path));
}

}  // namespace faemb
