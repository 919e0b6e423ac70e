#ifndef FAEMB_DESCRIPTOR_IO_H_
#define FAEMB_DESCRIPTOR_IO_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "faemb/core.h"

namespace faemb {

// Descriptor file layout (all integers little-endian):
//   "FAEB" | version u32 | dim u32 | image count u64
//   per image: id length u32 | id bytes | descriptor count u64 |
//              count * dim float32, one descriptor after another
//   CRC32 (u32) of every byte between the header and the CRC itself.
inline constexpr std::uint32_t kDescriptorFormatVersion = 1;
inline constexpr std::size_t kDescriptorHeaderSize = 20;

std::uint32_t Crc32(std::span<const std::uint8_t> bytes);

// Descriptor values are narrowed to float32 on write.
std::string EncodeDescriptorFile(const std::vector<DescriptorSet>& sets,
                                 std::uint32_t dim);
std::vector<DescriptorSet> DecodeDescriptorFile(const std::string& bytes);

void WriteDescriptorFile(const std::string& path,
                         const std::vector<DescriptorSet>& sets);
std::vector<DescriptorSet> ReadDescriptorFile(const std::string& path);

// Whole-file helpers shared by every on-disk format.
std::string ReadFileBytes(const std::string& path);
void WriteFileBytes(const std::string& path, const std::string& bytes);

}  // namespace faemb

#endif  // FAEMB_DESCRIPTOR_IO_H_
