#ifndef FAEMB_CONTAINER_H_
#define FAEMB_CONTAINER_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "faemb/aggregate.h"
#include "faemb/binary.h"
#include "faemb/coding.h"
#include "faemb/core.h"
#include "faemb/embed.h"
#include "faemb/retrieval.h"

namespace faemb {

// Model container layout (little-endian):
//   "FAMB" | major u16 | minor u16 | section count u32
//   per section: name length u32 | name | offset u64 | length u64
//   CRC32 of everything above
//   section blobs at their offsets:
//     kind u32 | rank u32 | shape u64 * rank | payload | CRC32 of the blob
// Float payloads hold IEEE doubles; byte payloads hold raw bytes.
// Any minor version of the current major loads; other majors are refused.
inline constexpr std::uint16_t kContainerMajor = 1;
inline constexpr std::uint16_t kContainerMinor = 1;

enum class BlobKind : std::uint32_t { kFloat64 = 1, kBytes = 2 };

struct Blob {
  BlobKind kind = BlobKind::kFloat64;
  std::vector<std::uint64_t> shape;
  std::vector<double> values;  // kFloat64, column-major for matrices
  std::string bytes;           // kBytes
};

class Container {
 public:
  void PutMatrix(const std::string& name, const Matrix& m);
  void PutVector(const std::string& name, const Vector& v);
  void PutScalar(const std::string& name, double value);
  void PutString(const std::string& name, const std::string& value);
  void PutBlob(const std::string& name, Blob blob);

  bool Has(const std::string& name) const { return sections_.count(name) > 0; }
  const Blob& Get(const std::string& name) const;
  Matrix GetMatrix(const std::string& name) const;
  Vector GetVector(const std::string& name) const;
  double GetScalar(const std::string& name) const;
  std::string GetString(const std::string& name) const;
  std::vector<std::string> Names() const;

  std::uint16_t major_version() const { return major_; }
  std::uint16_t minor_version() const { return minor_; }
  // Only for writing files that claim an older layout revision.
  void set_minor_version(std::uint16_t minor) { minor_ = minor; }

  std::string Encode() const;
  static Container Decode(const std::string& bytes);
  void Save(const std::string& path) const;
  static Container Load(const std::string& path);

 private:
  std::map<std::string, Blob> sections_;
  std::uint16_t major_ = kContainerMajor;
  std::uint16_t minor_ = kContainerMinor;
};

// Typed objects live under a name prefix so several can share one file.
// Each object records its type under "<prefix>type" and loading checks it.
void StoreCodingModel(Container& c, const CodingModel& m, const std::string& prefix = "coding.");
CodingModel LoadCodingModel(const Container& c, const std::string& prefix = "coding.");

void StoreWhitening(Container& c, const WhiteningModel& m, const std::string& prefix = "whitening.");
WhiteningModel LoadWhitening(const Container& c, const std::string& prefix = "whitening.");

void StoreRotationNorm(Container& c, const RotationNormModel& m, const std::string& prefix = "rn.");
RotationNormModel LoadRotationNorm(const Container& c, const std::string& prefix = "rn.");

void StoreItq(Container& c, const ItqModel& m, const std::string& prefix = "itq.");
ItqModel LoadItq(const Container& c, const std::string& prefix = "itq.");

void StoreSignatures(Container& c, const std::vector<ImageSignature>& sigs,
                     const std::string& prefix = "signatures.");
std::vector<ImageSignature> LoadSignatures(const Container& c,
                                           const std::string& prefix = "signatures.");

void StoreCodes(Container& c, const std::vector<BinaryCode>& codes,
                const std::string& prefix = "codes.");
std::vector<BinaryCode> LoadCodes(const Container& c, const std::string& prefix = "codes.");

void StoreIndex(Container& c, const RetrievalIndex& index, const std::string& prefix = "index.");
RetrievalIndex LoadIndex(const Container& c, const std::string& prefix = "index.");

// Length-prefixed list of strings in one byte blob.
std::string PackStrings(const std::vector<std::string>& items);
std::vector<std::string> UnpackStrings(const std::string& packed);

}  // namespace faemb

#endif  // FAEMB_CONTAINER_H_
