#include "faemb/container.h"

#include <span>

#include "bytes.h"
#include "faemb/descriptor_io.h"

namespace faemb {

using detail::ByteReader;
using detail::ByteWriter;

namespace {

constexpr char kMagic[4] = {'F', 'A', 'M', 'B'};

std::uint32_t CrcOf(std::string_view s) {
  return Crc32({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

std::uint64_t ShapeProduct(const std::vector<std::uint64_t>& shape) {
  std::uint64_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

std::string EncodeBlob(const Blob& b) {
  ByteWriter w;
  w.U32(static_cast<std::uint32_t>(b.kind));
  w.U32(static_cast<std::uint32_t>(b.shape.size()));
  for (auto s : b.shape) w.U64(s);
  if (b.kind == BlobKind::kFloat64) {
    for (double v : b.values) w.F64(v);
  } else {
    w.Bytes(b.bytes);
  }
  const std::uint32_t crc = CrcOf(w.str());
  w.U32(crc);
  return std::move(w.str());
}

Blob DecodeBlob(std::string_view data, const std::string& name) {
  if (data.size() < 4) throw Error(ErrorKind::kFormat, "section '" + name + "' is truncated");
  const std::string_view body = data.substr(0, data.size() - 4);
  ByteReader crc_reader(data.substr(data.size() - 4), name);
  if (crc_reader.U32() != CrcOf(body)) {
    throw Error(ErrorKind::kChecksum, "checksum mismatch in section '" + name + "'");
  }
  ByteReader r(body, "section '" + name + "'");
  Blob b;
  const std::uint32_t kind = r.U32();
  if (kind != static_cast<std::uint32_t>(BlobKind::kFloat64) &&
      kind != static_cast<std::uint32_t>(BlobKind::kBytes)) {
    throw Error(ErrorKind::kFormat, "section '" + name + "' has unknown kind " +
                                        std::to_string(kind));
  }
  b.kind = static_cast<BlobKind>(kind);
  const std::uint32_t rank = r.U32();
  r.Need(8ull * rank);
  for (std::uint32_t i = 0; i < rank; ++i) b.shape.push_back(r.U64());
  const std::uint64_t count = ShapeProduct(b.shape);
  if (b.kind == BlobKind::kFloat64) {
    if (count > r.remaining() / 8) {
      throw Error(ErrorKind::kFormat, "section '" + name + "' is truncated");
    }
    b.values.resize(count);
    for (auto& v : b.values) v = r.F64();
  } else {
    b.bytes = std::string(r.Bytes(count));
  }
  if (r.remaining() != 0) {
    throw Error(ErrorKind::kFormat, "section '" + name + "' has trailing bytes");
  }
  return b;
}

}  // namespace

void Container::PutBlob(const std::string& name, Blob blob) {
  if (name.empty()) throw Error(ErrorKind::kInvalidArgument, "section name must not be empty");
  const std::uint64_t count = ShapeProduct(blob.shape);
  const std::uint64_t have = blob.kind == BlobKind::kFloat64 ? blob.values.size() : blob.bytes.size();
  if (count != have) {
    throw Error(ErrorKind::kDimensionMismatch, "section '" + name + "' shape does not match its data");
  }
  sections_[name] = std::move(blob);
}

void Container::PutMatrix(const std::string& name, const Matrix& m) {
  Blob b;
  b.shape = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  b.values.assign(m.data(), m.data() + m.size());
  PutBlob(name, std::move(b));
}

void Container::PutVector(const std::string& name, const Vector& v) {
  Blob b;
  b.shape = {static_cast<std::uint64_t>(v.size())};
  b.values.assign(v.data(), v.data() + v.size());
  PutBlob(name, std::move(b));
}

void Container::PutScalar(const std::string& name, double value) {
  Blob b;
  b.values = {value};
  PutBlob(name, std::move(b));
}

void Container::PutString(const std::string& name, const std::string& value) {
  Blob b;
  b.kind = BlobKind::kBytes;
  b.shape = {value.size()};
  b.bytes = value;
  PutBlob(name, std::move(b));
}

const Blob& Container::Get(const std::string& name) const {
  auto it = sections_.find(name);
  if (it == sections_.end()) {
    throw Error(ErrorKind::kFormat, "container has no section '" + name + "'");
  }
  return it->second;
}

namespace {

const Blob& Expect(const Container& c, const std::string& name, BlobKind kind, std::size_t rank) {
  const Blob& b = c.Get(name);
  if (b.kind != kind || b.shape.size() != rank) {
    throw Error(ErrorKind::kFormat, "section '" + name + "' has an unexpected kind or rank");
  }
  return b;
}

}  // namespace

Matrix Container::GetMatrix(const std::string& name) const {
  const Blob& b = Expect(*this, name, BlobKind::kFloat64, 2);
  return Eigen::Map<const Matrix>(b.values.data(), static_cast<Eigen::Index>(b.shape[0]),
                                  static_cast<Eigen::Index>(b.shape[1]));
}

Vector Container::GetVector(const std::string& name) const {
  const Blob& b = Expect(*this, name, BlobKind::kFloat64, 1);
  return Eigen::Map<const Vector>(b.values.data(), static_cast<Eigen::Index>(b.shape[0]));
}

double Container::GetScalar(const std::string& name) const {
  return Expect(*this, name, BlobKind::kFloat64, 0).values.at(0);
}

std::string Container::GetString(const std::string& name) const {
  return Expect(*this, name, BlobKind::kBytes, 1).bytes;
}

std::vector<std::string> Container::Names() const {
  std::vector<std::string> names;
  for (const auto& [name, blob] : sections_) names.push_back(name);
  return names;
}

std::string Container::Encode() const {
  std::vector<std::string> blobs;
  for (const auto& [name, blob] : sections_) blobs.push_back(EncodeBlob(blob));

  std::uint64_t header_size = 4 + 2 + 2 + 4 + 4;
  for (const auto& [name, blob] : sections_) header_size += 4 + name.size() + 16;

  ByteWriter w;
  w.Bytes({kMagic, 4});
  w.U32(static_cast<std::uint32_t>(major_) | (static_cast<std::uint32_t>(minor_) << 16));
  w.U32(static_cast<std::uint32_t>(sections_.size()));
  std::uint64_t offset = header_size;
  std::size_t i = 0;
  for (const auto& [name, blob] : sections_) {
    w.U32(static_cast<std::uint32_t>(name.size()));
    w.Bytes(name);
    w.U64(offset);
    w.U64(blobs[i].size());
    offset += blobs[i].size();
    ++i;
  }
  const std::uint32_t crc = CrcOf(w.str());
  w.U32(crc);
  for (const auto& b : blobs) w.Bytes(b);
  return std::move(w.str());
}

Container Container::Decode(const std::string& bytes) {
  ByteReader r(bytes, "model container");
  if (r.Bytes(4) != std::string_view(kMagic, 4)) {
    throw Error(ErrorKind::kFormat, "not a model container (bad magic)");
  }
  const std::uint32_t version = r.U32();
  Container c;
  c.major_ = static_cast<std::uint16_t>(version & 0xffffu);
  c.minor_ = static_cast<std::uint16_t>(version >> 16);
  if (c.major_ != kContainerMajor) {
    throw Error(ErrorKind::kVersion, "unsupported container major version " +
                                         std::to_string(c.major_) + " (supported: " +
                                         std::to_string(kContainerMajor) + ")");
  }
  const std::uint32_t count = r.U32();
  struct Entry {
    std::string name;
    std::uint64_t offset, length;
  };
  std::vector<Entry> table;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.name = std::string(r.Bytes(r.U32()));
    e.offset = r.U64();
    e.length = r.U64();
    table.push_back(std::move(e));
  }
  const std::size_t table_end = r.pos();
  if (r.U32() != CrcOf(std::string_view(bytes).substr(0, table_end))) {
    throw Error(ErrorKind::kChecksum, "checksum mismatch in container header");
  }
  for (const auto& e : table) {
    if (e.offset > bytes.size() || e.length > bytes.size() - e.offset) {
      throw Error(ErrorKind::kFormat, "model container: truncated file (section '" + e.name + "')");
    }
    c.sections_[e.name] = DecodeBlob(std::string_view(bytes).substr(e.offset, e.length), e.name);
  }
  return c;
}

void Container::Save(const std::string& path) const { WriteFileBytes(path, Encode()); }

Container Container::Load(const std::string& path) {
  try {
    return Decode(ReadFileBytes(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kIo) throw;
    throw Error(e.kind(), path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Typed objects

namespace {

void CheckType(const Container& c, const std::string& prefix, const std::string& type) {
  const std::string name = prefix + "type";
  if (!c.Has(name)) {
    throw Error(ErrorKind::kFormat, "container holds no " + type + " under '" + prefix + "'");
  }
  const std::string got = c.GetString(name);
  if (got != type) {
    throw Error(ErrorKind::kFormat, "expected a " + type + " under '" + prefix + "', found " + got);
  }
}

int GetInt(const Container& c, const std::string& name) {
  return static_cast<int>(c.GetScalar(name));
}

}  // namespace

std::string PackStrings(const std::vector<std::string>& items) {
  ByteWriter w;
  for (const auto& s : items) {
    w.U32(static_cast<std::uint32_t>(s.size()));
    w.Bytes(s);
  }
  return std::move(w.str());
}

std::vector<std::string> UnpackStrings(const std::string& packed) {
  ByteReader r(packed, "string list");
  std::vector<std::string> out;
  while (r.remaining() > 0) out.emplace_back(r.Bytes(r.U32()));
  return out;
}

void StoreCodingModel(Container& c, const CodingModel& m, const std::string& prefix) {
  c.PutString(prefix + "type", "coding_model");
  c.PutMatrix(prefix + "anchors", m.anchors());
  c.PutScalar(prefix + "mu", m.mu());
  c.PutString(prefix + "variant", VariantName(m.variant()));
}

CodingModel LoadCodingModel(const Container& c, const std::string& prefix) {
  CheckType(c, prefix, "coding_model");
  return CodingModel::Create(c.GetMatrix(prefix + "anchors"), c.GetScalar(prefix + "mu"),
                             ParseVariant(c.GetString(prefix + "variant")));
}

void StoreWhitening(Container& c, const WhiteningModel& m, const std::string& prefix) {
  c.PutString(prefix + "type", "whitening_model");
  c.PutVector(prefix + "mean", m.mean());
  c.PutMatrix(prefix + "projection", m.projection());
  c.PutVector(prefix + "eigenvalues", m.eigenvalues());
  c.PutScalar(prefix + "drop", m.drop());
  c.PutScalar(prefix + "keep", m.keep());
  c.PutScalar(prefix + "eps", m.eps());
}

WhiteningModel LoadWhitening(const Container& c, const std::string& prefix) {
  CheckType(c, prefix, "whitening_model");
  return WhiteningModel::FromParts(c.GetVector(prefix + "mean"), c.GetMatrix(prefix + "projection"),
                                   c.GetVector(prefix + "eigenvalues"), GetInt(c, prefix + "drop"),
                                   GetInt(c, prefix + "keep"), c.GetScalar(prefix + "eps"));
}

void StoreRotationNorm(Container& c, const RotationNormModel& m, const std::string& prefix) {
  StoreWhitening(c, m.rotation, prefix);
  c.PutString(prefix + "type", "rotation_norm_model");
}

RotationNormModel LoadRotationNorm(const Container& c, const std::string& prefix) {
  CheckType(c, prefix, "rotation_norm_model");
  return RotationNormModel{WhiteningModel::FromParts(
      c.GetVector(prefix + "mean"), c.GetMatrix(prefix + "projection"),
      c.GetVector(prefix + "eigenvalues"), GetInt(c, prefix + "drop"), GetInt(c, prefix + "keep"),
      c.GetScalar(prefix + "eps"))};
}

void StoreItq(Container& c, const ItqModel& m, const std::string& prefix) {
  c.PutString(prefix + "type", "itq_model");
  c.PutVector(prefix + "mean", m.mean);
  c.PutMatrix(prefix + "pca", m.pca);
  c.PutMatrix(prefix + "rotation", m.rotation);
}

ItqModel LoadItq(const Container& c, const std::string& prefix) {
  CheckType(c, prefix, "itq_model");
  ItqModel m{c.GetVector(prefix + "mean"), c.GetMatrix(prefix + "pca"),
             c.GetMatrix(prefix + "rotation")};
  if (m.pca.rows() != m.mean.size() || m.pca.cols() != m.rotation.rows() ||
      m.rotation.rows() != m.rotation.cols()) {
    throw Error(ErrorKind::kFormat, "ITQ model sections have inconsistent shapes");
  }
  return m;
}

void StoreSignatures(Container& c, const std::vector<ImageSignature>& sigs,
                     const std::string& prefix) {
  const Eigen::Index dim = sigs.empty() ? 0 : sigs.front().values.size();
  Matrix values(dim, static_cast<Eigen::Index>(sigs.size()));
  Vector degenerate(static_cast<Eigen::Index>(sigs.size()));
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < sigs.size(); ++i) {
    if (sigs[i].values.size() != dim) {
      throw Error(ErrorKind::kDimensionMismatch, "signatures differ in length");
    }
    values.col(static_cast<Eigen::Index>(i)) = sigs[i].values;
    degenerate[static_cast<Eigen::Index>(i)] = sigs[i].degenerate ? 1.0 : 0.0;
    ids.push_back(sigs[i].image_id);
  }
  c.PutString(prefix + "type", "signatures");
  c.PutString(prefix + "ids", PackStrings(ids));
  c.PutMatrix(prefix + "values", values);
  c.PutVector(prefix + "degenerate", degenerate);
}

std::vector<ImageSignature> LoadSignatures(const Container& c, const std::string& prefix) {
  CheckType(c, prefix, "signatures");
  const auto ids = UnpackStrings(c.GetString(prefix + "ids"));
  const Matrix values = c.GetMatrix(prefix + "values");
  const Vector degenerate = c.GetVector(prefix + "degenerate");
  if (static_cast<Eigen::Index>(ids.size()) != values.cols() ||
      degenerate.size() != values.cols()) {
    throw Error(ErrorKind::kFormat, "signature sections have inconsistent counts");
  }
  std::vector<ImageSignature> sigs;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    sigs.push_back({ids[i], values.col(col), degenerate[col] != 0.0});
  }
  return sigs;
}

void StoreCodes(Container& c, const std::vector<BinaryCode>& codes, const std::string& prefix) {
  const int bits = codes.empty() ? 0 : codes.front().num_bits;
  const std::size_t width = (static_cast<std::size_t>(bits) + 7) / 8;
  Blob packed;
  packed.kind = BlobKind::kBytes;
  packed.shape = {codes.size(), width};
  std::vector<std::string> ids;
  for (const auto& code : codes) {
    if (code.num_bits != bits || code.bytes.size() != width) {
      throw Error(ErrorKind::kDimensionMismatch, "binary codes differ in length");
    }
    packed.bytes.append(reinterpret_cast<const char*>(code.bytes.data()), width);
    ids.push_back(code.image_id);
  }
  c.PutString(prefix + "type", "binary_codes");
  c.PutString(prefix + "ids", PackStrings(ids));
  c.PutScalar(prefix + "bits", bits);
  c.PutBlob(prefix + "packed", std::move(packed));
}

std::vector<BinaryCode> LoadCodes(const Container& c, const std::string& prefix) {
  CheckType(c, prefix, "binary_codes");
  const auto ids = UnpackStrings(c.GetString(prefix + "ids"));
  const int bits = GetInt(c, prefix + "bits");
  const Blob& packed = Expect(c, prefix + "packed", BlobKind::kBytes, 2);
  const std::size_t width = (static_cast<std::size_t>(bits) + 7) / 8;
  if (packed.shape[0] != ids.size() || packed.shape[1] != width) {
    throw Error(ErrorKind::kFormat, "binary code sections have inconsistent sizes");
  }
  std::vector<BinaryCode> codes;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    BinaryCode code;
    code.image_id = ids[i];
    code.num_bits = bits;
    const auto* p = reinterpret_cast<const std::uint8_t*>(packed.bytes.data()) + i * width;
    code.bytes.assign(p, p + width);
    codes.push_back(std::move(code));
  }
  return codes;
}

void StoreIndex(Container& c, const RetrievalIndex& index, const std::string& prefix) {
  if (index.mode() == IndexMode::kReal) {
    std::vector<ImageSignature> sigs;
    for (std::size_t i = 0; i < index.size(); ++i) {
      sigs.push_back({index.ids()[i], index.vectors().col(static_cast<Eigen::Index>(i)), false});
    }
    StoreSignatures(c, sigs, prefix + "entries.");
  } else {
    StoreCodes(c, index.codes(), prefix + "entries.");
  }
  c.PutString(prefix + "type", index.mode() == IndexMode::kReal ? "index_real" : "index_binary");
}

RetrievalIndex LoadIndex(const Container& c, const std::string& prefix) {
  const std::string name = prefix + "type";
  if (!c.Has(name)) throw Error(ErrorKind::kFormat, "container holds no index under '" + prefix + "'");
  const std::string type = c.GetString(name);
  if (type == "index_real") return RetrievalIndex::FromSignatures(LoadSignatures(c, prefix + "entries."));
  if (type == "index_binary") return RetrievalIndex::FromCodes(LoadCodes(c, prefix + "entries."));
  throw Error(ErrorKind::kFormat, "expected an index under '" + prefix + "', found " + type);
}

}  // namespace faemb
