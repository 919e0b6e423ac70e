#include "faemb/binary.h"

#include <algorithm>
#include <bit>
#include <cstring>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

namespace faemb {

namespace {

Matrix SignMatrix(const Matrix& v) {
  return v.unaryExpr([](double a) { return a >= 0 ? 1.0 : -1.0; });
}

}  // namespace

double QuantizationError(const Matrix& projected, const Matrix& rotation) {
  const Matrix vr = projected * rotation;
  return (SignMatrix(vr) - vr).squaredNorm();
}

ItqFit FitItq(const Matrix& signatures, int bits, int iters, std::uint64_t seed) {
  const Eigen::Index dim = signatures.rows();
  const Eigen::Index count = signatures.cols();
  if (bits < 1 || bits > dim) {
    throw Error(ErrorKind::kInvalidArgument, "ITQ needs 1 <= bits <= D'");
  }
  if (count <= bits) {
    throw Error(ErrorKind::kInvalidArgument,
                "ITQ needs more training signatures than bits (count=" +
                    std::to_string(count) + ", bits=" + std::to_string(bits) + ")");
  }
  if (iters < 0) throw Error(ErrorKind::kInvalidArgument, "ITQ iterations must be >= 0");

  ItqFit fit;
  ItqModel& model = fit.model;
  model.mean = signatures.rowwise().mean();
  const Matrix centered = signatures.colwise() - model.mean;
  const Matrix cov = centered * centered.transpose() / static_cast<double>(count - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) {
    throw Error(ErrorKind::kNumerical, "ITQ covariance eigendecomposition failed");
  }
  const Vector values = eig.eigenvalues().reverse();
  if (!(values[bits - 1] > 1e-12 * values[0]) || !(values[0] > 0)) {
    throw Error(ErrorKind::kInvalidArgument,
                "ITQ bits exceed the rank of the training covariance");
  }
  model.pca = eig.eigenvectors().rowwise().reverse().leftCols(bits);
  const Matrix projected = centered.transpose() * model.pca;  // count x b

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix init(bits, bits);
  for (Eigen::Index c = 0; c < bits; ++c) {
    for (Eigen::Index r = 0; r < bits; ++r) init(r, c) = gauss(rng);
  }
  Eigen::HouseholderQR<Matrix> qr(init);
  model.rotation = qr.householderQ() * Matrix::Identity(bits, bits);

  for (int it = 0; it < iters; ++it) {
    const Matrix codes = SignMatrix(projected * model.rotation);
    // Orthogonal Procrustes: maximize tr(R^T V^T B).
    Eigen::JacobiSVD<Matrix> svd(projected.transpose() * codes,
                                 Eigen::ComputeFullU | Eigen::ComputeFullV);
    model.rotation = svd.matrixU() * svd.matrixV().transpose();
    const Matrix vr = projected * model.rotation;
    fit.error_trace.push_back((codes - vr).squaredNorm());
  }
  return fit;
}

BinaryCode PackBits(const std::vector<bool>& bits, std::string image_id) {
  BinaryCode code;
  code.image_id = std::move(image_id);
  code.num_bits = static_cast<int>(bits.size());
  code.bytes.assign((bits.size() + 7) / 8, 0);
  for (std::size_t k = 0; k < bits.size(); ++k) {
    if (bits[k]) code.bytes[k / 8] |= static_cast<std::uint8_t>(1u << (k % 8));
  }
  return code;
}

BinaryCode EncodeItq(const Eigen::Ref<const Vector>& psi, const ItqModel& model,
                     std::string image_id) {
  if (psi.size() != model.mean.size()) {
    throw Error(ErrorKind::kDimensionMismatch,
                "signature length does not match the ITQ model");
  }
  const Vector z = model.rotation.transpose() * (model.pca.transpose() * (psi - model.mean));
  std::vector<bool> bits(static_cast<std::size_t>(z.size()));
  for (Eigen::Index k = 0; k < z.size(); ++k) bits[static_cast<std::size_t>(k)] = z[k] >= 0;
  return PackBits(bits, std::move(image_id));
}

int HammingDistance(const BinaryCode& a, const BinaryCode& b) {
  if (a.num_bits != b.num_bits || a.bytes.size() != b.bytes.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "binary codes have different lengths");
  }
  int dist = 0;
  std::size_t i = 0;
  for (; i + 8 <= a.bytes.size(); i += 8) {
    std::uint64_t wa, wb;
    std::memcpy(&wa, a.bytes.data() + i, 8);
    std::memcpy(&wb, b.bytes.data() + i, 8);
    dist += std::popcount(wa ^ wb);
  }
  for (; i < a.bytes.size(); ++i) {
    dist += std::popcount(static_cast<unsigned>(a.bytes[i] ^ b.bytes[i]));
  }
  return dist;
}

std::vector<RankedItem> HammingRank(const BinaryCode& query,
                                    const std::vector<BinaryCode>& db) {
  std::vector<RankedItem> ranked;
  ranked.reserve(db.size());
  for (std::size_t i = 0; i < db.size(); ++i) {
    ranked.push_back({db[i].image_id, static_cast<double>(HammingDistance(query, db[i])), i});
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedItem& a, const RankedItem& b) { return a.distance < b.distance; });
  return ranked;
}

}  // namespace faemb
