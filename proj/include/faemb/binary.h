#ifndef FAEMB_BINARY_H_
#define FAEMB_BINARY_H_

#include <cstdint>
#include <string>
#include <vector>

#include "faemb/core.h"

namespace faemb {

// PCA to `bits` dimensions followed by a learned orthogonal rotation.
struct ItqModel {
  Vector mean;      // D'
  Matrix pca;       // D' x b, top principal directions
  Matrix rotation;  // b x b, orthogonal
  int bits() const { return static_cast<int>(rotation.rows()); }
};

struct ItqFit {
  ItqModel model;
  std::vector<double> error_trace;  // ||B - V R||_F^2 after each iteration
};

// Rows of `projected` are PCA-projected samples V; sign(0) counts as +1.
double QuantizationError(const Matrix& projected, const Matrix& rotation);

// Columns of `signatures` are training signatures.
ItqFit FitItq(const Matrix& signatures, int bits, int iters = 50,
              std::uint64_t seed = 0);

// Packed code; bit k lives in byte k/8 at position k%8 (LSB first).
struct BinaryCode {
  std::string image_id;
  int num_bits = 0;
  std::vector<std::uint8_t> bytes;

  bool bit(int k) const { return (bytes[static_cast<std::size_t>(k / 8)] >> (k % 8)) & 1u; }
};

BinaryCode PackBits(const std::vector<bool>& bits, std::string image_id = {});

// Bit k is set iff (R^T P^T (psi - mean))_k >= 0.
BinaryCode EncodeItq(const Eigen::Ref<const Vector>& psi, const ItqModel& model,
                     std::string image_id = {});

int HammingDistance(const BinaryCode& a, const BinaryCode& b);

struct RankedItem {
  std::string image_id;
  double distance = 0.0;
  std::size_t index = 0;  // position in the database
};

// Ascending Hamming distance; ties keep database order.
std::vector<RankedItem> HammingRank(const BinaryCode& query,
                                    const std::vector<BinaryCode>& db);

}  // namespace faemb

#endif  // FAEMB_BINARY_H_
