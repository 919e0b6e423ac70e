#ifndef FAEMB_TESTS_TEST_UTIL_H_
#define FAEMB_TESTS_TEST_UTIL_H_

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "faemb/core.h"

namespace faemb::testutil {

inline Matrix Gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                       double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = g(rng);
  }
  return m;
}

inline Vector GaussianVector(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
  return Gaussian(n, 1, rng, scale).col(0);
}

inline int UniformInt(int lo, int hi, std::mt19937_64& rng) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// Random vector summing to one.
inline Vector FeasibleGamma(Eigen::Index n, std::mt19937_64& rng) {
  Vector g = GaussianVector(n, rng);
  g.array() += (1.0 - g.sum()) / static_cast<double>(n);
  return g;
}

// Orthonormal basis of {z : 1^T z = 0}, from Householder QR of the ones vector.
inline Matrix SumZeroBasis(Eigen::Index n) {
  Eigen::HouseholderQR<Matrix> qr(Matrix::Ones(n, 1));
  const Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  return q.rightCols(n - 1);
}

// argmin 1/2 g^T H g + f^T g  s.t. 1^T g = 1, by the null-space method:
// g = 1/n + Z y with Z^T H Z y = -Z^T (H/n 1 + f).
inline Vector EqualityQp(const Matrix& h, const Vector& f) {
  const Eigen::Index n = f.size();
  const Vector g0 = Vector::Constant(n, 1.0 / static_cast<double>(n));
  const Matrix z = SumZeroBasis(n);
  const Matrix reduced = z.transpose() * h * z;
  const Vector y = reduced.fullPivLu().solve(-z.transpose() * (h * g0 + f));
  return g0 + z * y;
}

// Scalar-loop versions of the per-descriptor quantities.
inline double L1CubedLoop(const Vector& x, const Matrix& c, Eigen::Index j) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) s += std::abs(x[k] - c(k, j));
  return s * s * s;
}

inline double FaembObjectiveLoop(const Vector& x, const Vector& g, const Matrix& c, double mu,
                                 bool relaxed) {
  double recon = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    double r = x[k];
    for (Eigen::Index j = 0; j < g.size(); ++j) r -= c(k, j) * g[j];
    recon += r * r;
  }
  double pen = 0.0;
  double sum_a = 0.0, sq = 0.0;
  for (Eigen::Index j = 0; j < g.size(); ++j) {
    const double a = L1CubedLoop(x, c, j);
    pen += std::abs(g[j]) * a;
    sum_a += a;
    sq += g[j] * g[j];
  }
  return 0.5 * recon + 0.5 * mu * (relaxed ? sq * sum_a : pen);
}

// Bitwise reflected CRC-32 (polynomial 0xEDB88320).
inline std::uint32_t Crc32Bitwise(const std::string& bytes) {
  std::uint32_t crc = 0xffffffffu;
  for (unsigned char ch : bytes) {
    crc ^= ch;
    for (int b = 0; b < 8; ++b) crc = (crc >> 1) ^ (0xedb88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

inline std::string TempPath(const std::string& name) {
  const char* dir = std::getenv("TMPDIR");
  return std::string(dir ? dir : "/tmp") + "/faemb_test_" + name;
}

}  // namespace faemb::testutil

#endif  // FAEMB_TESTS_TEST_UTIL_H_
