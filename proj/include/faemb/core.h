#ifndef FAEMB_CORE_H_
#define FAEMB_CORE_H_

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace faemb {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Error categories surface in the CLI's machine-readable error line.
enum class ErrorKind {
  kInvalidArgument,
  kDimensionMismatch,
  kNumerical,
  kIo,
  kFormat,
  kChecksum,
  kVersion,
  kConfig,
};

const char* ErrorKindName(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// One image's local descriptors, stored column-wise (d x count).
struct DescriptorSet {
  std::string image_id;
  Matrix descriptors;

  Eigen::Index dim() const { return descriptors.rows(); }
  Eigen::Index size() const { return descriptors.cols(); }
};

// Throws unless every set has dimension `dim` and only finite entries.
void ValidateDescriptorSets(const std::vector<DescriptorSet>& sets,
                            Eigen::Index dim);

// Stacks the descriptors of all sets into one d x total matrix.
Matrix StackDescriptors(const std::vector<DescriptorSet>& sets);

// Upper triangle (diagonal included) of a symmetric d x d matrix.
struct SymMatrix {
  int dim = 0;
  Vector upper;
};

constexpr Eigen::Index SymSize(Eigen::Index d) { return d * (d + 1) / 2; }

// Row-major walk of the upper triangle: (0,0),(0,1),...,(0,d-1),(1,1),...
// Rejects matrices whose asymmetry exceeds 1e-9 relative to max |A_ij|.
Vector SymFlatten(const Matrix& a);
SymMatrix ToSymMatrix(const Matrix& a);

// Inverse of SymFlatten; the length must be d(d+1)/2 for some integer d.
Matrix SymUnflatten(const Vector& upper);

// SymFlatten((x - v)(x - v)^T).
Vector ResidualTensor(const Eigen::Ref<const Vector>& x,
                      const Eigen::Ref<const Vector>& v);

// out[0 .. d(d+1)/2) = scale * SymFlatten((x - v)(x - v)^T), without
// materializing the d x d product.
void WriteResidualTensor(const Eigen::Ref<const Vector>& x,
                         const Eigen::Ref<const Vector>& v, double scale,
                         double* out);

// a_j = ||x - v_j||_1^3 for every anchor column v_j of `anchors`.
Vector L1DistCubed(const Eigen::Ref<const Vector>& x, const Matrix& anchors);

// Runs fn(begin, end) over [0, count) split into contiguous chunks across
// `threads` workers. Chunks are disjoint so writes indexed by item are safe.
void ParallelFor(std::size_t count, int threads,
                 const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace faemb

#endif  // FAEMB_CORE_H_
