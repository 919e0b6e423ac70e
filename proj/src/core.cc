#include "faemb/core.h"

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>

namespace faemb {

const char* ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kDimensionMismatch: return "dimension_mismatch";
    case ErrorKind::kNumerical: return "numerical";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kChecksum: return "checksum";
    case ErrorKind::kVersion: return "version";
    case ErrorKind::kConfig: return "config";
  }
  return "unknown";
}

void ValidateDescriptorSets(const std::vector<DescriptorSet>& sets,
                            Eigen::Index dim) {
  if (dim < 1) {
    throw Error(ErrorKind::kInvalidArgument, "descriptor dimension must be >= 1");
  }
  for (const auto& set : sets) {
    if (set.dim() != dim) {
      std::ostringstream msg;
      msg << "image '" << set.image_id << "' has dimension " << set.dim()
          << ", expected " << dim;
      throw Error(ErrorKind::kDimensionMismatch, msg.str());
    }
    if (!set.descriptors.allFinite()) {
      throw Error(ErrorKind::kNumerical,
                  "image '" + set.image_id + "' has non-finite descriptor values");
    }
  }
}

Matrix StackDescriptors(const std::vector<DescriptorSet>& sets) {
  if (sets.empty()) return Matrix();
  Eigen::Index total = 0;
  for (const auto& s : sets) total += s.size();
  Matrix out(sets.front().dim(), total);
  Eigen::Index col = 0;
  for (const auto& s : sets) {
    out.middleCols(col, s.size()) = s.descriptors;
    col += s.size();
  }
  return out;
}

Vector SymFlatten(const Matrix& a) {
  if (a.rows() != a.cols()) {
    throw Error(ErrorKind::kDimensionMismatch, "SymFlatten needs a square matrix");
  }
  const Eigen::Index d = a.rows();
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  const double deviation = d == 0 ? 0.0 : (a - a.transpose()).cwiseAbs().maxCoeff();
  if (deviation > 1e-9 * scale) {
    std::ostringstream msg;
    msg << "matrix is not symmetric: max |A_ij - A_ji| = " << deviation;
    throw Error(ErrorKind::kInvalidArgument, msg.str());
  }
  Vector out(SymSize(d));
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = i; j < d; ++j) out[k++] = a(i, j);
  }
  return out;
}

SymMatrix ToSymMatrix(const Matrix& a) {
  return SymMatrix{static_cast<int>(a.rows()), SymFlatten(a)};
}

Matrix SymUnflatten(const Vector& upper) {
  const auto len = upper.size();
  const auto d = static_cast<Eigen::Index>(
      std::llround((std::sqrt(8.0 * static_cast<double>(len) + 1.0) - 1.0) / 2.0));
  if (SymSize(d) != len) {
    throw Error(ErrorKind::kDimensionMismatch,
                "length " + std::to_string(len) + " is not a triangle number");
  }
  Matrix a(d, d);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = i; j < d; ++j) {
      a(i, j) = upper[k];
      a(j, i) = upper[k];
      ++k;
    }
  }
  return a;
}

void WriteResidualTensor(const Eigen::Ref<const Vector>& x,
                         const Eigen::Ref<const Vector>& v, double scale,
                         double* out) {
  const Eigen::Index d = x.size();
  // Residual on the stack for the common descriptor sizes.
  constexpr Eigen::Index kStack = 256;
  double stack_buf[kStack];
  std::vector<double> heap_buf;
  double* r = stack_buf;
  if (d > kStack) {
    heap_buf.resize(static_cast<std::size_t>(d));
    r = heap_buf.data();
  }
  for (Eigen::Index i = 0; i < d; ++i) r[i] = x[i] - v[i];
  for (Eigen::Index i = 0; i < d; ++i) {
    const double ri = scale * r[i];
    for (Eigen::Index j = i; j < d; ++j) *out++ = ri * r[j];
  }
}

Vector ResidualTensor(const Eigen::Ref<const Vector>& x,
                      const Eigen::Ref<const Vector>& v) {
  if (x.size() != v.size()) {
    throw Error(ErrorKind::kDimensionMismatch,
                "descriptor and anchor dimensions differ");
  }
  Vector out(SymSize(x.size()));
  WriteResidualTensor(x, v, 1.0, out.data());
  return out;
}

Vector L1DistCubed(const Eigen::Ref<const Vector>& x, const Matrix& anchors) {
  if (x.size() != anchors.rows()) {
    throw Error(ErrorKind::kDimensionMismatch,
                "descriptor and anchor dimensions differ");
  }
  Vector a(anchors.cols());
  for (Eigen::Index j = 0; j < anchors.cols(); ++j) {
    const double l1 = (x - anchors.col(j)).cwiseAbs().sum();
    a[j] = l1 * l1 * l1;
  }
  return a;
}

void ParallelFor(std::size_t count, int threads,
                 const std::function<void(std::size_t, std::size_t)>& fn) {
  if (count == 0) return;
  const auto workers = static_cast<std::size_t>(
      std::clamp<long>(threads, 1, static_cast<long>(count)));
  if (workers == 1) {
    fn(0, count);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  pool.reserve(workers);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, &errors, w, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace faemb
