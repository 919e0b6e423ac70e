#include "faemb/bound_check.h"

#include <cmath>

namespace faemb {

TaylorBoundResult TaylorApproxError(const BoundInputs& inputs,
                                    const Eigen::Ref<const Vector>& x,
                                    const Eigen::Ref<const Vector>& gamma,
                                    const Matrix& anchors) {
  if (inputs.order != 1 && inputs.order != 2) {
    throw Error(ErrorKind::kInvalidArgument, "Taylor order must be 1 or 2");
  }
  if (!inputs.value || !inputs.gradient ||
      (inputs.order == 2 && !inputs.hessian)) {
    throw Error(ErrorKind::kInvalidArgument,
                "missing derivative oracle for the requested Taylor order");
  }
  if (!(inputs.lipschitz > 0) || !std::isfinite(inputs.lipschitz)) {
    throw Error(ErrorKind::kInvalidArgument, "Lipschitz constant must be finite and > 0");
  }
  if (x.size() != anchors.rows() || gamma.size() != anchors.cols()) {
    throw Error(ErrorKind::kDimensionMismatch, "inconsistent bound-check shapes");
  }
  const Vector xv = x;
  double approx = 0.0;
  double bound = 0.0;
  const int k = inputs.order;
  const double factorial = k == 1 ? 2.0 : 6.0;  // (k+1)!
  for (Eigen::Index j = 0; j < anchors.cols(); ++j) {
    const Vector v = anchors.col(j);
    const Vector h = xv - v;
    double taylor = inputs.value(v) + inputs.gradient(v).dot(h);
    if (k == 2) taylor += 0.5 * h.dot(inputs.hessian(v) * h);
    approx += gamma[j] * taylor;
    bound += std::abs(gamma[j]) * std::pow(h.cwiseAbs().sum(), k + 1);
  }
  return {std::abs(inputs.value(xv) - approx), inputs.lipschitz / factorial * bound};
}

}  // namespace faemb
