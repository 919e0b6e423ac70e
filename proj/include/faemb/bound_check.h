#ifndef FAEMB_BOUND_CHECK_H_
#define FAEMB_BOUND_CHECK_H_

#include <functional>

#include "faemb/core.h"

namespace faemb {

// A smooth scalar function with derivative oracles, and a Lipschitz
// constant of its order-k derivative. Used to check numerically that
// the coefficient-weighted Taylor approximation stays within
//   M/(k+1)! * sum_j |g_j| ||x - v_j||_1^(k+1).
// This is a verification harness; nothing in the embedding pipeline uses it.
struct BoundInputs {
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> gradient;
  std::function<Matrix(const Vector&)> hessian;  // needed for order 2
  double lipschitz = 1.0;
  int order = 2;  // 1 or 2
};

struct TaylorBoundResult {
  double lhs = 0.0;  // |f(x) - sum_j g_j T_j(x)|
  double rhs = 0.0;  // bound
};

TaylorBoundResult TaylorApproxError(const BoundInputs& inputs,
                                    const Eigen::Ref<const Vector>& x,
                                    const Eigen::Ref<const Vector>& gamma,
                                    const Matrix& anchors);

}  // namespace faemb

#endif  // FAEMB_BOUND_CHECK_H_
