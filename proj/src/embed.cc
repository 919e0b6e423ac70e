#include "faemb/embed.h"

#include <cmath>
#include <limits>

namespace faemb {

namespace {

void CheckDims(const Eigen::Ref<const Vector>& x, const Matrix& anchors) {
  if (x.size() != anchors.rows()) {
    throw Error(ErrorKind::kDimensionMismatch,
                "descriptor dimension does not match the anchors");
  }
}

}  // namespace

Eigen::Index EmbeddingLength(Eigen::Index n, Eigen::Index d,
                             const EmbeddingConfig& cfg) {
  const Eigen::Index block = cfg.second_order_only() ? SymSize(d) : 1 + d + SymSize(d);
  return n * block;
}

void EmbedFaembInto(const Eigen::Ref<const Vector>& x,
                    const Eigen::Ref<const Vector>& gamma, const Matrix& anchors,
                    const EmbeddingConfig& cfg, double* out) {
  const Eigen::Index d = anchors.rows();
  const bool full = !cfg.second_order_only();
  for (Eigen::Index j = 0; j < anchors.cols(); ++j) {
    const double g = gamma[j];
    if (full) {
      *out++ = cfg.s1 * g;
      for (Eigen::Index k = 0; k < d; ++k) *out++ = cfg.s2 * g * (x[k] - anchors(k, j));
    }
    WriteResidualTensor(x, anchors.col(j), g, out);
    out += SymSize(d);
  }
}

Vector EmbedFaemb(const Eigen::Ref<const Vector>& x,
                  const Eigen::Ref<const Vector>& gamma,
                  const CodingModel& model, const EmbeddingConfig& cfg) {
  CheckDims(x, model.anchors());
  if (gamma.size() != model.num_anchors()) {
    throw Error(ErrorKind::kDimensionMismatch,
                "coefficient length does not match the anchor count");
  }
  if (!(std::abs(gamma.sum() - 1.0) <= 1e-6)) {
    throw Error(ErrorKind::kInvalidArgument, "coefficients do not sum to one");
  }
  Vector out(EmbeddingLength(model.num_anchors(), model.dim(), cfg));
  EmbedFaembInto(x, gamma, model.anchors(), cfg, out.data());
  return out;
}

Eigen::Index NearestAnchor(const Eigen::Ref<const Vector>& x,
                           const Matrix& anchors) {
  CheckDims(x, anchors);
  Eigen::Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < anchors.cols(); ++j) {
    const double dd = (x - anchors.col(j)).squaredNorm();
    if (dd < best_d) {
      best_d = dd;
      best = j;
    }
  }
  return best;
}

Vector EmbedVlad(const Eigen::Ref<const Vector>& x, const Matrix& anchors) {
  const Eigen::Index j = NearestAnchor(x, anchors);
  const Eigen::Index d = anchors.rows();
  Vector out = Vector::Zero(anchors.cols() * d);
  out.segment(j * d, d) = x - anchors.col(j);
  return out;
}

Vector EmbedVlat(const Eigen::Ref<const Vector>& x, const Matrix& anchors) {
  const Eigen::Index j = NearestAnchor(x, anchors);
  const Eigen::Index block = SymSize(anchors.rows());
  Vector out = Vector::Zero(anchors.cols() * block);
  WriteResidualTensor(x, anchors.col(j), 1.0, out.data() + j * block);
  return out;
}

double BoundFaemb(const Eigen::Ref<const Vector>& x,
                  const Eigen::Ref<const Vector>& gamma, const Matrix& anchors,
                  double lipschitz) {
  return lipschitz / 6.0 * gamma.cwiseAbs().dot(L1DistCubed(x, anchors));
}

double BoundFfaemb(const Eigen::Ref<const Vector>& x,
                   const Eigen::Ref<const Vector>& gamma, const Matrix& anchors,
                   double lipschitz) {
  const auto n = static_cast<double>(anchors.cols());
  return n * lipschitz / 6.0 * gamma.squaredNorm() * L1DistCubed(x, anchors).sum();
}

}  // namespace faemb
