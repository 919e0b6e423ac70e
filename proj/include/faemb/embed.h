#ifndef FAEMB_EMBED_H_
#define FAEMB_EMBED_H_

#include "faemb/coding.h"
#include "faemb/core.h"

namespace faemb {

// Scaling of the zeroth- and first-order blocks. With both zero (the
// default) only the second-order block is emitted.
struct EmbeddingConfig {
  double s1 = 0.0;
  double s2 = 0.0;

  bool second_order_only() const { return s1 == 0.0 && s2 == 0.0; }
};

// n * d(d+1)/2 with the default config, n * (1 + d + d(d+1)/2) otherwise.
Eigen::Index EmbeddingLength(Eigen::Index n, Eigen::Index d,
                             const EmbeddingConfig& cfg = {});

// Per anchor j: [s1 g_j ; s2 g_j (x - v_j) ; g_j SymFlatten((x-v_j)(x-v_j)^T)],
// blocks concatenated in anchor order.
Vector EmbedFaemb(const Eigen::Ref<const Vector>& x,
                  const Eigen::Ref<const Vector>& gamma,
                  const CodingModel& model, const EmbeddingConfig& cfg = {});

// Writes EmbedFaemb into `out` (length EmbeddingLength).
void EmbedFaembInto(const Eigen::Ref<const Vector>& x,
                    const Eigen::Ref<const Vector>& gamma, const Matrix& anchors,
                    const EmbeddingConfig& cfg, double* out);

// Index of the nearest anchor in Euclidean distance, lowest index on ties.
Eigen::Index NearestAnchor(const Eigen::Ref<const Vector>& x,
                           const Matrix& anchors);

// Hard-assignment residual embedding (length n*d).
Vector EmbedVlad(const Eigen::Ref<const Vector>& x, const Matrix& anchors);

// Hard-assignment second-order embedding (length n*d(d+1)/2).
Vector EmbedVlat(const Eigen::Ref<const Vector>& x, const Matrix& anchors);

// (M/6) sum_j |g_j| ||x - v_j||_1^3.
double BoundFaemb(const Eigen::Ref<const Vector>& x,
                  const Eigen::Ref<const Vector>& gamma, const Matrix& anchors,
                  double lipschitz);

// (n M/6) ||g||_2^2 sum_j ||x - v_j||_1^3.
double BoundFfaemb(const Eigen::Ref<const Vector>& x,
                   const Eigen::Ref<const Vector>& gamma, const Matrix& anchors,
                   double lipschitz);

}  // namespace faemb

#endif  // FAEMB_EMBED_H_
