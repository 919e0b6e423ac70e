#ifndef FAEMB_AGGREGATE_H_
#define FAEMB_AGGREGATE_H_

#include <string>

#include "faemb/core.h"

namespace faemb {

// PCA whitening: phi_w = diag(lambda^-1/2) P^T (phi - mean), keeping the
// components [drop, drop + keep) in descending eigenvalue order.
class WhiteningModel {
 public:
  WhiteningModel() = default;

  // Columns of `samples` are training vectors. `rel_eps` floors every
  // eigenvalue at rel_eps * lambda_1 before the inverse square root.
  // keep < 0 means "everything after the dropped components".
  static WhiteningModel Fit(const Matrix& samples, int drop,
                            double rel_eps = 1e-10, int keep = -1);

  static WhiteningModel FromParts(Vector mean, Matrix projection,
                                  Vector eigenvalues, int drop, int keep,
                                  double eps);

  Vector Apply(const Eigen::Ref<const Vector>& phi) const;
  // Columns in, columns out.
  Matrix ApplyBatch(const Matrix& phi) const;

  const Vector& mean() const { return mean_; }
  const Matrix& projection() const { return projection_; }
  const Vector& eigenvalues() const { return eigenvalues_; }
  int drop() const { return drop_; }
  int keep() const { return keep_; }
  double eps() const { return eps_; }
  Eigen::Index input_dim() const { return mean_.size(); }
  Eigen::Index output_dim() const { return keep_; }

 private:
  void BuildScale();

  Vector mean_;
  Matrix projection_;   // D x D eigenvectors, descending eigenvalues
  Vector eigenvalues_;  // descending, unfloored
  int drop_ = 0;
  int keep_ = 0;
  double eps_ = 0.0;    // absolute eigenvalue floor
  Vector scale_;        // floored lambda^-1/2 of the kept components
};

WhiteningModel FitWhitening(const Matrix& samples, int drop,
                            double rel_eps = 1e-10);
Vector Whiten(const Eigen::Ref<const Vector>& phi, const WhiteningModel& model);

struct DemocraticResult {
  Vector weights;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;  // max_i |lambda_i phi_i^T psi - 1| over used vectors
};

// Weights with lambda_i phi_i^T sum_j lambda_j phi_j = 1 for every vector.
// Scaling iterations on the Gram matrix with negative entries clamped give
// the starting point; if the exact condition is not yet met, Newton steps on
// the convex potential 1/2 l^T K l - sum_i log l_i refine it. Vectors with
// norm below 1e-10 get weight 0 and are left out.
DemocraticResult DemocraticWeights(const Matrix& phi_w, int max_iters = 100,
                                   double tol = 1e-3);

struct ImageSignature {
  std::string image_id;
  Vector values;
  bool degenerate = false;  // zero vector: nothing to normalize
};

// sum_i weights_i * phi_w.col(i)
Vector AggregateImage(const Matrix& phi_w, const Vector& weights);

// a -> sign(a) |a|^alpha, componentwise.
Vector PowerLaw(const Vector& v, double alpha);

ImageSignature L2Normalize(const Vector& v, std::string image_id = {});

// Whitening learned on aggregated signatures, then truncation to the first
// `keep` components and unit re-normalization.
struct RotationNormModel {
  WhiteningModel rotation;
  int keep() const { return rotation.keep(); }
};

RotationNormModel FitRotationNorm(const Matrix& signatures, int keep,
                                  double rel_eps = 1e-10);
ImageSignature ApplyRotationNorm(const ImageSignature& psi,
                                 const RotationNormModel& model);

}  // namespace faemb

#endif  // FAEMB_AGGREGATE_H_
