#ifndef FAEMB_CODING_H_
#define FAEMB_CODING_H_

#include <cstdint>
#include <string>
#include <vector>

#include "faemb/core.h"

namespace faemb {

enum class Variant { kFaemb, kFfaemb };

const char* VariantName(Variant v);
Variant ParseVariant(const std::string& name);

// Anchor points C = [v_1 .. v_n] (d x n), regularizer mu and the coder
// variant. Construct through Create(), which validates the anchors and
// caches C^T C for the per-descriptor solvers.
class CodingModel {
 public:
  CodingModel() = default;
  static CodingModel Create(Matrix anchors, double mu, Variant variant);

  const Matrix& anchors() const { return anchors_; }
  const Matrix& gram() const { return gram_; }
  // C^T C = U diag(eigenvalues) U^T, cached for the closed-form coder.
  const Vector& gram_eigenvalues() const { return gram_eigenvalues_; }
  const Matrix& gram_basis() const { return gram_basis_; }
  const Matrix& anchors_basis() const { return anchors_basis_; }  // C U
  const Vector& basis_ones() const { return basis_ones_; }        // U^T 1
  double mu() const { return mu_; }
  Variant variant() const { return variant_; }
  Eigen::Index dim() const { return anchors_.rows(); }
  Eigen::Index num_anchors() const { return anchors_.cols(); }

 private:
  Matrix anchors_;
  Matrix gram_;
  Vector gram_eigenvalues_;
  Matrix gram_basis_;
  Matrix anchors_basis_;
  Vector basis_ones_;
  double mu_ = 1e-2;
  Variant variant_ = Variant::kFfaemb;
};

struct SolverParams {
  int max_outer_iters = 20;      // T
  double outer_tol = 1e-6;       // stop when |Q(t) - Q(t-1)| < outer_tol
  double newton_tol = 1e-6;      // stop when decrement^2 / 2 <= newton_tol
  double newton_step = 0.1;      // fixed Newton step size, in (0, 1]
  int newton_max_iters = 500;

  void Validate() const;
};

struct SolveInfo {
  int iterations = 0;
  bool converged = true;
  // Newton decrement squared at the last evaluated point.
  double decrement_sq = 0.0;
  // Max-norm of the smallest element of the Lagrangian subdifferential.
  double stationarity = 0.0;
  // Lagrange multiplier of the sum-to-one constraint.
  double multiplier = 0.0;
};

// Coefficient vector gamma(x); always sums to one.
struct Coefficients {
  Vector gamma;
  SolveInfo info;
};

// Lloyd K-means with k-means++ seeding. Empty clusters are re-seeded to the
// point farthest from its assigned centroid. Returns d x n centroids.
Matrix KMeansInit(const Matrix& points, int n, std::uint64_t seed,
                  int max_iters = 100);

// Closed-form minimizer of the relaxed (l2 penalty) per-descriptor objective.
// The penalty only shifts the spectrum of C^T C, so each call is a few n x n
// products against the cached eigenbasis.
Coefficients FfaembGamma(const Eigen::Ref<const Vector>& x,
                         const CodingModel& model);

// Equality-constrained Newton iterations on the l1-weighted per-descriptor
// objective. Starts from `warm_start` when given (must be feasible), else
// from the uniform vector 1/n. Each step solves the bordered KKT system on
// the non-zero coordinates; steps that would carry a coefficient across zero
// stop at zero, and zero coefficients are released only when the
// subgradient condition is violated.
Coefficients FaembGamma(const Eigen::Ref<const Vector>& x,
                        const CodingModel& model, const SolverParams& params,
                        const Vector* warm_start = nullptr);

// Dispatches on model.variant().
Coefficients ComputeGamma(const Eigen::Ref<const Vector>& x,
                          const CodingModel& model, const SolverParams& params,
                          const Vector* warm_start = nullptr);

// Coefficients for every column of `points` (n x m result).
Matrix ComputeGammas(const Matrix& points, const CodingModel& model,
                     const SolverParams& params, int threads,
                     const Matrix* warm_start = nullptr,
                     std::vector<SolveInfo>* infos = nullptr);

// Per-descriptor objective:
//   FAemb:   1/2 ||x - C g||^2 + mu/2 sum_j |g_j| a_j
//   F-FAemb: 1/2 ||x - C g||^2 + mu/2 ||g||^2 sum_j a_j
double SampleObjective(const Eigen::Ref<const Vector>& x,
                       const Eigen::Ref<const Vector>& gamma,
                       const CodingModel& model);

// Gradient of SampleObjective w.r.t. gamma, with sign(0) = 0.
Vector SampleObjectiveGradient(const Eigen::Ref<const Vector>& x,
                               const Eigen::Ref<const Vector>& gamma,
                               const CodingModel& model);

// Mean of SampleObjective over the columns of `points`. Throws when a
// coefficient column does not sum to one within 1e-6.
double Objective(const Matrix& points, const Matrix& gammas,
                 const CodingModel& model);

// Same objective evaluated with an arbitrary anchor matrix (model supplies
// mu and the variant).
double ObjectiveWithAnchors(const Matrix& points, const Matrix& gammas,
                            const Matrix& anchors, const CodingModel& model);

// Gradient of Objective w.r.t. the anchors (d x n).
Matrix ObjectiveGradientAnchors(const Matrix& points, const Matrix& gammas,
                                const Matrix& anchors, const CodingModel& model);

struct AnchorUpdateOptions {
  int max_iters = 50;
  double decrement_tol = 1e-16;
};

// Damped Newton descent on the anchors with gammas fixed. The Hessian is the
// exact reconstruction block plus the block-diagonal penalty Hessian;
// backtracking guarantees the objective never increases.
Matrix UpdateAnchors(const Matrix& points, const Matrix& gammas,
                     const Matrix& anchors_init, const CodingModel& model,
                     const AnchorUpdateOptions& options = {});

struct TrainingOptions {
  int num_anchors = 8;
  double mu = 1e-2;
  Variant variant = Variant::kFfaemb;
  SolverParams solver;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct TrainingResult {
  CodingModel model;
  Matrix gammas;               // n x m coefficients of the training points
  std::vector<double> trace;   // objective after init and each iteration
  int iterations = 0;
};

// Alternating minimization: K-means anchors, then repeated anchor and
// coefficient updates until T iterations or the objective change drops
// below outer_tol.
TrainingResult TrainCoding(const Matrix& points, const TrainingOptions& options);

}  // namespace faemb

#endif  // FAEMB_CODING_H_
